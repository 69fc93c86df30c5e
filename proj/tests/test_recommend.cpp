#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "relex/errors.hpp"
#include "relex/pipeline.hpp"
#include "relex/recommend.hpp"

using namespace relex;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, std::mt19937_64& rng) {
    Tensor t(shape);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

struct Fixture {
    fs::path dir;
    ItemCatalog catalog;
    Model model;

    explicit Fixture(const std::string& name, std::size_t items = 10, std::size_t categories = 2)
        : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::mt19937_64 rng(3);
        for (std::size_t i = 0; i < items; ++i) {
            const std::string id = "item" + std::to_string(i);
            const std::string path = (dir / (id + ".pgm")).string();
            std::ofstream out(path, std::ios::binary);
            out << "P5\n6 6\n255\n";
            for (int p = 0; p < 36; ++p) {
                out.put(static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng)));
            }
            out.close();
            catalog.items.push_back({id, "cat" + std::to_string(i % categories), path});
            catalog.index[id] = i;
        }
        for (std::size_t c = 0; c < categories; ++c) {
            catalog.categories.push_back("cat" + std::to_string(c));
        }
        model.stack = init_stack({LayerSpec::conv(1, 2, 3, 1, 1, false), LayerSpec::relu(),
                                  LayerSpec::maxpool(2, 2), LayerSpec::flatten(),
                                  LayerSpec::dense(2 * 3 * 3, 4, false)},
                                 {1, 6, 6}, 7);
        model.metrics[kGlobalUser] = UserMetric{kGlobalUser, random_tensor({3, 4}, rng)};
        model.metrics["u0"] = UserMetric{"u0", random_tensor({3, 4}, rng)};
        model.q = 1.0;
        model.metric_rank = 3;
    }
    ~Fixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("recommend matches the exhaustive sort oracle") {
    Fixture fix("relex_rec_oracle");
    const FeatureIndex index(fix.model, fix.catalog);
    const std::size_t k = fix.catalog.items.size();  // full ranking
    const RecommendationList list = recommend(fix.model, index, fix.catalog, "item0", "u0",
                                              RelationType::AlsoViewed, k);

    // brute-force oracle: compute all probabilities and sort per category
    const Tensor query_features = index.features("item0");
    std::map<std::string, std::vector<Recommendation>> want;
    for (const Item& item : fix.catalog.items) {
        if (item.id == "item0") continue;
        const double p = fix.model.pair_probability("u0", query_features, index.features(item.id));
        want[item.category].push_back({item.id, p});
    }
    for (auto& [category, recs] : want) {
        std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
            if (a.probability != b.probability) return a.probability > b.probability;
            return a.item < b.item;
        });
    }
    REQUIRE(list.per_category.size() == want.size());
    for (const auto& [category, recs] : want) {
        const auto& got = list.per_category.at(category);
        REQUIRE(got.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(got[i].item == recs[i].item);
            CHECK(got[i].probability == recs[i].probability);
        }
    }
}

TEST_CASE("recommend invariants: ordering, exclusion, truncation") {
    Fixture fix("relex_rec_inv");
    const FeatureIndex index(fix.model, fix.catalog);
    const RecommendationList list = recommend(fix.model, index, fix.catalog, "item3", "u0",
                                              RelationType::AlsoBought, 3);
    for (const auto& [category, recs] : list.per_category) {
        CHECK(recs.size() <= 3);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(recs[i].item != "item3");
            if (i > 0) CHECK(recs[i].probability <= recs[i - 1].probability);
        }
    }
}

TEST_CASE("ranking is invariant to shifting q") {
    Fixture fix("relex_rec_shift");
    const FeatureIndex index(fix.model, fix.catalog);
    const RecommendationList base = recommend(fix.model, index, fix.catalog, "item1", "u0",
                                              RelationType::AlsoViewed, 5);
    Model shifted = fix.model;
    shifted.q += 2.5;
    const FeatureIndex index2(shifted, fix.catalog);
    const RecommendationList moved = recommend(shifted, index2, fix.catalog, "item1", "u0",
                                               RelationType::AlsoViewed, 5);
    REQUIRE(base.per_category.size() == moved.per_category.size());
    for (const auto& [category, recs] : base.per_category) {
        const auto& other = moved.per_category.at(category);
        REQUIRE(other.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) CHECK(other[i].item == recs[i].item);
    }
}

TEST_CASE("catalog containing only the query yields an empty list") {
    Fixture fix("relex_rec_single", 1, 1);
    const FeatureIndex index(fix.model, fix.catalog);
    const RecommendationList list = recommend(fix.model, index, fix.catalog, "item0", "u0",
                                              RelationType::AlsoViewed, 3);
    for (const auto& [category, recs] : list.per_category) CHECK(recs.empty());
}

TEST_CASE("unknown query and empty category filter behavior") {
    Fixture fix("relex_rec_missing");
    const FeatureIndex index(fix.model, fix.catalog);
    CHECK_THROWS_AS(recommend(fix.model, index, fix.catalog, "ghost", "u0",
                              RelationType::AlsoViewed, 3),
                    LookupError);
    const RecommendationList empty = recommend(fix.model, index, fix.catalog, "item0", "u0",
                                               RelationType::AlsoViewed, 3, "no_such_category");
    std::size_t total = 0;
    for (const auto& [category, recs] : empty.per_category) total += recs.size();
    CHECK(total == 0);
}

TEST_CASE("unseen user falls back to the global metric") {
    Fixture fix("relex_rec_cold");
    const FeatureIndex index(fix.model, fix.catalog);
    const RecommendationList cold = recommend(fix.model, index, fix.catalog, "item0", "stranger",
                                              RelationType::AlsoViewed, 3);
    const RecommendationList global = recommend(fix.model, index, fix.catalog, "item0",
                                                kGlobalUser, RelationType::AlsoViewed, 3);
    REQUIRE(cold.per_category.size() == global.per_category.size());
    for (const auto& [category, recs] : cold.per_category) {
        const auto& other = global.per_category.at(category);
        REQUIRE(other.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(other[i].item == recs[i].item);
            CHECK(other[i].probability == recs[i].probability);
        }
    }
}

TEST_CASE("recommend is read-only with respect to the checkpoint") {
    Fixture fix("relex_rec_ro");
    const std::string path = (fix.dir / "model.ckpt").string();
    save_model(fix.model, path);
    const std::uint64_t before = file_hash_fnv1a(path);
    const FeatureIndex index(fix.model, fix.catalog);
    recommend(fix.model, index, fix.catalog, "item0", "u0", RelationType::AlsoViewed, 3);
    CHECK(file_hash_fnv1a(path) == before);
}

TEST_CASE("explain_recommendation delegates with conservation") {
    Fixture fix("relex_rec_explain");
    const HeatmapPair pair = explain_recommendation(fix.model, fix.catalog, "item0", "item2",
                                                    "u0", 0.0);
    const double total = pair.left.sum() + pair.right.sum();
    CHECK(std::abs(total - pair.prediction) <= 1e-8 * std::max(1.0, std::abs(pair.prediction)));
}

TEST_CASE("recommendations jsonl layout") {
    Fixture fix("relex_rec_jsonl");
    const FeatureIndex index(fix.model, fix.catalog);
    const RecommendationList list = recommend(fix.model, index, fix.catalog, "item0", "u0",
                                              RelationType::AlsoViewed, 2);
    const std::string path = (fix.dir / "recs.jsonl").string();
    write_recommendations_jsonl(list, path);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.find("\"query\":\"item0\"") != std::string::npos);
        CHECK(line.find("\"user\":\"u0\"") != std::string::npos);
        CHECK(line.find("\"rank\":") != std::string::npos);
    }
    std::size_t expect = 0;
    for (const auto& [category, recs] : list.per_category) expect += recs.size();
    CHECK(lines == expect);
}
