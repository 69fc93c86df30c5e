#include "relex/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "relex/errors.hpp"
#include "relex/image_io.hpp"

namespace fs = std::filesystem;

namespace relex {

std::string relation_type_name(RelationType type) {
    switch (type) {
        case RelationType::AlsoViewed: return "also_viewed";
        case RelationType::BuyAfterViewing: return "buy_after_viewing";
        case RelationType::AlsoBought: return "also_bought";
        case RelationType::BoughtTogether: return "bought_together";
    }
    return "?";
}

RelationType parse_relation_type(const std::string& name) {
    if (name == "also_viewed") return RelationType::AlsoViewed;
    if (name == "buy_after_viewing") return RelationType::BuyAfterViewing;
    if (name == "also_bought") return RelationType::AlsoBought;
    if (name == "bought_together") return RelationType::BoughtTogether;
    throw IngestError("unknown relation type: " + name);
}

std::vector<RelationType> all_relation_types() {
    return {RelationType::AlsoViewed, RelationType::BuyAfterViewing, RelationType::AlsoBought,
            RelationType::BoughtTogether};
}

const Item& ItemCatalog::at(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw LookupError("unknown item: " + id);
    return items[it->second];
}

namespace {

std::string pair_key(const std::string& user, const std::string& a, const std::string& b,
                     RelationType type) {
    const std::string& lo = a < b ? a : b;
    const std::string& hi = a < b ? b : a;
    return user + '\x1f' + relation_type_name(type) + '\x1f' + lo + '\x1f' + hi;
}

}  // namespace

void RelationGraph::add(Edge edge) {
    keys_.insert(pair_key(edge.user, edge.src, edge.dst, edge.type));
    userless_keys_.insert(pair_key("", edge.src, edge.dst, edge.type));
    edges.push_back(std::move(edge));
}

bool RelationGraph::has_pair(const std::string& user, const std::string& a, const std::string& b,
                             RelationType type) const {
    return keys_.count(pair_key(user, a, b, type)) > 0;
}

bool RelationGraph::has_pair_any_user(const std::string& a, const std::string& b,
                                      RelationType type) const {
    return userless_keys_.count(pair_key("", a, b, type)) > 0;
}

std::pair<ItemCatalog, RelationGraph> ingest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IngestError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    ItemCatalog catalog;
    RelationGraph graph;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> category_labels;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = manifest_path + ":" + std::to_string(line_no);
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw IngestError("unparseable manifest line at " + where);
        }
        if (j.contains("item")) {
            Item item;
            item.id = j.at("item").get<std::string>();
            item.category = j.at("category").get<std::string>();
            const std::string rel = j.at("image").get<std::string>();
            item.image_path = (base / rel).string();
            if (catalog.contains(item.id)) {
                throw IngestError("duplicate item id '" + item.id + "' at " + where);
            }
            if (!fs::exists(item.image_path)) {
                throw IngestError("missing image file '" + item.image_path + "' at " + where);
            }
            category_labels.push_back(item.category);
            catalog.index[item.id] = catalog.items.size();
            catalog.items.push_back(std::move(item));
        } else if (j.contains("src")) {
            Edge edge;
            edge.user = j.at("user").get<std::string>();
            edge.src = j.at("src").get<std::string>();
            edge.dst = j.at("dst").get<std::string>();
            try {
                edge.type = parse_relation_type(j.at("type").get<std::string>());
            } catch (const IngestError& e) {
                throw IngestError(std::string(e.what()) + " at " + where);
            }
            if (edge.src == edge.dst) throw IngestError("self-edge at " + where);
            if (!catalog.contains(edge.src) || !catalog.contains(edge.dst)) {
                throw IngestError("edge references unknown item at " + where);
            }
            graph.add(std::move(edge));
        } else {
            throw IngestError("manifest line is neither item nor edge at " + where);
        }
    }

    std::sort(category_labels.begin(), category_labels.end());
    category_labels.erase(std::unique(category_labels.begin(), category_labels.end()),
                          category_labels.end());
    catalog.categories = std::move(category_labels);
    return {std::move(catalog), std::move(graph)};
}

void write_manifest(const ItemCatalog& catalog, const RelationGraph& graph,
                    const std::string& manifest_path) {
    const fs::path base = fs::path(manifest_path).parent_path();
    const std::string tmp = manifest_path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IngestError("cannot open manifest for writing: " + tmp);
        for (const Item& item : catalog.items) {
            nlohmann::json j;
            j["item"] = item.id;
            j["category"] = item.category;
            j["image"] = fs::path(item.image_path).lexically_relative(base).string();
            out << j.dump() << "\n";
        }
        for (const Edge& edge : graph.edges) {
            nlohmann::json j;
            j["user"] = edge.user;
            j["src"] = edge.src;
            j["dst"] = edge.dst;
            j["type"] = relation_type_name(edge.type);
            out << j.dump() << "\n";
        }
    }
    if (std::rename(tmp.c_str(), manifest_path.c_str()) != 0) {
        throw IngestError("cannot rename manifest into place: " + manifest_path);
    }
}

SplitSpec make_split(const RelationGraph& graph, std::uint64_t seed, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw SplitError("split fraction must lie in (0,1), got " + std::to_string(fraction));
    }
    if (graph.edges.size() < 2) throw SplitError("graph too small to split");

    SplitSpec split;
    split.seed = seed;
    split.fraction = fraction;

    std::map<RelationType, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < graph.edges.size(); ++i) {
        by_type[graph.edges[i].type].push_back(i);
    }
    std::mt19937_64 rng(seed);
    for (auto& [type, indices] : by_type) {
        std::shuffle(indices.begin(), indices.end(), rng);
        const std::size_t test_count =
            static_cast<std::size_t>(
                std::floor((1.0 - fraction) * static_cast<double>(indices.size()) + 1e-9));
        for (std::size_t i = 0; i < indices.size(); ++i) {
            (i < test_count ? split.test_edges : split.train_edges).push_back(indices[i]);
        }
    }
    std::sort(split.train_edges.begin(), split.train_edges.end());
    std::sort(split.test_edges.begin(), split.test_edges.end());
    return split;
}

namespace {

constexpr std::size_t kMotifSize = 6;

// 6x6 stencils, one per motif class (mod 8).
const char* motif_stencil(std::size_t motif_class) {
    static const char* stencils[8] = {
        // filled square
        "######"
        "######"
        "######"
        "######"
        "######"
        "######",
        // hollow square
        "######"
        "#....#"
        "#....#"
        "#....#"
        "#....#"
        "######",
        // plus
        "..##.."
        "..##.."
        "######"
        "######"
        "..##.."
        "..##..",
        // diagonal cross
        "#....#"
        "##..##"
        ".####."
        ".####."
        "##..##"
        "#....#",
        // horizontal stripes
        "######"
        "......"
        "######"
        "......"
        "######"
        "......",
        // vertical stripes
        "#.#.#."
        "#.#.#."
        "#.#.#."
        "#.#.#."
        "#.#.#."
        "#.#.#.",
        // diamond
        "..##.."
        ".####."
        "######"
        "######"
        ".####."
        "..##..",
        // checkerboard
        "##..##"
        "##..##"
        "..##.."
        "..##.."
        "##..##"
        "##..##",
    };
    return stencils[motif_class % 8];
}

}  // namespace

std::size_t motif_area(std::size_t motif_class) {
    const char* s = motif_stencil(motif_class);
    std::size_t n = 0;
    for (std::size_t i = 0; i < kMotifSize * kMotifSize; ++i) {
        if (s[i] == '#') ++n;
    }
    return n;
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
    if (spec.items < 2 || spec.users == 0 || spec.motif_classes == 0 || spec.categories == 0) {
        throw ConfigError("synthetic spec needs >=2 items and >=1 user/class/category");
    }
    if (spec.height < kMotifSize || spec.width < kMotifSize) {
        throw ConfigError("synthetic images must be at least " + std::to_string(kMotifSize) +
                          " pixels per side");
    }
    if (spec.channels != 1 && spec.channels != 3) {
        throw ConfigError("synthetic channels must be 1 (PGM) or 3 (PPM)");
    }
    fs::create_directories(spec.out_dir);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> bg(0.0, 0.15);
    std::uniform_real_distribution<double> fg(0.85, 1.0);

    const std::size_t n = spec.items;
    std::vector<std::size_t> motif_class(n);
    ItemCatalog catalog;
    RelationGraph graph;

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % spec.motif_classes;
        motif_class[i] = cls;

        Tensor image({spec.channels, spec.height, spec.width});
        for (std::size_t v = 0; v < image.size(); ++v) image[v] = bg(rng);
        Tensor mask({1, spec.height, spec.width});

        std::uniform_int_distribution<std::size_t> py(0, spec.height - kMotifSize);
        std::uniform_int_distribution<std::size_t> px(0, spec.width - kMotifSize);
        const std::size_t oy = py(rng), ox = px(rng);
        const char* stencil = motif_stencil(cls);
        for (std::size_t y = 0; y < kMotifSize; ++y) {
            for (std::size_t x = 0; x < kMotifSize; ++x) {
                if (stencil[y * kMotifSize + x] != '#') continue;
                const double v = fg(rng);
                for (std::size_t c = 0; c < spec.channels; ++c) {
                    image.at(c, oy + y, ox + x) = v;
                }
                mask.at(0, oy + y, ox + x) = 1.0;
            }
        }

        char id_buf[32];
        std::snprintf(id_buf, sizeof id_buf, "item_%04zu", i);
        const std::string stem = std::string(id_buf);
        const std::string ext = spec.channels == 1 ? ".pgm" : ".ppm";
        const std::string image_path = (fs::path(spec.out_dir) / (stem + ext)).string();
        const std::string mask_path = (fs::path(spec.out_dir) / (stem + ".mask.pgm")).string();
        if (spec.channels == 1) {
            encode_pgm(image, image_path);
        } else {
            encode_ppm(image, image_path);
        }
        encode_pgm(mask, mask_path);

        Item item;
        item.id = stem;
        item.category = "cat" + std::to_string(cls % spec.categories);
        item.image_path = image_path;
        catalog.index[item.id] = catalog.items.size();
        catalog.items.push_back(std::move(item));
    }

    // Planted rule: equal motif class => related, edge type = class mod 4.
    // Users carry motif preferences: an edge of class c usually belongs to
    // user (c mod users).
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_user(0, spec.users - 1);
    std::uniform_int_distribution<std::size_t> any_item(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (motif_class[i] != motif_class[j]) continue;
            Edge edge;
            const std::size_t cls = motif_class[i];
            edge.type = all_relation_types()[cls % kRelationTypeCount];
            const std::size_t preferred = cls % spec.users;
            edge.user = "user" + std::to_string(unit(rng) < 0.7 ? preferred : any_user(rng));
            edge.src = catalog.items[i].id;
            edge.dst = catalog.items[j].id;
            if (spec.noise > 0.0 && unit(rng) < spec.noise) {
                // Rewire against the rule: the edge now contradicts the motifs.
                std::size_t k = any_item(rng);
                for (int tries = 0; tries < 64 && (motif_class[k] == cls || k == i); ++tries) {
                    k = any_item(rng);
                }
                if (motif_class[k] == cls || k == i) continue;
                edge.dst = catalog.items[k].id;
            }
            if (graph.has_pair(edge.user, edge.src, edge.dst, edge.type)) continue;
            graph.add(std::move(edge));
        }
    }

    std::vector<std::string> cats;
    for (const Item& item : catalog.items) cats.push_back(item.category);
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    catalog.categories = std::move(cats);

    SyntheticResult result;
    result.manifest_path = (fs::path(spec.out_dir) / "manifest.jsonl").string();
    write_manifest(catalog, graph, result.manifest_path);
    result.catalog = std::move(catalog);
    result.graph = std::move(graph);
    result.motif_class = std::move(motif_class);
    return result;
}

}  // namespace relex
