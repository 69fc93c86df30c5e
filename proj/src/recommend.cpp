#include "relex/recommend.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "relex/errors.hpp"

namespace relex {

RecommendationList recommend(const Model& model, const FeatureIndex& index,
                             const ItemCatalog& catalog, const std::string& query,
                             const std::string& user, RelationType type, std::size_t k,
                             const std::string& category_filter) {
    if (!catalog.contains(query)) throw LookupError("unknown query item: " + query);
    const Tensor& query_features = index.features(query);

    RecommendationList list;
    list.query = query;
    list.user = user;
    list.type = type;

    std::map<std::string, std::vector<Recommendation>> candidates;
    for (const Item& item : catalog.items) {
        if (item.id == query) continue;
        if (!category_filter.empty() && item.category != category_filter) continue;
        const double p = model.pair_probability(user, query_features, index.features(item.id));
        candidates[item.category].push_back({item.id, p});
    }
    for (auto& [category, recs] : candidates) {
        std::sort(recs.begin(), recs.end(), [](const Recommendation& a, const Recommendation& b) {
            if (a.probability != b.probability) return a.probability > b.probability;
            return a.item < b.item;
        });
        if (recs.size() > k) recs.resize(k);
        list.per_category.emplace(category, std::move(recs));
    }
    if (!category_filter.empty() && list.per_category.count(category_filter) == 0) {
        list.per_category.emplace(category_filter, std::vector<Recommendation>{});
    }
    return list;
}

HeatmapPair explain_recommendation(const Model& model, const ItemCatalog& catalog,
                                   const std::string& query, const std::string& recommended,
                                   const std::string& user, double epsilon) {
    const Tensor left = load_item_image(catalog.at(query), model.stack.input_shape);
    const Tensor right = load_item_image(catalog.at(recommended), model.stack.input_shape);
    return explain_pair(model.stack, model.metric_for(user), model.q, left, right, epsilon);
}

void write_recommendations_jsonl(const RecommendationList& list, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw FormatError("cannot open recommendations for writing: " + tmp);
        for (const auto& [category, recs] : list.per_category) {
            std::size_t rank = 1;
            for (const Recommendation& rec : recs) {
                nlohmann::json j;
                j["query"] = list.query;
                j["user"] = list.user;
                j["type"] = relation_type_name(list.type);
                j["category"] = category;
                j["rank"] = rank++;
                j["item"] = rec.item;
                j["probability"] = rec.probability;
                out << j.dump() << "\n";
            }
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("cannot rename recommendations into place: " + path);
    }
}

}  // namespace relex
