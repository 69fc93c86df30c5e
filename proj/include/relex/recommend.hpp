#ifndef RELEX_RECOMMEND_HPP
#define RELEX_RECOMMEND_HPP

#include <map>
#include <string>
#include <vector>

#include "relex/lrp.hpp"
#include "relex/pipeline.hpp"

namespace relex {

struct Recommendation {
    std::string item;
    double probability = 0.0;
};

struct RecommendationList {
    std::string query;
    std::string user;
    RelationType type = RelationType::AlsoViewed;
    // Per category, probabilities non-increasing, ties by ascending item id,
    // query excluded, length <= k.
    std::map<std::string, std::vector<Recommendation>> per_category;
};

/// Exact top-k by personalized link probability within each category (or a
/// single category when a filter is given).
RecommendationList recommend(const Model& model, const FeatureIndex& index,
                             const ItemCatalog& catalog, const std::string& query,
                             const std::string& user, RelationType type, std::size_t k,
                             const std::string& category_filter = "");

/// LRP heatmaps for a (query, recommended) pair under the user's metric.
HeatmapPair explain_recommendation(const Model& model, const ItemCatalog& catalog,
                                   const std::string& query, const std::string& recommended,
                                   const std::string& user, double epsilon);

void write_recommendations_jsonl(const RecommendationList& list, const std::string& path);

}  // namespace relex

#endif
