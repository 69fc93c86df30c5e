#ifndef RELEX_PIPELINE_HPP
#define RELEX_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relex/data.hpp"
#include "relex/metric.hpp"
#include "relex/network.hpp"
#include "relex/optimizer.hpp"

namespace relex {

/// Fallback metric for users unseen at training time.
inline constexpr const char* kGlobalUser = "_global";

struct Model {
    LayerStack stack;
    std::map<std::string, UserMetric> metrics;  // always contains kGlobalUser
    double q = 0.0;
    std::size_t metric_rank = 0;  // D
    LossVariant loss_variant = LossVariant::Bernoulli;
    std::string relation_type = "all";  // which edges it was trained on

    const UserMetric& metric_for(const std::string& user) const;

    /// Distance and link probability for a feature pair as seen by `user`.
    double pair_probability(const std::string& user, const Tensor& xi, const Tensor& xj) const;
};

/// Full-model checkpoint: the network payload followed by a metric section,
/// both announced in the JSON header.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::uint64_t file_hash_fnv1a(const std::string& path);

/// Decodes an item's image at the stack's input geometry, replicating or
/// averaging channels when the file's channel count differs.
Tensor load_item_image(const Item& item, const std::vector<std::size_t>& input_shape);

struct TrainOptions {
    std::vector<LayerSpec> specs;
    std::vector<std::size_t> input_shape;  // [C,H,W]
    std::size_t metric_rank = 10;          // D
    LossVariant loss_variant = LossVariant::Bernoulli;
    AdamConfig adam;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t init_seed = 1;
    std::uint64_t negative_seed = 3;
    std::uint64_t shuffle_seed = 5;
    std::string relation_type = "all";  // one of the four names, or "all"
};

/// One JSON line per training batch.
using TrainLogFn = std::function<void(const std::string& json_line)>;

/// End-to-end training on the split's train edges (optionally one relation
/// type): negatives sampled once, features recomputed per batch, gradients
/// flowing through the distance head into the stack, ADAM on everything.
Model train_model(const ItemCatalog& catalog, const RelationGraph& graph, const SplitSpec& split,
                  const TrainOptions& options, const TrainLogFn& log = nullptr);

/// Precomputed per-item features for whole-catalog scans.
class FeatureIndex {
public:
    FeatureIndex(const Model& model, const ItemCatalog& catalog);

    const Tensor& features(const std::string& item_id) const;

private:
    std::map<std::string, Tensor> features_;
};

}  // namespace relex

#endif
