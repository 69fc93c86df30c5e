#ifndef RELEX_CONFIG_HPP
#define RELEX_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "relex/data.hpp"
#include "relex/eval.hpp"
#include "relex/lrp.hpp"
#include "relex/metric.hpp"
#include "relex/network.hpp"
#include "relex/optimizer.hpp"

namespace relex {

struct Seeds {
    std::uint64_t init = 1;
    std::uint64_t split = 2;
    std::uint64_t negatives = 3;
    std::uint64_t shuffle = 5;
    std::uint64_t perturbation = 7;
};

struct PerturbationConfig {
    std::size_t steps = 16;
    std::size_t pixels_per_step = 8;
    std::size_t pairs = 20;  // test pairs fed into each curve
    PerturbOrdering ordering = PerturbOrdering::GlobalRank;
};

struct RunConfig {
    std::vector<std::size_t> input_shape{1, 16, 16};  // [C,H,W]
    std::vector<LayerSpec> architecture;
    std::size_t feature_dim = 16;  // K, must match the final dense width
    std::size_t metric_rank = 10;  // D
    LossVariant loss_variant = LossVariant::Bernoulli;
    RelevanceSource relevance_source = RelevanceSource::Probability;
    AdamConfig adam;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    Seeds seeds;
    std::vector<double> epsilons{0.0, 1e-3, 1e-2, 1e-1};
    std::string manifest_path;
    std::string checkpoint_path;
    std::string out_dir = ".";
    std::vector<std::string> eval_checkpoints;  // defaults to {checkpoint_path}
    double split_fraction = 0.8;
    std::size_t top_k = 3;
    std::string relation_type = "all";
    double threshold = 0.5;
    PerturbationConfig perturbation;
    SyntheticSpec synthetic;
};

/// Parses and validates a JSON config file. Validation failures name the
/// offending field path.
RunConfig load_config(const std::string& path);

/// Re-derives all seeds from one master seed (CLI --seed override).
void override_seeds(RunConfig& config, std::uint64_t master_seed);

}  // namespace relex

#endif
