#ifndef RELEX_EVAL_HPP
#define RELEX_EVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "relex/lrp.hpp"
#include "relex/pipeline.hpp"

namespace relex {

struct AccuracyRow {
    std::string category;
    RelationType type = RelationType::AlsoViewed;
    std::size_t metric_rank = 0;  // D
    double accuracy_pct = 0.0;    // [0,100]
};

struct AccuracyReport {
    std::vector<AccuracyRow> rows;
};

/// Balanced accuracy on the test split: every test positive paired with one
/// sampled negative, classified by P_u >= threshold, grouped by the source
/// item's category and the relation type.
AccuracyReport evaluate_accuracy(const Model& model, const ItemCatalog& catalog,
                                 const RelationGraph& graph, const SplitSpec& split,
                                 std::uint64_t negative_seed, double threshold = 0.5);

void write_accuracy_csv(const AccuracyReport& report, const std::string& path);

enum class PerturbPolicy { Lrp, Random };
enum class PerturbOrdering { GlobalRank, PerBranchEqual };

std::string perturb_policy_name(PerturbPolicy policy);

/// Iteratively replaces ranked pixels with uniform[0,1] draws (independent
/// per channel) in working copies of the pair's images, re-scoring after
/// each step. Returns the prediction at steps 0..steps.
std::vector<double> perturb_and_rescore(const Model& model, const std::string& user,
                                        const Tensor& image_left, const Tensor& image_right,
                                        const HeatmapPair& heatmaps, std::size_t steps,
                                        std::size_t pixels_per_step, PerturbPolicy policy,
                                        std::uint64_t seed,
                                        PerturbOrdering ordering = PerturbOrdering::GlobalRank);

struct CurvePoint {
    std::size_t step = 0;
    double accuracy_pct = 0.0;
};

struct PerturbationCurve {
    double epsilon = 0.0;
    PerturbPolicy policy = PerturbPolicy::Lrp;
    std::size_t pixels_per_step = 1;
    std::uint64_t seed = 0;
    std::vector<CurvePoint> points;
};

/// Per-step accuracy: the fraction of pairs still scoring >= threshold.
PerturbationCurve aggregate_curves(const std::vector<std::vector<double>>& per_pair_scores,
                                   double threshold, double epsilon, PerturbPolicy policy,
                                   std::size_t pixels_per_step, std::uint64_t seed);

/// Mean accuracy across the curve's step grid.
double curve_auc(const PerturbationCurve& curve);

void write_curves_csv(const std::vector<PerturbationCurve>& curves, const std::string& path);

}  // namespace relex

#endif
