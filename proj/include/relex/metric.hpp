#ifndef RELEX_METRIC_HPP
#define RELEX_METRIC_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relex/data.hpp"
#include "relex/tensor.hpp"

namespace relex {

/// Low-rank factor E of the personalized weighing matrix M = E^T E, so the
/// realized metric is positive semidefinite by construction.
struct UserMetric {
    std::string user;
    Tensor factor;  // [D,K]
};

struct RelationInstance {
    std::string user;
    std::string src;
    std::string dst;
    RelationType type = RelationType::AlsoViewed;
    bool positive = true;
};

/// (xi-xj) M (xi-xj)^T computed as ||E (xi-xj)||^2. Symmetric, >= 0.
double metric_distance(const Tensor& factor, const Tensor& xi, const Tensor& xj);

/// Shifted sigmoid 1 / (1 + exp(d - q)), strictly decreasing in d.
double link_probability(double distance, double q);

/// Numerically stable log(1 + e^z).
double softplus(double z);

/// For each edge, one unrelated pair with the same user, relation type and
/// source item; the partner is drawn from the items incident to that relation
/// type. Deterministic given seed; throws SamplingError when no non-edge can
/// be found within the retry bound.
std::vector<RelationInstance> sample_negatives(const RelationGraph& graph, std::uint64_t seed);

enum class LossVariant {
    Bernoulli,     // positives log P, negatives log(1-P)
    PaperLiteral,  // negatives 1 + log(1 + e^(d-q))
};

struct LossGrads {
    double objective = 0.0;
    double q_grad = 0.0;
    std::map<std::string, Tensor> factor_grads;   // per user, [D,K]
    std::map<std::string, Tensor> feature_grads;  // per item, [K]
};

/// Objective of one batch and its exact gradients w.r.t. each user factor,
/// q, and every referenced feature vector. The objective is a quantity to
/// maximize; callers descending pass its negation to the optimizer.
LossGrads loss_and_grads(const std::vector<RelationInstance>& batch,
                         const std::map<std::string, Tensor>& features,
                         const std::map<std::string, UserMetric>& metrics, double q,
                         LossVariant variant = LossVariant::Bernoulli);

}  // namespace relex

#endif
