#include "relex/metric.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "relex/errors.hpp"

namespace relex {

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

namespace {

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void check_lengths(const Tensor& factor, const Tensor& xi, const Tensor& xj) {
    if (factor.rank() != 2) {
        throw DimensionError("metric factor must be [D,K], got " + factor.shape_string());
    }
    if (xi.rank() != 1 || xj.rank() != 1 || xi.size() != xj.size() ||
        xi.size() != factor.extent(1)) {
        throw DimensionError("feature lengths disagree: " + xi.shape_string() + ", " +
                             xj.shape_string() + " vs factor " + factor.shape_string());
    }
}

}  // namespace

double metric_distance(const Tensor& factor, const Tensor& xi, const Tensor& xj) {
    check_lengths(factor, xi, xj);
    const std::size_t d = factor.extent(0), k = factor.extent(1);
    double total = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        double y = 0.0;
        for (std::size_t b = 0; b < k; ++b) y += factor.at(a, b) * (xi[b] - xj[b]);
        total += y * y;
    }
    return total;
}

double link_probability(double distance, double q) { return sigmoid(q - distance); }

std::vector<RelationInstance> sample_negatives(const RelationGraph& graph, std::uint64_t seed) {
    // Candidate items per relation type: those incident to an edge of that
    // type. Sampling over the full catalog would label unseen-but-plausible
    // pairs negative.
    std::map<RelationType, std::vector<std::string>> incident;
    for (const Edge& edge : graph.edges) {
        incident[edge.type].push_back(edge.src);
        incident[edge.type].push_back(edge.dst);
    }
    for (auto& [type, items] : incident) {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
        if (items.size() < 2) {
            throw SamplingError("fewer than two items incident to type " +
                                relation_type_name(type));
        }
    }

    constexpr int kRetryBound = 1000;
    std::mt19937_64 rng(seed);
    std::vector<RelationInstance> negatives;
    negatives.reserve(graph.edges.size());
    for (const Edge& edge : graph.edges) {
        // Anchor the negative at the edge's source item so every positive has
        // a matched negative with the same user, type and source; balanced
        // accuracy cells follow directly.
        const std::vector<std::string>& items = incident.at(edge.type);
        std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
        bool found = false;
        for (int attempt = 0; attempt < kRetryBound; ++attempt) {
            const std::string& b = items[pick(rng)];
            if (b == edge.src || graph.has_pair_any_user(edge.src, b, edge.type)) continue;
            negatives.push_back({edge.user, edge.src, b, edge.type, false});
            found = true;
            break;
        }
        if (!found) {
            throw SamplingError("negative sampling exhausted after " +
                                std::to_string(kRetryBound) + " attempts for user " + edge.user +
                                " type " + relation_type_name(edge.type));
        }
    }
    return negatives;
}

LossGrads loss_and_grads(const std::vector<RelationInstance>& batch,
                         const std::map<std::string, Tensor>& features,
                         const std::map<std::string, UserMetric>& metrics, double q,
                         LossVariant variant) {
    LossGrads out;
    for (const RelationInstance& inst : batch) {
        auto mi = metrics.find(inst.user);
        if (mi == metrics.end()) throw LookupError("no metric for user: " + inst.user);
        auto fi = features.find(inst.src);
        auto fj = features.find(inst.dst);
        if (fi == features.end()) throw LookupError("no features for item: " + inst.src);
        if (fj == features.end()) throw LookupError("no features for item: " + inst.dst);

        const Tensor& factor = mi->second.factor;
        const Tensor& xi = fi->second;
        const Tensor& xj = fj->second;
        check_lengths(factor, xi, xj);
        const std::size_t dims = factor.extent(0), k = factor.extent(1);

        std::vector<double> delta(k);
        for (std::size_t b = 0; b < k; ++b) delta[b] = xi[b] - xj[b];
        std::vector<double> y(dims);  // E * delta
        double dist = 0.0;
        for (std::size_t a = 0; a < dims; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < k; ++b) acc += factor.at(a, b) * delta[b];
            y[a] = acc;
            dist += acc * acc;
        }

        const double z = dist - q;
        double dll_dz;  // derivative of this instance's objective term w.r.t. z
        if (inst.positive) {
            out.objective += -softplus(z);
            dll_dz = -sigmoid(z);
        } else if (variant == LossVariant::Bernoulli) {
            out.objective += -softplus(-z);
            dll_dz = sigmoid(-z);
        } else {
            out.objective += 1.0 + softplus(z);
            dll_dz = sigmoid(z);
        }
        out.q_grad += -dll_dz;

        // d dist / dE = 2 y delta^T, d dist / dxi = 2 E^T y.
        Tensor& fg = out.factor_grads.try_emplace(inst.user, Tensor(factor.shape())).first->second;
        for (std::size_t a = 0; a < dims; ++a) {
            const double c = dll_dz * 2.0 * y[a];
            for (std::size_t b = 0; b < k; ++b) fg.at(a, b) += c * delta[b];
        }
        Tensor& gi = out.feature_grads.try_emplace(inst.src, Tensor({k})).first->second;
        Tensor& gj = out.feature_grads.try_emplace(inst.dst, Tensor({k})).first->second;
        for (std::size_t b = 0; b < k; ++b) {
            double mtd = 0.0;  // (E^T y)_b
            for (std::size_t a = 0; a < dims; ++a) mtd += factor.at(a, b) * y[a];
            gi[b] += dll_dz * 2.0 * mtd;
            gj[b] -= dll_dz * 2.0 * mtd;
        }
    }
    return out;
}

}  // namespace relex
