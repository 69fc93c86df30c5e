#ifndef RELEX_LRP_HPP
#define RELEX_LRP_HPP

#include <string>
#include <utility>
#include <vector>

#include "relex/metric.hpp"
#include "relex/network.hpp"
#include "relex/tensor.hpp"

namespace relex {

/// Epsilon-rule through a dense layer (weights [out,in], no bias term in the
/// denominator): R_i = sum_j x_i w_ji / (z_j + eps*sign(z_j)) * R_j with
/// sign(0) = +1. A dead output (z_j = 0, eps = 0) contributes nothing.
Tensor lrp_dense(const Tensor& r_out, const Tensor& input, const Tensor& weights, double epsilon);

/// Same rule through a convolution's shared-weight linear map, without
/// materializing the unrolled matrix.
Tensor lrp_conv(const Tensor& r_out, const Tensor& input, const Tensor& kernels,
                std::size_t stride, std::size_t pad, double epsilon);

/// Winner-take-all: each output's relevance lands on its argmax input cell.
Tensor lrp_maxpool(const Tensor& r_out, const std::vector<std::size_t>& argmax,
                   const std::vector<std::size_t>& input_shape);

/// Relevance passes where the pre-activation was positive, zero elsewhere.
Tensor lrp_relu(const Tensor& r_out, const Tensor& input);

/// Decomposes the prediction across the bilinear distance head. With
/// delta = xi - xj and z_a = delta_a * (M delta)_a (so sum_a z_a = d exactly),
/// R_a = z_a / (sum z + eps*sign(sum z)) * r_total; each R_a then splits onto
/// xi_a and xj_a proportionally to |xi_a| and |xj_a| (50/50 when both zero).
std::pair<Tensor, Tensor> lrp_distance_head(const Tensor& factor, const Tensor& xi,
                                            const Tensor& xj, double r_total, double epsilon);

enum class RelevanceSource { Probability, NegDistance };

/// Relevance at the input of every layer, index 0 being pixel space.
struct BranchRelevance {
    std::vector<Tensor> layers;
    Tensor features;  // [K], relevance entering the branch
};

struct RelevanceTrace {
    BranchRelevance left, right;
    double epsilon = 0.0;
    double prediction = 0.0;  // g(x) being decomposed
    double distance = 0.0;
    double probability = 0.0;
};

struct PixelRef {
    int branch = 0;  // 0 = left, 1 = right
    std::size_t y = 0, x = 0;
};

struct HeatmapPair {
    Tensor left, right;  // [H,W], channel-summed pixel relevance
    double prediction = 0.0;
    // All (branch,y,x) coordinates of both maps, descending |relevance|.
    std::vector<PixelRef> ranking;
};

RelevanceTrace relevance_trace(const LayerStack& stack, const UserMetric& metric, double q,
                               const Tensor& image_left, const Tensor& image_right, double epsilon,
                               RelevanceSource source = RelevanceSource::Probability);

HeatmapPair explain_pair(const LayerStack& stack, const UserMetric& metric, double q,
                         const Tensor& image_left, const Tensor& image_right, double epsilon,
                         RelevanceSource source = RelevanceSource::Probability);

Tensor channel_sum(const Tensor& image);

/// Heatmap export: raw CSV, rescaled 8-bit PGM with a JSON sidecar recording
/// the affine map, and an optional 0.6/0.4 overlay PPM on the input image.
void write_heatmap_csv(const Tensor& heatmap, const std::string& path);
void write_heatmap_pgm(const Tensor& heatmap, const std::string& path);
void write_heatmap_overlay_ppm(const Tensor& heatmap, const Tensor& image,
                               const std::string& path);

}  // namespace relex

#endif
