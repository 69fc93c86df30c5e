#include "relex/lrp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "relex/errors.hpp"
#include "relex/image_io.hpp"

namespace relex {

namespace {

double stabilized(double z, double epsilon) {
    return z + (z >= 0.0 ? epsilon : -epsilon);  // sign(0) := +1
}

}  // namespace

Tensor lrp_dense(const Tensor& r_out, const Tensor& input, const Tensor& weights, double epsilon) {
    if (weights.rank() != 2 || input.rank() != 1 || r_out.rank() != 1 ||
        weights.extent(0) != r_out.size() || weights.extent(1) != input.size()) {
        throw DimensionError("lrp_dense shapes inconsistent: R " + r_out.shape_string() +
                             ", input " + input.shape_string() + ", weights " +
                             weights.shape_string());
    }
    const std::size_t n_out = weights.extent(0), n_in = weights.extent(1);
    Tensor r_in({n_in});
    for (std::size_t j = 0; j < n_out; ++j) {
        double z = 0.0;
        for (std::size_t i = 0; i < n_in; ++i) z += input[i] * weights.at(j, i);
        const double s = stabilized(z, epsilon);
        if (s == 0.0) continue;
        const double c = r_out[j] / s;
        for (std::size_t i = 0; i < n_in; ++i) r_in[i] += input[i] * weights.at(j, i) * c;
    }
    return r_in;
}

Tensor lrp_conv(const Tensor& r_out, const Tensor& input, const Tensor& kernels,
                std::size_t stride, std::size_t pad, double epsilon) {
    Tensor z = conv2d(input, kernels, stride, pad);
    if (!z.same_shape(r_out)) {
        throw DimensionError("lrp_conv relevance shape " + r_out.shape_string() +
                             " does not match conv output " + z.shape_string());
    }
    Tensor c(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = stabilized(z[i], epsilon);
        c[i] = s == 0.0 ? 0.0 : r_out[i] / s;
    }
    Tensor r_in = conv2d_input_grad(c, kernels, stride, pad, input.shape());
    for (std::size_t i = 0; i < r_in.size(); ++i) r_in[i] *= input[i];
    return r_in;
}

Tensor lrp_maxpool(const Tensor& r_out, const std::vector<std::size_t>& argmax,
                   const std::vector<std::size_t>& input_shape) {
    if (argmax.size() != r_out.size()) {
        throw IntegrityError("lrp_maxpool: argmax map missing or wrong size");
    }
    return maxpool2d_scatter(r_out, argmax, input_shape);
}

Tensor lrp_relu(const Tensor& r_out, const Tensor& input) {
    if (!r_out.same_shape(input)) {
        throw IntegrityError("lrp_relu: relevance and pre-activation shapes disagree");
    }
    Tensor r_in = r_out;
    for (std::size_t i = 0; i < r_in.size(); ++i) {
        if (input[i] <= 0.0) r_in[i] = 0.0;
    }
    return r_in;
}

std::pair<Tensor, Tensor> lrp_distance_head(const Tensor& factor, const Tensor& xi,
                                            const Tensor& xj, double r_total, double epsilon) {
    if (factor.rank() != 2 || xi.rank() != 1 || xj.rank() != 1 || xi.size() != xj.size() ||
        xi.size() != factor.extent(1)) {
        throw DimensionError("lrp_distance_head lengths disagree: " + xi.shape_string() + ", " +
                             xj.shape_string() + " vs factor " + factor.shape_string());
    }
    const std::size_t d = factor.extent(0), k = factor.extent(1);

    std::vector<double> delta(k);
    for (std::size_t b = 0; b < k; ++b) delta[b] = xi[b] - xj[b];
    std::vector<double> y(d);
    for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < k; ++b) acc += factor.at(a, b) * delta[b];
        y[a] = acc;
    }
    // z_b = delta_b * (M delta)_b with M = E^T E; sum_b z_b is the distance.
    std::vector<double> z(k);
    double z_sum = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
        double mtd = 0.0;
        for (std::size_t a = 0; a < d; ++a) mtd += factor.at(a, b) * y[a];
        z[b] = delta[b] * mtd;
        z_sum += z[b];
    }
    const double s = stabilized(z_sum, epsilon);

    Tensor r_xi({k}), r_xj({k});
    if (s != 0.0) {
        for (std::size_t b = 0; b < k; ++b) {
            const double r_delta = z[b] / s * r_total;
            const double wi = std::abs(xi[b]), wj = std::abs(xj[b]);
            const double share = (wi + wj) == 0.0 ? 0.5 : wi / (wi + wj);
            r_xi[b] = share * r_delta;
            r_xj[b] = (1.0 - share) * r_delta;
        }
    }
    return {std::move(r_xi), std::move(r_xj)};
}

namespace {

// Runs the per-layer rules down one branch, pixel space at index 0.
std::vector<Tensor> propagate_branch(const LayerStack& stack, const ForwardTrace& trace,
                                     const Tensor& feature_relevance, double epsilon) {
    std::vector<Tensor> layers(stack.specs.size());
    Tensor r = feature_relevance;
    for (std::size_t li = stack.specs.size(); li-- > 0;) {
        const LayerSpec& spec = stack.specs[li];
        const Tensor& x = trace.inputs[li];
        switch (spec.kind) {
            case LayerKind::Dense:
                r = lrp_dense(r, x, stack.params[li].weights, epsilon);
                break;
            case LayerKind::Flatten:
                r = Tensor(x.shape(), std::vector<double>(r.data(), r.data() + r.size()));
                break;
            case LayerKind::MaxPool:
                r = lrp_maxpool(r, trace.pool_argmax[li], x.shape());
                break;
            case LayerKind::Relu:
                r = lrp_relu(r, x);
                break;
            case LayerKind::Conv:
                r = lrp_conv(r, x, stack.params[li].weights, spec.stride, spec.pad, epsilon);
                break;
        }
        layers[li] = r;
    }
    return layers;
}

}  // namespace

RelevanceTrace relevance_trace(const LayerStack& stack, const UserMetric& metric, double q,
                               const Tensor& image_left, const Tensor& image_right, double epsilon,
                               RelevanceSource source) {
    const ForwardTrace left = forward(stack, image_left);
    const ForwardTrace right = forward(stack, image_right);

    RelevanceTrace out;
    out.epsilon = epsilon;
    out.distance = metric_distance(metric.factor, left.features, right.features);
    out.probability = link_probability(out.distance, q);
    out.prediction = source == RelevanceSource::Probability ? out.probability : -out.distance;

    auto [r_left, r_right] =
        lrp_distance_head(metric.factor, left.features, right.features, out.prediction, epsilon);
    out.left.features = std::move(r_left);
    out.right.features = std::move(r_right);
    out.left.layers = propagate_branch(stack, left, out.left.features, epsilon);
    out.right.layers = propagate_branch(stack, right, out.right.features, epsilon);
    return out;
}

Tensor channel_sum(const Tensor& image) {
    if (image.rank() != 3) throw DimensionError("channel_sum expects [C,H,W]");
    const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
    Tensor out({h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) out.at(y, x) += image.at(ch, y, x);
        }
    }
    return out;
}

HeatmapPair explain_pair(const LayerStack& stack, const UserMetric& metric, double q,
                         const Tensor& image_left, const Tensor& image_right, double epsilon,
                         RelevanceSource source) {
    const RelevanceTrace trace =
        relevance_trace(stack, metric, q, image_left, image_right, epsilon, source);

    HeatmapPair pair;
    pair.prediction = trace.prediction;
    pair.left = channel_sum(trace.left.layers.front());
    pair.right = channel_sum(trace.right.layers.front());

    const std::size_t h = pair.left.extent(0), w = pair.left.extent(1);
    pair.ranking.reserve(2 * h * w);
    for (int branch = 0; branch < 2; ++branch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) pair.ranking.push_back({branch, y, x});
        }
    }
    const Tensor* maps[2] = {&pair.left, &pair.right};
    std::stable_sort(pair.ranking.begin(), pair.ranking.end(),
                     [&](const PixelRef& a, const PixelRef& b) {
                         return std::abs(maps[a.branch]->at(a.y, a.x)) >
                                std::abs(maps[b.branch]->at(b.y, b.x));
                     });
    return pair;
}

void write_heatmap_csv(const Tensor& heatmap, const std::string& path) {
    if (heatmap.rank() != 2) throw DimensionError("heatmap must be [H,W]");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw FormatError("cannot open heatmap csv for writing: " + tmp);
        out.precision(17);
        for (std::size_t y = 0; y < heatmap.extent(0); ++y) {
            for (std::size_t x = 0; x < heatmap.extent(1); ++x) {
                if (x) out << ',';
                out << heatmap.at(y, x);
            }
            out << '\n';
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("cannot rename heatmap csv into place: " + path);
    }
}

void write_heatmap_pgm(const Tensor& heatmap, const std::string& path) {
    if (heatmap.rank() != 2) throw DimensionError("heatmap must be [H,W]");
    double lo = heatmap[0], hi = heatmap[0];
    for (std::size_t i = 0; i < heatmap.size(); ++i) {
        lo = std::min(lo, heatmap[i]);
        hi = std::max(hi, heatmap[i]);
    }
    const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
    Tensor gray({1, heatmap.extent(0), heatmap.extent(1)});
    for (std::size_t i = 0; i < heatmap.size(); ++i) gray[i] = (heatmap[i] - lo) * scale;
    encode_pgm(gray, path);

    nlohmann::json sidecar;
    sidecar["offset"] = lo;
    sidecar["scale"] = hi > lo ? (hi - lo) / 255.0 : 0.0;  // value = offset + scale * pixel
    std::ofstream side(path + ".json", std::ios::trunc);
    side << sidecar.dump(2) << "\n";
}

void write_heatmap_overlay_ppm(const Tensor& heatmap, const Tensor& image,
                               const std::string& path) {
    if (heatmap.rank() != 2 || image.rank() != 3 || image.extent(1) != heatmap.extent(0) ||
        image.extent(2) != heatmap.extent(1)) {
        throw DimensionError("overlay: heatmap " + heatmap.shape_string() +
                             " does not match image " + image.shape_string());
    }
    double peak = 0.0;
    for (std::size_t i = 0; i < heatmap.size(); ++i) peak = std::max(peak, std::abs(heatmap[i]));
    const double norm = peak > 0.0 ? 1.0 / peak : 0.0;

    const std::size_t h = heatmap.extent(0), w = heatmap.extent(1);
    Tensor overlay({3, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double v = heatmap.at(y, x) * norm;
            // positive relevance in red, negative in blue
            const double heat[3] = {v > 0.0 ? v : 0.0, 0.0, v < 0.0 ? -v : 0.0};
            for (std::size_t c = 0; c < 3; ++c) {
                const double base = image.extent(0) == 3 ? image.at(c, y, x) : image.at(0, y, x);
                overlay.at(c, y, x) = 0.6 * heat[c] + 0.4 * base;
            }
        }
    }
    encode_ppm(overlay, path);
}

}  // namespace relex
