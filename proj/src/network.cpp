#include "relex/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "relex/errors.hpp"
#include "relex/network_io.hpp"

namespace relex {

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

LayerSpec LayerSpec::conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                          std::size_t stride, std::size_t pad, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    s.bias = bias;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.window = window;
    s.pool_stride = stride;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t in_width, std::size_t out_width, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_width = in_width;
    s.out_width = out_width;
    s.bias = bias;
    return s;
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                            const std::vector<std::size_t>& in,
                                            std::size_t layer_index) {
    const std::string where = "layer " + std::to_string(layer_index) + " (" +
                              layer_kind_name(spec.kind) + ") on input " + shape_string(in);
    switch (spec.kind) {
        case LayerKind::Conv: {
            if (in.size() != 3 || in[0] != spec.in_channels) {
                throw ConfigError("conv channel mismatch at " + where);
            }
            if (spec.kernel == 0 || spec.stride == 0) {
                throw ConfigError("conv kernel/stride must be positive at " + where);
            }
            if (in[1] + 2 * spec.pad < spec.kernel || in[2] + 2 * spec.pad < spec.kernel ||
                (in[1] + 2 * spec.pad - spec.kernel) % spec.stride != 0 ||
                (in[2] + 2 * spec.pad - spec.kernel) % spec.stride != 0) {
                throw ConfigError("conv geometry does not produce integral output at " + where);
            }
            return {spec.out_channels, (in[1] + 2 * spec.pad - spec.kernel) / spec.stride + 1,
                    (in[2] + 2 * spec.pad - spec.kernel) / spec.stride + 1};
        }
        case LayerKind::Relu:
            return in;
        case LayerKind::MaxPool: {
            if (in.size() != 3) throw ConfigError("maxpool needs [C,H,W] at " + where);
            if (spec.window == 0 || spec.pool_stride == 0 || in[1] < spec.window ||
                in[2] < spec.window || (in[1] - spec.window) % spec.pool_stride != 0 ||
                (in[2] - spec.window) % spec.pool_stride != 0) {
                throw ConfigError("maxpool geometry does not tile at " + where);
            }
            return {in[0], (in[1] - spec.window) / spec.pool_stride + 1,
                    (in[2] - spec.window) / spec.pool_stride + 1};
        }
        case LayerKind::Flatten: {
            std::size_t n = 1;
            for (std::size_t e : in) n *= e;
            return {n};
        }
        case LayerKind::Dense: {
            if (in.size() != 1 || in[0] != spec.in_width) {
                throw ConfigError("dense input width mismatch at " + where + ", expected [" +
                                  std::to_string(spec.in_width) + "]");
            }
            if (spec.out_width == 0) throw ConfigError("dense output width must be positive");
            return {spec.out_width};
        }
    }
    throw ConfigError("unknown layer kind at " + where);
}

LayerStack init_stack(std::vector<LayerSpec> specs, const std::vector<std::size_t>& input_shape,
                      std::uint64_t seed) {
    if (specs.empty()) throw ConfigError("layer stack must not be empty");
    if (input_shape.size() != 3) {
        throw ConfigError("stack input shape must be [C,H,W], got " + shape_string(input_shape));
    }
    if (specs.back().kind != LayerKind::Dense) {
        throw ConfigError("final layer must be dense (the feature extractor)");
    }

    LayerStack stack;
    stack.specs = std::move(specs);
    stack.input_shape = input_shape;
    stack.seed = seed;
    stack.feature_dim = stack.specs.back().out_width;

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> shape = input_shape;
    for (std::size_t l = 0; l < stack.specs.size(); ++l) {
        const LayerSpec& spec = stack.specs[l];
        shape = layer_output_shape(spec, shape, l);
        LayerParams p;
        if (spec.kind == LayerKind::Conv) {
            const std::size_t fan_in = spec.in_channels * spec.kernel * spec.kernel;
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            p.weights = Tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
            for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = dist(rng);
            if (spec.bias) p.biases = Tensor({spec.out_channels});
        } else if (spec.kind == LayerKind::Dense) {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / spec.in_width));
            p.weights = Tensor({spec.out_width, spec.in_width});
            for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = dist(rng);
            if (spec.bias) p.biases = Tensor({spec.out_width});
        }
        stack.params.push_back(std::move(p));
    }
    return stack;
}

ForwardTrace forward(const LayerStack& stack, const Tensor& image) {
    if (image.shape() != stack.input_shape) {
        throw DimensionError("forward: image shape " + image.shape_string() +
                             " does not match stack input " + shape_string(stack.input_shape));
    }
    ForwardTrace trace;
    trace.pool_argmax.resize(stack.specs.size());
    Tensor x = image;
    for (std::size_t l = 0; l < stack.specs.size(); ++l) {
        const LayerSpec& spec = stack.specs[l];
        trace.inputs.push_back(x);
        switch (spec.kind) {
            case LayerKind::Conv: {
                Tensor z = conv2d(x, stack.params[l].weights, spec.stride, spec.pad);
                if (spec.bias) {
                    const std::size_t plane = z.extent(1) * z.extent(2);
                    for (std::size_t oc = 0; oc < z.extent(0); ++oc) {
                        const double b = stack.params[l].biases[oc];
                        for (std::size_t i = 0; i < plane; ++i) z[oc * plane + i] += b;
                    }
                }
                x = std::move(z);
                break;
            }
            case LayerKind::Relu: {
                Tensor z = x;
                for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::max(0.0, z[i]);
                x = std::move(z);
                break;
            }
            case LayerKind::MaxPool: {
                MaxPoolResult r = maxpool2d(x, spec.window, spec.pool_stride);
                trace.pool_argmax[l] = std::move(r.argmax);
                x = std::move(r.output);
                break;
            }
            case LayerKind::Flatten: {
                std::vector<double> flat(x.data(), x.data() + x.size());
                x = Tensor({x.size()}, std::move(flat));
                break;
            }
            case LayerKind::Dense: {
                const Tensor& w = stack.params[l].weights;
                Tensor z({w.extent(0)});
                for (std::size_t o = 0; o < w.extent(0); ++o) {
                    double acc = spec.bias ? stack.params[l].biases[o] : 0.0;
                    for (std::size_t i = 0; i < w.extent(1); ++i) acc += w.at(o, i) * x[i];
                    z[o] = acc;
                }
                x = std::move(z);
                break;
            }
        }
    }
    trace.features = std::move(x);
    return trace;
}

StackGradients zero_gradients(const LayerStack& stack) {
    StackGradients g;
    g.input = Tensor(stack.input_shape);
    for (const LayerParams& p : stack.params) {
        LayerParams zp;
        if (p.weights.size() > 0) zp.weights = Tensor(p.weights.shape());
        if (p.biases.size() > 0) zp.biases = Tensor(p.biases.shape());
        g.params.push_back(std::move(zp));
    }
    return g;
}

StackGradients backward(const LayerStack& stack, const ForwardTrace& trace,
                        const Tensor& grad_features) {
    if (trace.inputs.size() != stack.specs.size() || trace.inputs.empty() ||
        trace.inputs[0].shape() != stack.input_shape) {
        throw IntegrityError("backward: trace does not belong to this stack");
    }
    if (grad_features.shape() != std::vector<std::size_t>{stack.feature_dim}) {
        throw DimensionError("backward: grad_features shape " + grad_features.shape_string() +
                             " does not match feature dim " + std::to_string(stack.feature_dim));
    }

    StackGradients grads = zero_gradients(stack);
    Tensor g = grad_features;
    for (std::size_t li = stack.specs.size(); li-- > 0;) {
        const LayerSpec& spec = stack.specs[li];
        const Tensor& x = trace.inputs[li];
        switch (spec.kind) {
            case LayerKind::Dense: {
                const Tensor& w = stack.params[li].weights;
                if (g.size() != w.extent(0) || x.size() != w.extent(1)) {
                    throw IntegrityError("backward: dense trace shape mismatch at layer " +
                                         std::to_string(li));
                }
                for (std::size_t o = 0; o < w.extent(0); ++o) {
                    if (spec.bias) grads.params[li].biases[o] += g[o];
                    for (std::size_t i = 0; i < w.extent(1); ++i) {
                        grads.params[li].weights.at(o, i) += g[o] * x[i];
                    }
                }
                Tensor gx({x.size()});
                for (std::size_t i = 0; i < w.extent(1); ++i) {
                    double acc = 0.0;
                    for (std::size_t o = 0; o < w.extent(0); ++o) acc += w.at(o, i) * g[o];
                    gx[i] = acc;
                }
                g = std::move(gx);
                break;
            }
            case LayerKind::Flatten:
                g = Tensor(x.shape(), std::vector<double>(g.data(), g.data() + g.size()));
                break;
            case LayerKind::MaxPool: {
                if (trace.pool_argmax[li].size() != g.size()) {
                    throw IntegrityError("backward: missing pool argmax at layer " +
                                         std::to_string(li));
                }
                g = maxpool2d_scatter(g, trace.pool_argmax[li], x.shape());
                break;
            }
            case LayerKind::Relu: {
                Tensor gx = g;
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    if (x[i] <= 0.0) gx[i] = 0.0;
                }
                g = std::move(gx);
                break;
            }
            case LayerKind::Conv: {
                const Tensor& w = stack.params[li].weights;
                if (spec.bias) {
                    const std::size_t plane = g.extent(1) * g.extent(2);
                    for (std::size_t oc = 0; oc < g.extent(0); ++oc) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) acc += g[oc * plane + i];
                        grads.params[li].biases[oc] += acc;
                    }
                }
                Tensor kg = conv2d_kernel_grad(g, x, spec.kernel, spec.kernel, spec.stride,
                                               spec.pad);
                for (std::size_t i = 0; i < kg.size(); ++i) grads.params[li].weights[i] += kg[i];
                g = conv2d_input_grad(g, w, spec.stride, spec.pad, x.shape());
                break;
            }
        }
    }
    grads.input = std::move(g);
    return grads;
}

namespace {

nlohmann::json spec_to_json(const LayerSpec& s) {
    nlohmann::json j;
    j["kind"] = layer_kind_name(s.kind);
    switch (s.kind) {
        case LayerKind::Conv:
            j["in_channels"] = s.in_channels;
            j["out_channels"] = s.out_channels;
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
            j["pad"] = s.pad;
            j["bias"] = s.bias;
            break;
        case LayerKind::MaxPool:
            j["window"] = s.window;
            j["stride"] = s.pool_stride;
            break;
        case LayerKind::Dense:
            j["in_width"] = s.in_width;
            j["out_width"] = s.out_width;
            j["bias"] = s.bias;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec spec_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv") {
        return LayerSpec::conv(j.at("in_channels"), j.at("out_channels"), j.at("kernel"),
                               j.at("stride"), j.at("pad"), j.value("bias", true));
    }
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "maxpool") return LayerSpec::maxpool(j.at("window"), j.at("stride"));
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "dense") {
        return LayerSpec::dense(j.at("in_width"), j.at("out_width"), j.value("bias", true));
    }
    throw FormatError("unknown layer kind in checkpoint header: " + kind);
}

}  // namespace

nlohmann::json stack_header_json(const LayerStack& stack) {
    nlohmann::json header;
    header["specs"] = nlohmann::json::array();
    for (const LayerSpec& s : stack.specs) header["specs"].push_back(spec_to_json(s));
    header["input_shape"] = stack.input_shape;
    header["feature_dim"] = stack.feature_dim;
    header["seed"] = stack.seed;
    return header;
}

LayerStack stack_from_header(const nlohmann::json& header, CheckpointReader& reader) {
    std::vector<LayerSpec> specs;
    for (const auto& j : header.at("specs")) specs.push_back(spec_from_json(j));
    const std::vector<std::size_t> input_shape =
        header.at("input_shape").get<std::vector<std::size_t>>();

    LayerStack stack = init_stack(std::move(specs), input_shape,
                                  header.at("seed").get<std::uint64_t>());
    if (stack.feature_dim != header.at("feature_dim").get<std::size_t>()) {
        throw FormatError("checkpoint header feature_dim disagrees with specs");
    }
    for (LayerParams& p : stack.params) {
        if (p.weights.size() > 0) p.weights = reader.read_tensor(p.weights.shape());
        if (p.biases.size() > 0) p.biases = reader.read_tensor(p.biases.shape());
    }
    return stack;
}

void save_checkpoint(const LayerStack& stack, const std::string& path) {
    nlohmann::json header = stack_header_json(stack);
    header["sections"] = {"network"};
    std::vector<const Tensor*> tensors;
    for (const LayerParams& p : stack.params) {
        if (p.weights.size() > 0) tensors.push_back(&p.weights);
        if (p.biases.size() > 0) tensors.push_back(&p.biases);
    }
    write_checkpoint_file(path, header, tensors);
}

LayerStack load_checkpoint(const std::string& path) {
    CheckpointReader reader(path);
    LayerStack stack = stack_from_header(reader.header(), reader);
    reader.expect_end();
    return stack;
}

}  // namespace relex
