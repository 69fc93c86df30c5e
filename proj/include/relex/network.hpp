#ifndef RELEX_NETWORK_HPP
#define RELEX_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "relex/tensor.hpp"

namespace relex {

enum class LayerKind { Conv, Relu, MaxPool, Flatten, Dense };

std::string layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    // conv
    std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;
    // maxpool
    std::size_t window = 0, pool_stride = 0;
    // dense
    std::size_t in_width = 0, out_width = 0;
    // conv/dense only; bias-free stacks keep LRP conservation exact
    bool bias = true;

    static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                          std::size_t stride, std::size_t pad, bool bias = true);
    static LayerSpec relu();
    static LayerSpec maxpool(std::size_t window, std::size_t stride);
    static LayerSpec flatten();
    static LayerSpec dense(std::size_t in_width, std::size_t out_width, bool bias = true);
};

/// Output activation shape of one layer given its input shape. Throws
/// ConfigError naming the layer when the pair is incompatible.
std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                            const std::vector<std::size_t>& input_shape,
                                            std::size_t layer_index);

struct LayerParams {
    Tensor weights;  // conv: [O,C,kh,kw]; dense: [out,in]; empty otherwise
    Tensor biases;   // conv: [O]; dense: [out]; empty otherwise
};

/// The feature extractor: an ordered feedforward stack whose last layer is
/// dense with output width feature_dim.
struct LayerStack {
    std::vector<LayerSpec> specs;
    std::vector<LayerParams> params;
    std::vector<std::size_t> input_shape;  // [C,H,W]
    std::size_t feature_dim = 0;
    std::uint64_t seed = 0;
};

struct ForwardTrace {
    std::vector<Tensor> inputs;  // activation entering each layer
    std::vector<std::vector<std::size_t>> pool_argmax;  // per layer, empty unless maxpool
    Tensor features;  // [K]
};

struct StackGradients {
    std::vector<LayerParams> params;  // same slots as the stack
    Tensor input;                     // gradient w.r.t. the image
};

/// Validates spec compatibility and draws weights from N(0, 2/fan_in),
/// biases zero. Deterministic given seed.
LayerStack init_stack(std::vector<LayerSpec> specs, const std::vector<std::size_t>& input_shape,
                      std::uint64_t seed);

ForwardTrace forward(const LayerStack& stack, const Tensor& image);

/// Reverse-mode gradients of features . grad_features w.r.t. every parameter
/// and the input image.
StackGradients backward(const LayerStack& stack, const ForwardTrace& trace,
                        const Tensor& grad_features);

StackGradients zero_gradients(const LayerStack& stack);

void save_checkpoint(const LayerStack& stack, const std::string& path);
LayerStack load_checkpoint(const std::string& path);

}  // namespace relex

#endif
