#include "relex/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "relex/errors.hpp"

namespace relex {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw DimensionError("tensor extent must be positive in " +
                                 relex::shape_string(shape));
        }
        n *= e;
    }
    return n;
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_product(shape_)) {
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + relex::shape_string(shape_));
    }
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const { return relex::shape_string(shape_); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul requires rank-2 tensors, got " + a.shape_string() + " and " +
                             b.shape_string());
    }
    if (a.extent(1) != b.extent(0)) {
        throw DimensionError("matmul inner extents disagree: " + a.shape_string() + " x " +
                             b.shape_string());
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
        }
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad) {
    if (input.rank() != 3 || kernels.rank() != 4) {
        throw DimensionError("conv2d expects [C,H,W] input and [O,C,kh,kw] kernels, got " +
                             input.shape_string() + " and " + kernels.shape_string());
    }
    if (input.extent(0) != kernels.extent(1)) {
        throw DimensionError("conv2d channel mismatch: input " + input.shape_string() +
                             " vs kernels " + kernels.shape_string());
    }
    const std::size_t c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::size_t c_out = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
    if (h + 2 * pad < kh || w + 2 * pad < kw) {
        throw ConfigError("conv2d kernel larger than padded input: " + input.shape_string() +
                          " with kernel " + kernels.shape_string() + " pad " + std::to_string(pad));
    }
    if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0) {
        throw ConfigError("conv2d output extent is not integral for input " + input.shape_string() +
                          " kernel " + kernels.shape_string() + " stride " + std::to_string(stride) +
                          " pad " + std::to_string(pad));
    }
    const std::size_t out_h = (h + 2 * pad - kh) / stride + 1;
    const std::size_t out_w = (w + 2 * pad - kw) / stride + 1;

    Tensor out({c_out, out_h, out_w});
    for (std::size_t oc = 0; oc < c_out; ++oc) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (std::size_t ic = 0; ic < c_in; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix =
                                static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            acc += input.at(ic, static_cast<std::size_t>(iy),
                                            static_cast<std::size_t>(ix)) *
                                   kernels[((oc * c_in + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernels, std::size_t stride,
                         std::size_t pad, const std::vector<std::size_t>& input_shape) {
    if (grad_out.rank() != 3 || kernels.rank() != 4 || input_shape.size() != 3) {
        throw DimensionError("conv2d_input_grad shape ranks inconsistent");
    }
    const std::size_t c_in = input_shape[0], h = input_shape[1], w = input_shape[2];
    const std::size_t c_out = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
    if (grad_out.extent(0) != c_out || kernels.extent(1) != c_in) {
        throw DimensionError("conv2d_input_grad channel mismatch: grad " + grad_out.shape_string() +
                             " kernels " + kernels.shape_string());
    }
    const std::size_t out_h = grad_out.extent(1), out_w = grad_out.extent(2);

    Tensor grad_in(input_shape);
    for (std::size_t oc = 0; oc < c_out; ++oc) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double g = grad_out.at(oc, oy, ox);
                if (g == 0.0) continue;
                for (std::size_t ic = 0; ic < c_in; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix =
                                static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            grad_in.at(ic, static_cast<std::size_t>(iy),
                                       static_cast<std::size_t>(ix)) +=
                                g * kernels[((oc * c_in + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

Tensor conv2d_kernel_grad(const Tensor& grad_out, const Tensor& input, std::size_t kh,
                          std::size_t kw, std::size_t stride, std::size_t pad) {
    if (grad_out.rank() != 3 || input.rank() != 3) {
        throw DimensionError("conv2d_kernel_grad expects rank-3 tensors");
    }
    const std::size_t c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::size_t c_out = grad_out.extent(0);
    const std::size_t out_h = grad_out.extent(1), out_w = grad_out.extent(2);

    Tensor grad_k({c_out, c_in, kh, kw});
    for (std::size_t oc = 0; oc < c_out; ++oc) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double g = grad_out.at(oc, oy, ox);
                if (g == 0.0) continue;
                for (std::size_t ic = 0; ic < c_in; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix =
                                static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            grad_k[((oc * c_in + ic) * kh + ky) * kw + kx] +=
                                g * input.at(ic, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                        }
                    }
                }
            }
        }
    }
    return grad_k;
}

MaxPoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
    if (input.rank() != 3) {
        throw DimensionError("maxpool2d expects [C,H,W], got " + input.shape_string());
    }
    if (window == 0 || stride == 0) throw ConfigError("maxpool2d window/stride must be positive");
    const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (h < window || w < window || (h - window) % stride != 0 || (w - window) % stride != 0) {
        throw ConfigError("maxpool2d geometry does not tile input " + input.shape_string() +
                          " with window " + std::to_string(window) + " stride " +
                          std::to_string(stride));
    }
    const std::size_t out_h = (h - window) / stride + 1;
    const std::size_t out_w = (w - window) / stride + 1;

    MaxPoolResult result{Tensor({c, out_h, out_w}), {}};
    result.argmax.resize(c * out_h * out_w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double best = input.at(ch, oy * stride, ox * stride);
                std::size_t best_idx = (ch * h + oy * stride) * w + ox * stride;
                for (std::size_t wy = 0; wy < window; ++wy) {
                    for (std::size_t wx = 0; wx < window; ++wx) {
                        const std::size_t iy = oy * stride + wy;
                        const std::size_t ix = ox * stride + wx;
                        const double v = input.at(ch, iy, ix);
                        if (v > best) {
                            best = v;
                            best_idx = (ch * h + iy) * w + ix;
                        }
                    }
                }
                result.output.at(ch, oy, ox) = best;
                result.argmax[(ch * out_h + oy) * out_w + ox] = best_idx;
            }
        }
    }
    return result;
}

Tensor maxpool2d_scatter(const Tensor& values, const std::vector<std::size_t>& argmax,
                         const std::vector<std::size_t>& input_shape) {
    if (values.size() != argmax.size()) {
        throw IntegrityError("maxpool2d_scatter: argmax map size " + std::to_string(argmax.size()) +
                             " does not match values " + values.shape_string());
    }
    Tensor out(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= out.size()) throw IntegrityError("maxpool2d_scatter: argmax out of range");
        out[argmax[i]] += values[i];
    }
    return out;
}

}  // namespace relex
