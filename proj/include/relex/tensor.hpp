#ifndef RELEX_TENSOR_HPP
#define RELEX_TENSOR_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace relex {

/// Dense row-major tensor of 64-bit floats. Images and activations use the
/// [C,H,W] convention; matrices are [rows,cols].
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    double sum() const;
    bool all_finite() const;

    /// "[a,b,c]" rendering, used in error messages.
    std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation of a [C_in,H,W] input with [C_out,C_in,kh,kw] kernels,
/// zero padding, no bias. Output extents must divide exactly.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad);

/// Gradient of conv2d w.r.t. its input, given the gradient at the output.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernels, std::size_t stride,
                         std::size_t pad, const std::vector<std::size_t>& input_shape);

/// Gradient of conv2d w.r.t. the kernels.
Tensor conv2d_kernel_grad(const Tensor& grad_out, const Tensor& input, std::size_t kh,
                          std::size_t kw, std::size_t stride, std::size_t pad);

struct MaxPoolResult {
    Tensor output;
    // Flat input index of the winning cell, one entry per output cell.
    std::vector<std::size_t> argmax;
};

/// Per-window maximum over a [C,H,W] input; the window must tile the input
/// exactly. Ties break toward the lowest row-major index.
MaxPoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride);

/// Routes per-output-cell values back to their argmax winners (zeros elsewhere).
Tensor maxpool2d_scatter(const Tensor& values, const std::vector<std::size_t>& argmax,
                         const std::vector<std::size_t>& input_shape);

}  // namespace relex

#endif
