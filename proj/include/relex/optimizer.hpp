#ifndef RELEX_OPTIMIZER_HPP
#define RELEX_OPTIMIZER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "relex/tensor.hpp"

namespace relex {

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// ADAM with bias-corrected moments. One slot per parameter tensor; the slot
/// list is fixed on the first step. The training objective is maximized by
/// passing gradients of its negation.
class Adam {
public:
    explicit Adam(AdamConfig config = {});

    /// params[i] <- params[i] - alpha * m_hat / (sqrt(v_hat) + eps).
    /// names are used in error messages only.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              const std::vector<std::string>& names);

    std::uint64_t step_count() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace relex

#endif
