#include "relex/optimizer.hpp"

#include <cmath>

#include "relex/errors.hpp"

namespace relex {

Adam::Adam(AdamConfig config) : config_(config) {}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                const std::vector<std::string>& names) {
    if (params.size() != grads.size() || params.size() != names.size()) {
        throw DimensionError("adam: params/grads/names counts disagree");
    }
    if (t_ == 0) {
        for (const Tensor* p : params) {
            m_.emplace_back(Tensor(p->shape()));
            v_.emplace_back(Tensor(p->shape()));
        }
    } else if (params.size() != m_.size()) {
        throw DimensionError("adam: parameter slot count changed between steps");
    }

    ++t_;
    const double m_corr = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double v_corr = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));

    for (std::size_t s = 0; s < params.size(); ++s) {
        Tensor& p = *params[s];
        const Tensor& g = *grads[s];
        if (!p.same_shape(g) || !p.same_shape(m_[s])) {
            throw DimensionError("adam: gradient shape " + g.shape_string() +
                                 " does not match parameter " + names[s] + " " + p.shape_string());
        }
        if (!g.all_finite()) {
            throw NumericError("adam: non-finite gradient for parameter " + names[s]);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[s][i] = config_.beta1 * m_[s][i] + (1.0 - config_.beta1) * g[i];
            v_[s][i] = config_.beta2 * v_[s][i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = m_[s][i] / m_corr;
            const double v_hat = v_[s][i] / v_corr;
            p[i] -= config_.alpha * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

}  // namespace relex
