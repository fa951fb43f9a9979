#include "hairshift/optimizer.hpp"

#include <cmath>

namespace hairshift {

void AdamOptimizer::step(Tensor& param, const Tensor& grad) {
    param.require_same_shape(grad);
    if (m_.empty()) {
        m_ = Tensor(param.shape());
        v_ = Tensor(param.shape());
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        param[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

}  // namespace hairshift
