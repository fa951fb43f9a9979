#pragma once

#include "hairshift/tensor.hpp"

namespace hairshift {

// First-order optimizer with bias-corrected moment estimates; the single
// update rule used by every optimization stage.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double learning_rate = 0.01, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Tensor& param, const Tensor& grad);
    long steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    Tensor m_, v_;
    long t_ = 0;
};

}  // namespace hairshift
