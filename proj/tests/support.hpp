#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hairshift/tensor.hpp"

namespace hairshift::testing {

// Central finite differences along random unit directions, compared against
// an analytic directional derivative g.d. Returns the worst relative error
// over the probes.
struct FdReport {
    double max_rel_err = 0.0;
    double worst_fd = 0.0;
    double worst_analytic = 0.0;
};

inline FdReport fd_directional_check(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x0, const Tensor& analytic_grad,
                                     int probes, std::uint64_t seed, double step = 1e-5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    FdReport rep;
    for (int p = 0; p < probes; ++p) {
        Tensor dir(x0.shape());
        double norm = 0.0;
        for (std::size_t i = 0; i < dir.size(); ++i) {
            dir[i] = gauss(rng);
            norm += dir[i] * dir[i];
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] /= norm;

        Tensor xp = x0, xm = x0;
        for (std::size_t i = 0; i < x0.size(); ++i) {
            xp[i] += step * dir[i];
            xm[i] -= step * dir[i];
        }
        const double fd = (f(xp) - f(xm)) / (2.0 * step);
        const double an = dot(analytic_grad, dir);
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-10});
        const double rel = std::fabs(fd - an) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_fd = fd;
            rep.worst_analytic = an;
        }
    }
    return rep;
}

// Per-element finite differences of every input coordinate; used by the
// op-level autodiff tests on tiny tensors.
inline double fd_elementwise_max_rel(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x0, const Tensor& analytic_grad,
                                     double step = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        Tensor xp = x0, xm = x0;
        xp[i] += step;
        xm[i] -= step;
        const double fd = (f(xp) - f(xm)) / (2.0 * step);
        const double an = analytic_grad[i];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        worst = std::max(worst, std::fabs(fd - an) / denom);
    }
    return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                            double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uni(rng);
    return t;
}

}  // namespace hairshift::testing

#include "hairshift/toy_backend.hpp"

namespace hairshift::testing {

// Desk-scale stand-in for a photograph: a generated image pushed slightly
// off the generator manifold by a smooth deterministic pattern, then
// quantized like an 8-bit file. Embedding stages keep a genuine residual to
// work against, as they would on real inputs.
inline Image make_toy_fixture(const ToyBackend& backend, const Ports& ports, std::uint64_t seed,
                              double amplitude = 0.08) {
    Image base = synthesize_image(*ports.generator, backend.sample_latent(seed));
    const std::size_t h = base.height(), w = base.width();
    std::mt19937_64 rng(seed ^ 0xf1c7'0000u);
    std::uniform_real_distribution<double> phase(0.0, 6.28318530717958647692);
    std::uniform_int_distribution<int> freq(1, 3);
    Tensor out = base.tensor();
    for (std::size_t c = 0; c < 3; ++c) {
        const double fy = freq(rng), fx = freq(rng), ph = phase(rng);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double wave = std::sin(6.28318530717958647692 *
                                                 (fy * static_cast<double>(y) / static_cast<double>(h) +
                                                  fx * static_cast<double>(x) / static_cast<double>(w)) +
                                             ph);
                double v = out.at3(y, x, c) + amplitude * wave;
                v = std::clamp(v, 0.0, 1.0);
                out.at3(y, x, c) = std::round(v * 255.0) / 255.0;  // 8-bit quantization
            }
    }
    return Image(std::move(out));
}

}  // namespace hairshift::testing
