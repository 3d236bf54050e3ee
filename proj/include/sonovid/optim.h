// optim.h — Adam with optional cosine learning-rate decay.
#pragma once

#include <cmath>
#include <cstdint>

#include "sonovid/nn.h"

namespace sonovid {

template <typename S>
struct AdamT {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;

    void step(ParamSetT<S>& ps) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& p : ps.items()) {
            auto& v = p->value.data;
            auto& g = p->grad.data;
            auto& m1 = p->adam_m.data;
            auto& m2 = p->adam_v.data;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double m = beta1 * static_cast<double>(m1[i]) + (1.0 - beta1) * gi;
                const double u = beta2 * static_cast<double>(m2[i]) + (1.0 - beta2) * gi * gi;
                m1[i] = static_cast<S>(m);
                m2[i] = static_cast<S>(u);
                v[i] -= static_cast<S>(lr * (m / bc1) / (std::sqrt(u / bc2) + eps));
            }
        }
    }
};

using Adam = AdamT<float>;

inline double cosine_lr(double base, std::int64_t step, std::int64_t total) {
    if (total <= 0 || step >= total) return 0.0;
    if (step < 0) step = 0;
    const double pi = 3.14159265358979323846;
    return base * 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total)));
}

// Scales all gradients so the global L2 norm is at most max_norm.
template <typename S>
double clip_grad_norm(ParamSetT<S>& ps, double max_norm) {
    double sq = 0.0;
    for (auto& p : ps.items())
        for (S g : p->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const S k = static_cast<S>(max_norm / norm);
        for (auto& p : ps.items())
            for (S& g : p->grad.data) g *= k;
    }
    return norm;
}

}  // namespace sonovid
