// Shared finite-difference gradient checker. Runs compositions in double
// precision and compares analytic gradients against central differences.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sonovid/graph.h"
#include "sonovid/nn.h"
#include "sonovid/rng.h"

namespace gradcheck {

using sonovid::GraphT;
using sonovid::ParamSetT;
using sonovid::TensorD;
using sonovid::VarT;

using BuildFn = std::function<VarT<double>(GraphT<double>&, std::vector<VarT<double>>&)>;

// Scalarizes the output as sum(out * fixed_random_weights) so every output
// element contributes to the loss. Checks gradients w.r.t. every input
// element and, if a ParamSet is given, every parameter element.
inline double max_grad_err(std::vector<TensorD> inputs, const BuildFn& build,
                           ParamSetT<double>* ps = nullptr, double h = 1e-5) {
    TensorD wout;
    {
        GraphT<double> g;
        std::vector<VarT<double>> vs;
        for (auto& t : inputs) vs.push_back(g.leaf(t, false));
        VarT<double> out = build(g, vs);
        sonovid::RandomSource r(987654321);
        wout = TensorD(out.shape());
        r.fill_normal(wout, 1.0);
    }
    auto eval = [&]() -> double {
        GraphT<double> g;
        std::vector<VarT<double>> vs;
        for (auto& t : inputs) vs.push_back(g.leaf(t, false));
        VarT<double> out = build(g, vs);
        double s = 0.0;
        const auto& ov = out.value().data;
        for (std::size_t i = 0; i < ov.size(); ++i) s += ov[i] * wout.data[i];
        return s;
    };

    if (ps != nullptr) ps->zero_grad();
    GraphT<double> g;
    std::vector<VarT<double>> vs;
    for (auto& t : inputs) vs.push_back(g.leaf(t, true));
    VarT<double> out = build(g, vs);
    VarT<double> loss = sonovid::sum_all(sonovid::mul(out, g.leaf(wout, false)));
    g.backward(loss);
    if (ps != nullptr) g.accumulate_param_grads();

    double worst = 0.0;
    auto compare = [&](double ana, double num) {
        const double err = std::fabs(num - ana) / std::max({1.0, std::fabs(num), std::fabs(ana)});
        worst = std::max(worst, err);
    };
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const TensorD& ga = g.grd(vs[k].id);
        for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double fp = eval();
            inputs[k][i] = orig - h;
            const double fm = eval();
            inputs[k][i] = orig;
            compare(ga[i], (fp - fm) / (2.0 * h));
        }
    }
    if (ps != nullptr) {
        for (auto& p : ps->items()) {
            for (std::int64_t i = 0; i < p->value.numel(); ++i) {
                const double orig = p->value[i];
                p->value[i] = orig + h;
                const double fp = eval();
                p->value[i] = orig - h;
                const double fm = eval();
                p->value[i] = orig;
                compare(p->grad[i], (fp - fm) / (2.0 * h));
            }
        }
    }
    return worst;
}

inline TensorD random_tensor(sonovid::RandomSource& rng, std::vector<int> shape, double stddev = 1.0,
                             double mean = 0.0) {
    TensorD t(std::move(shape));
    rng.fill_normal(t, stddev, mean);
    return t;
}

// Same but with values pushed away from zero (for kinked activations).
inline TensorD random_tensor_away_from_zero(sonovid::RandomSource& rng, std::vector<int> shape,
                                            double min_abs = 0.05) {
    TensorD t = random_tensor(rng, std::move(shape));
    for (auto& v : t.data) {
        if (std::fabs(v) < min_abs) v = v >= 0 ? min_abs + 0.01 : -min_abs - 0.01;
    }
    return t;
}

}  // namespace gradcheck
