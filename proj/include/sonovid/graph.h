// graph.h — small reverse-mode autodiff on flat tensors.
//
// A GraphT is a per-step arena of nodes. Forward passes append nodes;
// backward() walks the tape once in reverse. Parameters live outside the
// graph (ParamT) and receive accumulated gradients after backward.
// Templated on scalar so tests can run the same compositions in double
// precision for finite-difference checks while training runs in float.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sonovid/tensor.h"

namespace sonovid {

template <typename S>
struct ParamT {
    std::string name;
    TensorT<S> value;
    TensorT<S> grad;
    TensorT<S> adam_m, adam_v;

    ParamT() = default;
    ParamT(std::string n, TensorT<S> v) : name(std::move(n)), value(std::move(v)) {
        grad = TensorT<S>(value.shape);
        adam_m = TensorT<S>(value.shape);
        adam_v = TensorT<S>(value.shape);
    }
};

using Param = ParamT<float>;

template <typename S>
class GraphT;

template <typename S>
struct VarT {
    GraphT<S>* g = nullptr;
    int id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const TensorT<S>& value() const;
    const std::vector<int>& shape() const { return value().shape; }
};

template <typename S>
class GraphT {
public:
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<Mat>;
    using CMapM = Eigen::Map<const Mat>;

    struct Node {
        TensorT<S> value;
        TensorT<S> grad;
        bool needs_grad = false;
        std::function<void()> back;  // empty for leaves / grad-free nodes
    };

    std::vector<Node> nodes;

    VarT<S> leaf(TensorT<S> v, bool needs_grad = false) {
        nodes.push_back(Node{std::move(v), {}, needs_grad, {}});
        return VarT<S>{this, static_cast<int>(nodes.size()) - 1};
    }

    VarT<S> constant(TensorT<S> v) { return leaf(std::move(v), false); }

    // Trainable parameter: gradients are accumulated into p.grad by
    // accumulate_param_grads() after backward(). Repeated use of the same
    // parameter in one graph shares a single leaf.
    VarT<S> param(ParamT<S>& p) {
        auto it = param_cache_.find(&p);
        if (it != param_cache_.end()) return VarT<S>{this, it->second};
        VarT<S> v = leaf(p.value, true);
        param_links_.push_back({v.id, &p});
        param_cache_[&p] = v.id;
        return v;
    }

    VarT<S> frozen(const ParamT<S>& p) {
        auto it = frozen_cache_.find(&p);
        if (it != frozen_cache_.end()) return VarT<S>{this, it->second};
        VarT<S> v = leaf(p.value, false);
        frozen_cache_[&p] = v.id;
        return v;
    }

    TensorT<S>& val(int id) { return nodes[static_cast<std::size_t>(id)].value; }
    TensorT<S>& grd(int id) { return nodes[static_cast<std::size_t>(id)].grad; }
    bool wants(int id) const { return nodes[static_cast<std::size_t>(id)].needs_grad; }

    void backward(VarT<S> loss) {
        if (loss.g != this) throw std::invalid_argument("backward: foreign var");
        if (val(loss.id).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
        const int top = loss.id;
        for (int i = 0; i <= top; ++i) {
            Node& n = nodes[static_cast<std::size_t>(i)];
            if (n.needs_grad) {
                n.grad = TensorT<S>(n.value.shape);
            }
        }
        grd(top)[0] = S(1);
        for (int i = top; i >= 0; --i) {
            Node& n = nodes[static_cast<std::size_t>(i)];
            if (n.needs_grad && n.back) n.back();
        }
    }

    void accumulate_param_grads() {
        for (auto& [id, p] : param_links_) {
            const TensorT<S>& ng = grd(id);
            if (ng.data.empty()) continue;  // backward never reached this leaf
            for (std::size_t i = 0; i < p->grad.data.size(); ++i) p->grad.data[i] += ng.data[i];
        }
    }

private:
    std::vector<std::pair<int, ParamT<S>*>> param_links_;
    std::unordered_map<ParamT<S>*, int> param_cache_;
    std::unordered_map<const ParamT<S>*, int> frozen_cache_;
};

template <typename S>
const TensorT<S>& VarT<S>::value() const {
    return g->val(id);
}

using Graph = GraphT<float>;
using Var = VarT<float>;

namespace detail {

template <typename S>
GraphT<S>& same_graph(VarT<S> a, VarT<S> b) {
    if (a.g != b.g) throw std::invalid_argument("op: vars from different graphs");
    return *a.g;
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> add(VarT<S> a, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(a, b);
    detail::require(g.val(a.id).shape == g.val(b.id).shape, "add: shape mismatch");
    TensorT<S> out(g.val(a.id).shape);
    const auto& av = g.val(a.id).data;
    const auto& bv = g.val(b.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] + bv[i];
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, bi] {
            const auto& go = gp->grd(oi).data;
            if (gp->wants(ai)) {
                auto& ga = gp->grd(ai).data;
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (gp->wants(bi)) {
                auto& gb = gp->grd(bi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        };
    }
    return o;
}

template <typename S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(a, b);
    detail::require(g.val(a.id).shape == g.val(b.id).shape, "sub: shape mismatch");
    TensorT<S> out(g.val(a.id).shape);
    const auto& av = g.val(a.id).data;
    const auto& bv = g.val(b.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] - bv[i];
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, bi] {
            const auto& go = gp->grd(oi).data;
            if (gp->wants(ai)) {
                auto& ga = gp->grd(ai).data;
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (gp->wants(bi)) {
                auto& gb = gp->grd(bi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        };
    }
    return o;
}

template <typename S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(a, b);
    detail::require(g.val(a.id).shape == g.val(b.id).shape, "mul: shape mismatch");
    TensorT<S> out(g.val(a.id).shape);
    const auto& av = g.val(a.id).data;
    const auto& bv = g.val(b.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] * bv[i];
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, bi] {
            const auto& go = gp->grd(oi).data;
            const auto& av2 = gp->val(ai).data;
            const auto& bv2 = gp->val(bi).data;
            if (gp->wants(ai)) {
                auto& ga = gp->grd(ai).data;
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
            }
            if (gp->wants(bi)) {
                auto& gb = gp->grd(bi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
            }
        };
    }
    return o;
}

template <typename S>
VarT<S> scale(VarT<S> a, double c) {
    GraphT<S>& g = *a.g;
    TensorT<S> out(g.val(a.id).shape);
    const auto& av = g.val(a.id).data;
    const S cs = static_cast<S>(c);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] * cs;
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, cs] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * cs;
        };
    }
    return o;
}

template <typename S>
VarT<S> add_scalar(VarT<S> a, double c) {
    GraphT<S>& g = *a.g;
    TensorT<S> out(g.val(a.id).shape);
    const auto& av = g.val(a.id).data;
    const S cs = static_cast<S>(c);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av[i] + cs;
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return o;
}

// Generic unary op: y = f(x), dx += df(x, y) * dy.
template <typename S, typename F, typename DF>
VarT<S> unary_op(VarT<S> a, F f, DF df) {
    GraphT<S>& g = *a.g;
    TensorT<S> out(g.val(a.id).shape);
    const auto& av = g.val(a.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(av[i]);
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, df] {
            const auto& go = gp->grd(oi).data;
            const auto& av2 = gp->val(ai).data;
            const auto& ov = gp->val(oi).data;
            auto& ga = gp->grd(ai).data;
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * df(av2[i], ov[i]);
        };
    }
    return o;
}

template <typename S>
VarT<S> leaky_relu(VarT<S> a, double slope = 0.2) {
    const S sl = static_cast<S>(slope);
    return unary_op(
        a, [sl](S x) { return x >= S(0) ? x : sl * x; },
        [sl](S x, S) { return x >= S(0) ? S(1) : sl; });
}

template <typename S>
VarT<S> tanh_op(VarT<S> a) {
    return unary_op(
        a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
VarT<S> sigmoid_op(VarT<S> a) {
    return unary_op(
        a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
        [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
VarT<S> softplus_op(VarT<S> a) {
    // log(1 + e^x), stable for large |x|
    return unary_op(
        a,
        [](S x) {
            if (x > S(20)) return x;
            if (x < S(-20)) return std::exp(x);
            return std::log(S(1) + std::exp(x));
        },
        [](S x, S) { return S(1) / (S(1) + std::exp(-x)); });
}

template <typename S>
VarT<S> square(VarT<S> a) {
    return unary_op(
        a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <typename S>
VarT<S> rsqrt(VarT<S> a, double eps) {
    const S e = static_cast<S>(eps);
    return unary_op(
        a, [e](S x) { return S(1) / std::sqrt(x + e); },
        [](S, S y) { return S(-0.5) * y * y * y; });
}

template <typename S>
VarT<S> detach(VarT<S> a) {
    return a.g->leaf(a.g->val(a.id), false);
}

// x * s with s a one-element variable (e.g. a learnable temperature).
template <typename S>
VarT<S> scale_by(VarT<S> x, VarT<S> s) {
    GraphT<S>& g = detail::same_graph(x, s);
    detail::require(g.val(s.id).numel() == 1, "scale_by: scalar must have one element");
    TensorT<S> out(g.val(x.id).shape);
    const auto& xv = g.val(x.id).data;
    const S sv = g.val(s.id)[0];
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv[i] * sv;
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(s.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, si = s.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, si] {
            const auto& go = gp->grd(oi).data;
            const S sv2 = gp->val(si)[0];
            if (gp->wants(xi)) {
                auto& gx = gp->grd(xi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * sv2;
            }
            if (gp->wants(si)) {
                const auto& xv2 = gp->val(xi).data;
                S acc = 0;
                for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * xv2[i];
                gp->grd(si)[0] += acc;
            }
        };
    }
    return o;
}

template <typename S>
VarT<S> exp_op(VarT<S> a) {
    return unary_op(
        a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> sum_all(VarT<S> a) {
    GraphT<S>& g = *a.g;
    S s = 0;
    for (S v : g.val(a.id).data) s += v;
    TensorT<S> out({1});
    out[0] = s;
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai] {
            const S go = gp->grd(oi)[0];
            auto& ga = gp->grd(ai).data;
            for (auto& v : ga) v += go;
        };
    }
    return o;
}

template <typename S>
VarT<S> mean_all(VarT<S> a) {
    const double n = static_cast<double>(a.g->val(a.id).numel());
    detail::require(n > 0, "mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / n);
}

// Row-wise dot product of two [B,d] matrices -> [B].
template <typename S>
VarT<S> row_dot(VarT<S> a, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(a, b);
    const auto& sa = g.val(a.id).shape;
    detail::require(sa == g.val(b.id).shape && sa.size() == 2, "row_dot: want matching [B,d]");
    const int B = sa[0], d = sa[1];
    TensorT<S> out({B});
    const auto& av = g.val(a.id).data;
    const auto& bv = g.val(b.id).data;
    for (int r = 0; r < B; ++r) {
        S s = 0;
        for (int j = 0; j < d; ++j) s += av[static_cast<std::size_t>(r) * d + j] * bv[static_cast<std::size_t>(r) * d + j];
        out[r] = s;
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, bi, B, d] {
            const auto& go = gp->grd(oi).data;
            const auto& av2 = gp->val(ai).data;
            const auto& bv2 = gp->val(bi).data;
            for (int r = 0; r < B; ++r) {
                const S gr = go[static_cast<std::size_t>(r)];
                if (gp->wants(ai)) {
                    auto& ga = gp->grd(ai).data;
                    for (int j = 0; j < d; ++j)
                        ga[static_cast<std::size_t>(r) * d + j] += gr * bv2[static_cast<std::size_t>(r) * d + j];
                }
                if (gp->wants(bi)) {
                    auto& gb = gp->grd(bi).data;
                    for (int j = 0; j < d; ++j)
                        gb[static_cast<std::size_t>(r) * d + j] += gr * av2[static_cast<std::size_t>(r) * d + j];
                }
            }
        };
    }
    return o;
}

// L2-normalize each row of [B,d].
template <typename S>
VarT<S> row_l2_normalize(VarT<S> a, double eps = 1e-12) {
    GraphT<S>& g = *a.g;
    const auto& sa = g.val(a.id).shape;
    detail::require(sa.size() == 2, "row_l2_normalize: want [B,d]");
    const int B = sa[0], d = sa[1];
    TensorT<S> out(sa);
    std::vector<S> inv_norm(static_cast<std::size_t>(B));
    const auto& av = g.val(a.id).data;
    for (int r = 0; r < B; ++r) {
        double s = eps;
        for (int j = 0; j < d; ++j) {
            const double x = static_cast<double>(av[static_cast<std::size_t>(r) * d + j]);
            s += x * x;
        }
        const S inv = static_cast<S>(1.0 / std::sqrt(s));
        inv_norm[static_cast<std::size_t>(r)] = inv;
        for (int j = 0; j < d; ++j)
            out[static_cast<std::size_t>(r) * d + j] = av[static_cast<std::size_t>(r) * d + j] * inv;
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, B, d, inv_norm = std::move(inv_norm)] {
            const auto& go = gp->grd(oi).data;
            const auto& yv = gp->val(oi).data;
            auto& ga = gp->grd(ai).data;
            for (int r = 0; r < B; ++r) {
                S dot = 0;
                for (int j = 0; j < d; ++j)
                    dot += go[static_cast<std::size_t>(r) * d + j] * yv[static_cast<std::size_t>(r) * d + j];
                const S inv = inv_norm[static_cast<std::size_t>(r)];
                for (int j = 0; j < d; ++j) {
                    const std::size_t k = static_cast<std::size_t>(r) * d + j;
                    ga[k] += (go[k] - yv[k] * dot) * inv;
                }
            }
        };
    }
    return o;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(a, b);
    const auto& sa = g.val(a.id).shape;
    const auto& sb = g.val(b.id).shape;
    detail::require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0],
                    "matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    const int m = sa[0], k = sa[1], n = sb[1];
    TensorT<S> out({m, n});
    {
        typename GraphT<S>::CMapM A(g.val(a.id).ptr(), m, k);
        typename GraphT<S>::CMapM B(g.val(b.id).ptr(), k, n);
        typename GraphT<S>::MapM C(out.ptr(), m, n);
        C.noalias() = A * B;
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, bi, m, k, n] {
            typename GraphT<S>::CMapM dC(gp->grd(oi).ptr(), m, n);
            if (gp->wants(ai)) {
                typename GraphT<S>::CMapM B(gp->val(bi).ptr(), k, n);
                typename GraphT<S>::MapM dA(gp->grd(ai).ptr(), m, k);
                dA.noalias() += dC * B.transpose();
            }
            if (gp->wants(bi)) {
                typename GraphT<S>::CMapM A(gp->val(ai).ptr(), m, k);
                typename GraphT<S>::MapM dB(gp->grd(bi).ptr(), k, n);
                dB.noalias() += A.transpose() * dC;
            }
        };
    }
    return o;
}

// C = A * B^T  with A [m,k], B [n,k] -> [m,n]
template <typename S>
VarT<S> matmul_nt(VarT<S> a, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(a, b);
    const auto& sa = g.val(a.id).shape;
    const auto& sb = g.val(b.id).shape;
    detail::require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[1],
                    "matmul_nt: incompatible shapes");
    const int m = sa[0], k = sa[1], n = sb[0];
    TensorT<S> out({m, n});
    {
        typename GraphT<S>::CMapM A(g.val(a.id).ptr(), m, k);
        typename GraphT<S>::CMapM B(g.val(b.id).ptr(), n, k);
        typename GraphT<S>::MapM C(out.ptr(), m, n);
        C.noalias() = A * B.transpose();
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, bi, m, k, n] {
            typename GraphT<S>::CMapM dC(gp->grd(oi).ptr(), m, n);
            if (gp->wants(ai)) {
                typename GraphT<S>::CMapM B(gp->val(bi).ptr(), n, k);
                typename GraphT<S>::MapM dA(gp->grd(ai).ptr(), m, k);
                dA.noalias() += dC * B;
            }
            if (gp->wants(bi)) {
                typename GraphT<S>::CMapM A(gp->val(ai).ptr(), m, k);
                typename GraphT<S>::MapM dB(gp->grd(bi).ptr(), n, k);
                dB.noalias() += dC.transpose() * A;
            }
        };
    }
    return o;
}

// x [B,N] + bias [N], broadcast over rows
template <typename S>
VarT<S> add_bias_cols(VarT<S> x, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(x, b);
    const auto& sx = g.val(x.id).shape;
    const auto& sb = g.val(b.id).shape;
    detail::require(sx.size() == 2 && sb.size() == 1 && sb[0] == sx[1], "add_bias_cols: shapes");
    const int B = sx[0], N = sx[1];
    TensorT<S> out(sx);
    const auto& xv = g.val(x.id).data;
    const auto& bv = g.val(b.id).data;
    for (int r = 0; r < B; ++r)
        for (int j = 0; j < N; ++j)
            out[static_cast<std::size_t>(r) * N + j] = xv[static_cast<std::size_t>(r) * N + j] + bv[static_cast<std::size_t>(j)];
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, bi, B, N] {
            const auto& go = gp->grd(oi).data;
            if (gp->wants(xi)) {
                auto& gx = gp->grd(xi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            }
            if (gp->wants(bi)) {
                auto& gb = gp->grd(bi).data;
                for (int r = 0; r < B; ++r)
                    for (int j = 0; j < N; ++j) gb[static_cast<std::size_t>(j)] += go[static_cast<std::size_t>(r) * N + j];
            }
        };
    }
    return o;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> reshape(VarT<S> a, std::vector<int> new_shape) {
    GraphT<S>& g = *a.g;
    detail::require(TensorT<S>::numel_of(new_shape) == g.val(a.id).numel(), "reshape: numel mismatch");
    TensorT<S> out(std::move(new_shape), g.val(a.id).data);
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return o;
}

template <typename S>
VarT<S> slice_cols(VarT<S> a, int start, int len) {
    GraphT<S>& g = *a.g;
    const auto& sa = g.val(a.id).shape;
    detail::require(sa.size() == 2 && start >= 0 && len > 0 && start + len <= sa[1], "slice_cols: range");
    const int B = sa[0], N = sa[1];
    TensorT<S> out({B, len});
    const auto& av = g.val(a.id).data;
    for (int r = 0; r < B; ++r)
        for (int j = 0; j < len; ++j)
            out[static_cast<std::size_t>(r) * len + j] = av[static_cast<std::size_t>(r) * N + start + j];
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, B, N, start, len] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (int r = 0; r < B; ++r)
                for (int j = 0; j < len; ++j)
                    ga[static_cast<std::size_t>(r) * N + start + j] += go[static_cast<std::size_t>(r) * len + j];
        };
    }
    return o;
}

template <typename S>
VarT<S> concat_cols(const std::vector<VarT<S>>& parts) {
    detail::require(!parts.empty(), "concat_cols: empty");
    GraphT<S>& g = *parts[0].g;
    const int B = g.val(parts[0].id).shape[0];
    int total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        const auto& sp = g.val(p.id).shape;
        detail::require(p.g == &g && sp.size() == 2 && sp[0] == B, "concat_cols: shapes");
        total += sp[1];
        any_grad = any_grad || g.wants(p.id);
    }
    TensorT<S> out({B, total});
    int off = 0;
    for (const auto& p : parts) {
        const int w = g.val(p.id).shape[1];
        const auto& pv = g.val(p.id).data;
        for (int r = 0; r < B; ++r)
            for (int j = 0; j < w; ++j)
                out[static_cast<std::size_t>(r) * total + off + j] = pv[static_cast<std::size_t>(r) * w + j];
        off += w;
    }
    VarT<S> o = g.leaf(std::move(out), any_grad);
    if (o.g->wants(o.id)) {
        std::vector<int> ids;
        std::vector<int> widths;
        for (const auto& p : parts) {
            ids.push_back(p.id);
            widths.push_back(g.val(p.id).shape[1]);
        }
        int oi = o.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ids, widths, B, total] {
            const auto& go = gp->grd(oi).data;
            int off2 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                const int w = widths[k];
                if (gp->wants(ids[k])) {
                    auto& gpk = gp->grd(ids[k]).data;
                    for (int r = 0; r < B; ++r)
                        for (int j = 0; j < w; ++j)
                            gpk[static_cast<std::size_t>(r) * w + j] += go[static_cast<std::size_t>(r) * total + off2 + j];
                }
                off2 += w;
            }
        };
    }
    return o;
}

// Stack along dim 0; all parts must share trailing shape.
template <typename S>
VarT<S> concat0(const std::vector<VarT<S>>& parts) {
    detail::require(!parts.empty(), "concat0: empty");
    GraphT<S>& g = *parts[0].g;
    std::vector<int> tail = g.val(parts[0].id).shape;
    tail.erase(tail.begin());
    int total0 = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        std::vector<int> t = g.val(p.id).shape;
        detail::require(p.g == &g && !t.empty(), "concat0: shapes");
        const int n0 = t[0];
        t.erase(t.begin());
        detail::require(t == tail, "concat0: trailing shape mismatch");
        total0 += n0;
        any_grad = any_grad || g.wants(p.id);
    }
    std::vector<int> osh = tail;
    osh.insert(osh.begin(), total0);
    TensorT<S> out(osh);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& pv = g.val(p.id).data;
        std::copy(pv.begin(), pv.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += pv.size();
    }
    VarT<S> o = g.leaf(std::move(out), any_grad);
    if (o.g->wants(o.id)) {
        std::vector<int> ids;
        std::vector<std::size_t> sizes;
        for (const auto& p : parts) {
            ids.push_back(p.id);
            sizes.push_back(g.val(p.id).data.size());
        }
        int oi = o.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ids, sizes] {
            const auto& go = gp->grd(oi).data;
            std::size_t off2 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (gp->wants(ids[k])) {
                    auto& gpk = gp->grd(ids[k]).data;
                    for (std::size_t i = 0; i < sizes[k]; ++i) gpk[i] += go[off2 + i];
                }
                off2 += sizes[k];
            }
        };
    }
    return o;
}

template <typename S>
VarT<S> slice0(VarT<S> a, int start, int len) {
    GraphT<S>& g = *a.g;
    const auto& sa = g.val(a.id).shape;
    detail::require(!sa.empty() && start >= 0 && len > 0 && start + len <= sa[0], "slice0: range");
    std::int64_t stride = 1;
    for (std::size_t i = 1; i < sa.size(); ++i) stride *= sa[i];
    std::vector<int> osh = sa;
    osh[0] = len;
    TensorT<S> out(osh);
    const auto& av = g.val(a.id).data;
    std::copy(av.begin() + start * stride, av.begin() + (start + len) * stride, out.data.begin());
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, start, stride] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (std::size_t i = 0; i < go.size(); ++i)
                ga[static_cast<std::size_t>(start * stride) + i] += go[i];
        };
    }
    return o;
}

// Gather rows along dim 0: out[k] = x[idx[k]]. Backward scatter-adds.
template <typename S>
VarT<S> gather0(VarT<S> a, std::vector<int> idx) {
    GraphT<S>& g = *a.g;
    const auto& sa = g.val(a.id).shape;
    detail::require(!sa.empty(), "gather0: rank");
    std::int64_t stride = 1;
    for (std::size_t i = 1; i < sa.size(); ++i) stride *= sa[i];
    for (int k : idx) detail::require(k >= 0 && k < sa[0], "gather0: index out of range");
    std::vector<int> osh = sa;
    osh[0] = static_cast<int>(idx.size());
    TensorT<S> out(osh);
    const auto& av = g.val(a.id).data;
    for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy(av.begin() + idx[k] * stride, av.begin() + (idx[k] + 1) * stride,
                  out.data.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(stride)));
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, idx = std::move(idx), stride] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (std::size_t k = 0; k < idx.size(); ++k)
                for (std::int64_t i = 0; i < stride; ++i)
                    ga[static_cast<std::size_t>(idx[k] * stride + i)] += go[k * static_cast<std::size_t>(stride) + static_cast<std::size_t>(i)];
        };
    }
    return o;
}

// Replicate a tensor B times along a new leading dim.
template <typename S>
VarT<S> broadcast0(VarT<S> a, int B) {
    GraphT<S>& g = *a.g;
    detail::require(B > 0, "broadcast0: B");
    const auto& sa = g.val(a.id).shape;
    std::vector<int> osh = sa;
    osh.insert(osh.begin(), B);
    TensorT<S> out(osh);
    const auto& av = g.val(a.id).data;
    const std::size_t n = av.size();
    for (int b = 0; b < B; ++b) std::copy(av.begin(), av.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * n));
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, B, n] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (int b = 0; b < B; ++b)
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[static_cast<std::size_t>(b) * n + i];
        };
    }
    return o;
}

// [B,d] -> [B, L*d] by repeating each row L times (one copy per style layer).
template <typename S>
VarT<S> tile_cols(VarT<S> a, int L) {
    GraphT<S>& g = *a.g;
    const auto& sa = g.val(a.id).shape;
    detail::require(sa.size() == 2 && L > 0, "tile_cols: args");
    const int B = sa[0], d = sa[1];
    TensorT<S> out({B, L * d});
    const auto& av = g.val(a.id).data;
    for (int r = 0; r < B; ++r)
        for (int l = 0; l < L; ++l)
            for (int j = 0; j < d; ++j)
                out[(static_cast<std::size_t>(r) * L + l) * d + j] = av[static_cast<std::size_t>(r) * d + j];
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, B, d, L] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (int r = 0; r < B; ++r)
                for (int l = 0; l < L; ++l)
                    for (int j = 0; j < d; ++j)
                        ga[static_cast<std::size_t>(r) * d + j] += go[(static_cast<std::size_t>(r) * L + l) * d + j];
        };
    }
    return o;
}

// Regroup a frame batch laid out t-major ([t0b0, t0b1, ..., t1b0, ...],
// shape [T*B, C, H, W]) into video layout [B, C, T, H, W].
template <typename S>
VarT<S> frames_to_video(VarT<S> a, int T, int B) {
    GraphT<S>& g = *a.g;
    const auto& sa = g.val(a.id).shape;
    detail::require(sa.size() == 4 && sa[0] == T * B, "frames_to_video: shape");
    const int C = sa[1], H = sa[2], W = sa[3];
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    TensorT<S> out({B, C, T, H, W});
    const auto& av = g.val(a.id).data;
    for (int t = 0; t < T; ++t)
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const std::size_t src = ((static_cast<std::size_t>(t) * B + b) * C + c) * hw;
                const std::size_t dst = ((static_cast<std::size_t>(b) * C + c) * T + t) * hw;
                std::copy(av.begin() + static_cast<std::ptrdiff_t>(src), av.begin() + static_cast<std::ptrdiff_t>(src + hw),
                          out.data.begin() + static_cast<std::ptrdiff_t>(dst));
            }
    VarT<S> o = g.leaf(std::move(out), g.wants(a.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, ai = a.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, ai, T, B, C, hw] {
            const auto& go = gp->grd(oi).data;
            auto& ga = gp->grd(ai).data;
            for (int t = 0; t < T; ++t)
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        const std::size_t src = ((static_cast<std::size_t>(t) * B + b) * C + c) * hw;
                        const std::size_t dst = ((static_cast<std::size_t>(b) * C + c) * T + t) * hw;
                        for (std::size_t i = 0; i < hw; ++i) ga[src + i] += go[dst + i];
                    }
        };
    }
    return o;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean softmax cross entropy over rows of logits [B,C] against integer labels.
template <typename S>
VarT<S> softmax_cross_entropy(VarT<S> logits, std::vector<int> labels) {
    GraphT<S>& g = *logits.g;
    const auto& sl = g.val(logits.id).shape;
    detail::require(sl.size() == 2 && static_cast<int>(labels.size()) == sl[0], "softmax_ce: shapes");
    const int B = sl[0], C = sl[1];
    for (int y : labels) detail::require(y >= 0 && y < C, "softmax_ce: label range");
    const auto& lv = g.val(logits.id).data;
    auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B) * C);
    double loss = 0.0;
    for (int r = 0; r < B; ++r) {
        const S* row = &lv[static_cast<std::size_t>(r) * C];
        S mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += std::exp(static_cast<double>(row[c] - mx));
        const double lse = std::log(sum) + static_cast<double>(mx);
        loss += lse - static_cast<double>(row[labels[static_cast<std::size_t>(r)]]);
        for (int c = 0; c < C; ++c)
            (*probs)[static_cast<std::size_t>(r) * C + c] =
                static_cast<S>(std::exp(static_cast<double>(row[c]) - lse));
    }
    TensorT<S> out({1});
    out[0] = static_cast<S>(loss / B);
    VarT<S> o = g.leaf(std::move(out), g.wants(logits.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, li = logits.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, li, B, C, labels = std::move(labels), probs] {
            const S go = gp->grd(oi)[0];
            auto& gl = gp->grd(li).data;
            const S invB = static_cast<S>(1.0 / B);
            for (int r = 0; r < B; ++r)
                for (int c = 0; c < C; ++c) {
                    S p = (*probs)[static_cast<std::size_t>(r) * C + c];
                    if (c == labels[static_cast<std::size_t>(r)]) p -= S(1);
                    gl[static_cast<std::size_t>(r) * C + c] += go * p * invB;
                }
        };
    }
    return o;
}

// ---------------------------------------------------------------------------
// convolution (im2col + GEMM), 2d and 3d
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int sy, int sx, int py, int px,
            int Ho, int Wo, S* col) {
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                S* dst = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * (static_cast<std::size_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * sy - py + ky;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = S(0);
                        continue;
                    }
                    const S* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * sx - px + kx;
                        dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
                    }
                }
            }
}

template <typename S>
void col2im_add(const S* col, int C, int H, int W, int kh, int kw, int sy, int sx, int py, int px,
                int Ho, int Wo, S* dx) {
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const S* src = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * (static_cast<std::size_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * sy - py + ky;
                    if (iy < 0 || iy >= H) continue;
                    S* dst = dx + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * sx - px + kx;
                        if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
                    }
                }
            }
}

template <typename S>
void vol2col(const S* x, int C, int T, int H, int W, int kt, int kh, int kw, int st, int sy, int sx,
             int pt, int py, int px, int To, int Ho, int Wo, S* col) {
    const std::size_t P = static_cast<std::size_t>(To) * Ho * Wo;
    for (int c = 0; c < C; ++c)
        for (int ktt = 0; ktt < kt; ++ktt)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    S* dst = col + (((static_cast<std::size_t>(c) * kt + ktt) * kh + ky) * kw + kx) * P;
                    for (int ot = 0; ot < To; ++ot) {
                        const int it = ot * st - pt + ktt;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * sy - py + ky;
                            S* drow = dst + (static_cast<std::size_t>(ot) * Ho + oy) * Wo;
                            if (it < 0 || it >= T || iy < 0 || iy >= H) {
                                for (int ox = 0; ox < Wo; ++ox) drow[ox] = S(0);
                                continue;
                            }
                            const S* src = x + ((static_cast<std::size_t>(c) * T + it) * H + iy) * W;
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * sx - px + kx;
                                drow[ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
                            }
                        }
                    }
                }
}

template <typename S>
void col2vol_add(const S* col, int C, int T, int H, int W, int kt, int kh, int kw, int st, int sy,
                 int sx, int pt, int py, int px, int To, int Ho, int Wo, S* dx) {
    const std::size_t P = static_cast<std::size_t>(To) * Ho * Wo;
    for (int c = 0; c < C; ++c)
        for (int ktt = 0; ktt < kt; ++ktt)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    const S* src = col + (((static_cast<std::size_t>(c) * kt + ktt) * kh + ky) * kw + kx) * P;
                    for (int ot = 0; ot < To; ++ot) {
                        const int it = ot * st - pt + ktt;
                        if (it < 0 || it >= T) continue;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * sy - py + ky;
                            if (iy < 0 || iy >= H) continue;
                            const S* srow = src + (static_cast<std::size_t>(ot) * Ho + oy) * Wo;
                            S* dst = dx + ((static_cast<std::size_t>(c) * T + it) * H + iy) * W;
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * sx - px + kx;
                                if (ix >= 0 && ix < W) dst[ix] += srow[ox];
                            }
                        }
                    }
                }
}

}  // namespace detail

// conv2d: x [B,Ci,H,W], w [Co,Ci,kh,kw] -> [B,Co,Ho,Wo]
template <typename S>
VarT<S> conv2d(VarT<S> x, VarT<S> w, int stride, int pad) {
    GraphT<S>& g = detail::same_graph(x, w);
    const auto& sx = g.val(x.id).shape;
    const auto& sw = g.val(w.id).shape;
    detail::require(sx.size() == 4 && sw.size() == 4 && sx[1] == sw[1], "conv2d: shapes");
    const int B = sx[0], Ci = sx[1], H = sx[2], W = sx[3];
    const int Co = sw[0], kh = sw[2], kw = sw[3];
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    detail::require(Ho > 0 && Wo > 0, "conv2d: output would be empty");
    const int K = Ci * kh * kw;
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    TensorT<S> out({B, Co, Ho, Wo});
    {
        std::vector<S> col(static_cast<std::size_t>(K) * P);
        typename GraphT<S>::CMapM Wm(g.val(w.id).ptr(), Co, K);
        for (int b = 0; b < B; ++b) {
            detail::im2col(g.val(x.id).ptr() + static_cast<std::size_t>(b) * Ci * H * W, Ci, H, W, kh,
                           kw, stride, stride, pad, pad, Ho, Wo, col.data());
            typename GraphT<S>::CMapM Cm(col.data(), K, static_cast<int>(P));
            typename GraphT<S>::MapM Om(out.ptr() + static_cast<std::size_t>(b) * Co * P, Co, static_cast<int>(P));
            Om.noalias() = Wm * Cm;
        }
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(w.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, wi = w.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, wi, B, Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo, K, P] {
            std::vector<S> col(static_cast<std::size_t>(K) * P);
            std::vector<S> dcol(static_cast<std::size_t>(K) * P);
            typename GraphT<S>::CMapM Wm(gp->val(wi).ptr(), Co, K);
            for (int b = 0; b < B; ++b) {
                typename GraphT<S>::CMapM dOm(gp->grd(oi).ptr() + static_cast<std::size_t>(b) * Co * P, Co, static_cast<int>(P));
                if (gp->wants(wi)) {
                    detail::im2col(gp->val(xi).ptr() + static_cast<std::size_t>(b) * Ci * H * W, Ci, H, W,
                                   kh, kw, stride, stride, pad, pad, Ho, Wo, col.data());
                    typename GraphT<S>::CMapM Cm(col.data(), K, static_cast<int>(P));
                    typename GraphT<S>::MapM dWm(gp->grd(wi).ptr(), Co, K);
                    dWm.noalias() += dOm * Cm.transpose();
                }
                if (gp->wants(xi)) {
                    typename GraphT<S>::MapM dCm(dcol.data(), K, static_cast<int>(P));
                    dCm.noalias() = Wm.transpose() * dOm;
                    detail::col2im_add(dcol.data(), Ci, H, W, kh, kw, stride, stride, pad, pad, Ho, Wo,
                                       gp->grd(xi).ptr() + static_cast<std::size_t>(b) * Ci * H * W);
                }
            }
        };
    }
    return o;
}

// conv3d: x [B,Ci,T,H,W], w [Co,Ci,kt,kh,kw], strides/pads per axis (t,y,x)
template <typename S>
VarT<S> conv3d(VarT<S> x, VarT<S> w, int st, int sy, int sx_, int pt, int py, int px) {
    GraphT<S>& g = detail::same_graph(x, w);
    const auto& sx = g.val(x.id).shape;
    const auto& sw = g.val(w.id).shape;
    detail::require(sx.size() == 5 && sw.size() == 5 && sx[1] == sw[1], "conv3d: shapes");
    const int B = sx[0], Ci = sx[1], T = sx[2], H = sx[3], W = sx[4];
    const int Co = sw[0], kt = sw[2], kh = sw[3], kw = sw[4];
    const int To = (T + 2 * pt - kt) / st + 1;
    const int Ho = (H + 2 * py - kh) / sy + 1;
    const int Wo = (W + 2 * px - kw) / sx_ + 1;
    detail::require(To > 0 && Ho > 0 && Wo > 0, "conv3d: clip too short for patch extent");
    const int K = Ci * kt * kh * kw;
    const std::size_t P = static_cast<std::size_t>(To) * Ho * Wo;
    const std::size_t in_sz = static_cast<std::size_t>(Ci) * T * H * W;
    TensorT<S> out({B, Co, To, Ho, Wo});
    {
        std::vector<S> col(static_cast<std::size_t>(K) * P);
        typename GraphT<S>::CMapM Wm(g.val(w.id).ptr(), Co, K);
        for (int b = 0; b < B; ++b) {
            detail::vol2col(g.val(x.id).ptr() + static_cast<std::size_t>(b) * in_sz, Ci, T, H, W, kt,
                            kh, kw, st, sy, sx_, pt, py, px, To, Ho, Wo, col.data());
            typename GraphT<S>::CMapM Cm(col.data(), K, static_cast<int>(P));
            typename GraphT<S>::MapM Om(out.ptr() + static_cast<std::size_t>(b) * Co * P, Co, static_cast<int>(P));
            Om.noalias() = Wm * Cm;
        }
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(w.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, wi = w.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, wi, B, Ci, T, H, W, Co, kt, kh, kw,
                                                        st, sy, sx_, pt, py, px, To, Ho, Wo, K, P, in_sz] {
            std::vector<S> col(static_cast<std::size_t>(K) * P);
            std::vector<S> dcol(static_cast<std::size_t>(K) * P);
            typename GraphT<S>::CMapM Wm(gp->val(wi).ptr(), Co, K);
            for (int b = 0; b < B; ++b) {
                typename GraphT<S>::CMapM dOm(gp->grd(oi).ptr() + static_cast<std::size_t>(b) * Co * P, Co, static_cast<int>(P));
                if (gp->wants(wi)) {
                    detail::vol2col(gp->val(xi).ptr() + static_cast<std::size_t>(b) * in_sz, Ci, T, H, W,
                                    kt, kh, kw, st, sy, sx_, pt, py, px, To, Ho, Wo, col.data());
                    typename GraphT<S>::CMapM Cm(col.data(), K, static_cast<int>(P));
                    typename GraphT<S>::MapM dWm(gp->grd(wi).ptr(), Co, K);
                    dWm.noalias() += dOm * Cm.transpose();
                }
                if (gp->wants(xi)) {
                    typename GraphT<S>::MapM dCm(dcol.data(), K, static_cast<int>(P));
                    dCm.noalias() = Wm.transpose() * dOm;
                    detail::col2vol_add(dcol.data(), Ci, T, H, W, kt, kh, kw, st, sy, sx_, pt, py, px,
                                        To, Ho, Wo, gp->grd(xi).ptr() + static_cast<std::size_t>(b) * in_sz);
                }
            }
        };
    }
    return o;
}

// x [B,C,spatial...] + bias [C]
template <typename S>
VarT<S> add_channel_bias(VarT<S> x, VarT<S> b) {
    GraphT<S>& g = detail::same_graph(x, b);
    const auto& sx = g.val(x.id).shape;
    const auto& sb = g.val(b.id).shape;
    detail::require(sx.size() >= 2 && sb.size() == 1 && sb[0] == sx[1], "add_channel_bias: shapes");
    const int B = sx[0], C = sx[1];
    std::int64_t spatial = 1;
    for (std::size_t i = 2; i < sx.size(); ++i) spatial *= sx[i];
    TensorT<S> out(sx);
    const auto& xv = g.val(x.id).data;
    const auto& bv = g.val(b.id).data;
    for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(bb) * C + c) * static_cast<std::size_t>(spatial);
            const S bc = bv[static_cast<std::size_t>(c)];
            for (std::int64_t i = 0; i < spatial; ++i) out[base + static_cast<std::size_t>(i)] = xv[base + static_cast<std::size_t>(i)] + bc;
        }
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(b.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, bi = b.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, bi, B, C, spatial] {
            const auto& go = gp->grd(oi).data;
            if (gp->wants(xi)) {
                auto& gx = gp->grd(xi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            }
            if (gp->wants(bi)) {
                auto& gb = gp->grd(bi).data;
                for (int bb = 0; bb < B; ++bb)
                    for (int c = 0; c < C; ++c) {
                        const std::size_t base = (static_cast<std::size_t>(bb) * C + c) * static_cast<std::size_t>(spatial);
                        S s = 0;
                        for (std::int64_t i = 0; i < spatial; ++i) s += go[base + static_cast<std::size_t>(i)];
                        gb[static_cast<std::size_t>(c)] += s;
                    }
            }
        };
    }
    return o;
}

// x [B,C,spatial...] scaled per (b,c) by s [B,C]
template <typename S>
VarT<S> channel_scale(VarT<S> x, VarT<S> s) {
    GraphT<S>& g = detail::same_graph(x, s);
    const auto& sx = g.val(x.id).shape;
    const auto& ss = g.val(s.id).shape;
    detail::require(sx.size() >= 2 && ss.size() == 2 && ss[0] == sx[0] && ss[1] == sx[1],
                    "channel_scale: shapes");
    const int B = sx[0], C = sx[1];
    std::int64_t spatial = 1;
    for (std::size_t i = 2; i < sx.size(); ++i) spatial *= sx[i];
    TensorT<S> out(sx);
    const auto& xv = g.val(x.id).data;
    const auto& sv = g.val(s.id).data;
    for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(bb) * C + c) * static_cast<std::size_t>(spatial);
            const S sc = sv[static_cast<std::size_t>(bb) * C + c];
            for (std::int64_t i = 0; i < spatial; ++i) out[base + static_cast<std::size_t>(i)] = xv[base + static_cast<std::size_t>(i)] * sc;
        }
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(s.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, si = s.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, si, B, C, spatial] {
            const auto& go = gp->grd(oi).data;
            const auto& xv2 = gp->val(xi).data;
            const auto& sv2 = gp->val(si).data;
            for (int bb = 0; bb < B; ++bb)
                for (int c = 0; c < C; ++c) {
                    const std::size_t base = (static_cast<std::size_t>(bb) * C + c) * static_cast<std::size_t>(spatial);
                    const S sc = sv2[static_cast<std::size_t>(bb) * C + c];
                    if (gp->wants(xi)) {
                        auto& gx = gp->grd(xi).data;
                        for (std::int64_t i = 0; i < spatial; ++i) gx[base + static_cast<std::size_t>(i)] += go[base + static_cast<std::size_t>(i)] * sc;
                    }
                    if (gp->wants(si)) {
                        S acc = 0;
                        for (std::int64_t i = 0; i < spatial; ++i) acc += go[base + static_cast<std::size_t>(i)] * xv2[base + static_cast<std::size_t>(i)];
                        gp->grd(si).data[static_cast<std::size_t>(bb) * C + c] += acc;
                    }
                }
        };
    }
    return o;
}

// Nearest-neighbour 2x upsample of [B,C,H,W].
template <typename S>
VarT<S> upsample2x(VarT<S> x) {
    GraphT<S>& g = *x.g;
    const auto& sx = g.val(x.id).shape;
    detail::require(sx.size() == 4, "upsample2x: want [B,C,H,W]");
    const int B = sx[0], C = sx[1], H = sx[2], W = sx[3];
    TensorT<S> out({B, C, 2 * H, 2 * W});
    const auto& xv = g.val(x.id).data;
    for (int bc = 0; bc < B * C; ++bc) {
        const S* src = &xv[static_cast<std::size_t>(bc) * H * W];
        S* dst = &out.data[static_cast<std::size_t>(bc) * 4 * H * W];
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                const S v = src[y * W + xx];
                const int oy = 2 * y, ox = 2 * xx;
                dst[oy * 2 * W + ox] = v;
                dst[oy * 2 * W + ox + 1] = v;
                dst[(oy + 1) * 2 * W + ox] = v;
                dst[(oy + 1) * 2 * W + ox + 1] = v;
            }
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, B, C, H, W] {
            const auto& go = gp->grd(oi).data;
            auto& gx = gp->grd(xi).data;
            for (int bc = 0; bc < B * C; ++bc) {
                const S* src = &go[static_cast<std::size_t>(bc) * 4 * H * W];
                S* dst = &gx[static_cast<std::size_t>(bc) * H * W];
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        const int oy = 2 * y, ox = 2 * xx;
                        dst[y * W + xx] += src[oy * 2 * W + ox] + src[oy * 2 * W + ox + 1] +
                                           src[(oy + 1) * 2 * W + ox] + src[(oy + 1) * 2 * W + ox + 1];
                    }
            }
        };
    }
    return o;
}

// Mean over all spatial dims: [B,C,...] -> [B,C]
template <typename S>
VarT<S> global_avg_pool(VarT<S> x) {
    GraphT<S>& g = *x.g;
    const auto& sx = g.val(x.id).shape;
    detail::require(sx.size() >= 3, "global_avg_pool: rank");
    const int B = sx[0], C = sx[1];
    std::int64_t spatial = 1;
    for (std::size_t i = 2; i < sx.size(); ++i) spatial *= sx[i];
    TensorT<S> out({B, C});
    const auto& xv = g.val(x.id).data;
    const S inv = static_cast<S>(1.0 / static_cast<double>(spatial));
    for (int bc = 0; bc < B * C; ++bc) {
        S s = 0;
        const std::size_t base = static_cast<std::size_t>(bc) * static_cast<std::size_t>(spatial);
        for (std::int64_t i = 0; i < spatial; ++i) s += xv[base + static_cast<std::size_t>(i)];
        out[bc] = s * inv;
    }
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, B, C, spatial, inv] {
            const auto& go = gp->grd(oi).data;
            auto& gx = gp->grd(xi).data;
            for (int bc = 0; bc < B * C; ++bc) {
                const S v = go[static_cast<std::size_t>(bc)] * inv;
                const std::size_t base = static_cast<std::size_t>(bc) * static_cast<std::size_t>(spatial);
                for (std::int64_t i = 0; i < spatial; ++i) gx[base + static_cast<std::size_t>(i)] += v;
            }
        };
    }
    return o;
}

// operator sugar
template <typename S>
VarT<S> operator+(VarT<S> a, VarT<S> b) { return add(a, b); }
template <typename S>
VarT<S> operator-(VarT<S> a, VarT<S> b) { return sub(a, b); }
template <typename S>
VarT<S> operator*(VarT<S> a, VarT<S> b) { return mul(a, b); }
template <typename S>
VarT<S> operator*(VarT<S> a, double c) { return scale(a, c); }
template <typename S>
VarT<S> operator*(double c, VarT<S> a) { return scale(a, c); }

}  // namespace sonovid
