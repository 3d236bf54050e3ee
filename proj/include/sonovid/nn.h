// nn.h — parameter registry and the layer compositions used by the nets.
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sonovid/graph.h"
#include "sonovid/rng.h"
#include "sonovid/tensor.h"

namespace sonovid {

template <typename S>
class ParamSetT {
public:
    ParamT<S>& add(std::string name, TensorT<S> value) {
        if (find(name) != nullptr) throw std::invalid_argument("duplicate param name: " + name);
        items_.push_back(std::make_unique<ParamT<S>>(std::move(name), std::move(value)));
        return *items_.back();
    }

    ParamT<S>* find(const std::string& name) {
        for (auto& p : items_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    const std::vector<std::unique_ptr<ParamT<S>>>& items() const { return items_; }
    std::vector<std::unique_ptr<ParamT<S>>>& items() { return items_; }

    void zero_grad() {
        for (auto& p : items_) p->grad.zero();
    }

    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& p : items_) n += p->value.numel();
        return n;
    }

private:
    std::vector<std::unique_ptr<ParamT<S>>> items_;
};

using ParamSet = ParamSetT<float>;

template <typename S>
VarT<S> pvar(GraphT<S>& g, ParamT<S>& p, bool train) {
    return train ? g.param(p) : g.frozen(p);
}

// FNV-1a over the raw bytes of all parameter values, in registration order.
template <typename S>
std::uint64_t param_fingerprint(const ParamSetT<S>& ps) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : ps.items()) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p->value.data.data());
        const std::size_t n = p->value.data.size() * sizeof(S);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// init helpers
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> normal_init(RandomSource& rng, std::vector<int> shape, int fan_in, double gain) {
    TensorT<S> t(std::move(shape));
    rng.fill_normal(t, gain / std::sqrt(static_cast<double>(fan_in)));
    return t;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

template <typename S>
struct LinearT {
    ParamT<S>* w = nullptr;  // [out, in]
    ParamT<S>* b = nullptr;  // [out], optional

    VarT<S> operator()(GraphT<S>& g, VarT<S> x, bool train = true) const {
        VarT<S> y = matmul_nt(x, pvar(g, *w, train));
        if (b != nullptr) y = add_bias_cols(y, pvar(g, *b, train));
        return y;
    }
};

template <typename S>
LinearT<S> make_linear(ParamSetT<S>& ps, const std::string& name, int in, int out, RandomSource& rng,
                       double gain = 1.0, bool bias = true, bool zero_init = false) {
    LinearT<S> l;
    if (zero_init) {
        l.w = &ps.add(name + ".w", TensorT<S>({out, in}));
    } else {
        l.w = &ps.add(name + ".w", normal_init<S>(rng, {out, in}, in, gain));
    }
    if (bias) l.b = &ps.add(name + ".b", TensorT<S>({out}));
    return l;
}

using Linear = LinearT<float>;

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

template <typename S>
struct GRUCellT {
    // gates: z update, r reset, n candidate
    ParamT<S>*wz, *wr, *wn;  // [hidden, in]
    ParamT<S>*uz, *ur, *un;  // [hidden, hidden]
    ParamT<S>*bz, *br, *bn;  // [hidden]

    // x [B,in], h [B,hidden] -> h' [B,hidden]
    VarT<S> step(GraphT<S>& g, VarT<S> x, VarT<S> h, bool train = true) const {
        auto P = [&](ParamT<S>* p) { return pvar(g, *p, train); };
        VarT<S> z = sigmoid_op(add_bias_cols(add(matmul_nt(x, P(wz)), matmul_nt(h, P(uz))), P(bz)));
        VarT<S> r = sigmoid_op(add_bias_cols(add(matmul_nt(x, P(wr)), matmul_nt(h, P(ur))), P(br)));
        VarT<S> n = tanh_op(add_bias_cols(add(matmul_nt(x, P(wn)), mul(r, matmul_nt(h, P(un)))), P(bn)));
        // h' = (1 - z) * n + z * h
        return add(n, mul(z, sub(h, n)));
    }
};

template <typename S>
GRUCellT<S> make_gru_cell(ParamSetT<S>& ps, const std::string& name, int in, int hidden,
                          RandomSource& rng) {
    GRUCellT<S> c;
    c.wz = &ps.add(name + ".wz", normal_init<S>(rng, {hidden, in}, in, 1.0));
    c.wr = &ps.add(name + ".wr", normal_init<S>(rng, {hidden, in}, in, 1.0));
    c.wn = &ps.add(name + ".wn", normal_init<S>(rng, {hidden, in}, in, 1.0));
    c.uz = &ps.add(name + ".uz", normal_init<S>(rng, {hidden, hidden}, hidden, 1.0));
    c.ur = &ps.add(name + ".ur", normal_init<S>(rng, {hidden, hidden}, hidden, 1.0));
    c.un = &ps.add(name + ".un", normal_init<S>(rng, {hidden, hidden}, hidden, 1.0));
    c.bz = &ps.add(name + ".bz", TensorT<S>({hidden}));
    c.br = &ps.add(name + ".br", TensorT<S>({hidden}));
    c.bn = &ps.add(name + ".bn", TensorT<S>({hidden}));
    return c;
}

using GRUCell = GRUCellT<float>;

// ---------------------------------------------------------------------------
// plain conv layers
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2dT {
    ParamT<S>* w = nullptr;  // [Co,Ci,k,k]
    ParamT<S>* b = nullptr;  // [Co]
    int stride = 1, pad = 0;

    VarT<S> operator()(GraphT<S>& g, VarT<S> x, bool train = true) const {
        VarT<S> y = conv2d(x, pvar(g, *w, train), stride, pad);
        if (b != nullptr) y = add_channel_bias(y, pvar(g, *b, train));
        return y;
    }
};

template <typename S>
Conv2dT<S> make_conv2d(ParamSetT<S>& ps, const std::string& name, int ci, int co, int k, int stride,
                       int pad, RandomSource& rng, double gain = std::sqrt(2.0), bool bias = true) {
    Conv2dT<S> c;
    c.w = &ps.add(name + ".w", normal_init<S>(rng, {co, ci, k, k}, ci * k * k, gain));
    if (bias) c.b = &ps.add(name + ".b", TensorT<S>({co}));
    c.stride = stride;
    c.pad = pad;
    return c;
}

using Conv2d = Conv2dT<float>;

template <typename S>
struct Conv3dT {
    ParamT<S>* w = nullptr;  // [Co,Ci,kt,kh,kw]
    ParamT<S>* b = nullptr;
    int st = 1, sy = 1, sx = 1;
    int pt = 0, py = 0, px = 0;

    VarT<S> operator()(GraphT<S>& g, VarT<S> x, bool train = true) const {
        VarT<S> y = conv3d(x, pvar(g, *w, train), st, sy, sx, pt, py, px);
        if (b != nullptr) y = add_channel_bias(y, pvar(g, *b, train));
        return y;
    }
};

template <typename S>
Conv3dT<S> make_conv3d(ParamSetT<S>& ps, const std::string& name, int ci, int co, int kt, int kh,
                       int kw, int st, int sy, int sx, RandomSource& rng,
                       double gain = std::sqrt(2.0), bool bias = true) {
    Conv3dT<S> c;
    c.w = &ps.add(name + ".w", normal_init<S>(rng, {co, ci, kt, kh, kw}, ci * kt * kh * kw, gain));
    if (bias) c.b = &ps.add(name + ".b", TensorT<S>({co}));
    c.st = st;
    c.sy = sy;
    c.sx = sx;
    return c;
}

using Conv3d = Conv3dT<float>;

// ---------------------------------------------------------------------------
// style-modulated conv
// ---------------------------------------------------------------------------
//
// The per-sample style vector is turned into per-input-channel scales, the
// input is scaled, a shared conv runs, and the output is rescaled so that
// each output channel has unit expected norm again:
//   s    = style * Mw^T + Mb                         [B,Ci]
//   y    = conv2d(x * s, w)
//   d    = 1 / sqrt(sum_i s_i^2 * sum_k w_oik^2 + eps)
//   out  = y * d + bias
template <typename S>
struct ModulatedConv2dT {
    ParamT<S>* w = nullptr;      // [Co,Ci,k,k]
    ParamT<S>* mod_w = nullptr;  // [Ci,d]
    ParamT<S>* mod_b = nullptr;  // [Ci], init 1
    ParamT<S>* bias = nullptr;   // [Co]
    int stride = 1, pad = 0;
    bool demodulate = true;
    double eps = 1e-8;

    VarT<S> operator()(GraphT<S>& g, VarT<S> x, VarT<S> style, bool train = true) const {
        VarT<S> wv = pvar(g, *w, train);
        VarT<S> s = add_bias_cols(matmul_nt(style, pvar(g, *mod_w, train)), pvar(g, *mod_b, train));
        VarT<S> y = conv2d(channel_scale(x, s), wv, stride, pad);
        if (demodulate) {
            const auto& sw = wv.value().shape;
            const int co = sw[0], ci = sw[1], kk = sw[2] * sw[3];
            TensorT<S> ones_t({kk, 1});
            ones_t.fill(S(1));
            VarT<S> wsq = square(reshape(wv, {co * ci, kk}));
            VarT<S> w2 = reshape(matmul(wsq, g.constant(std::move(ones_t))), {co, ci});
            VarT<S> d = rsqrt(matmul_nt(square(s), w2), eps);  // [B,Co]
            y = channel_scale(y, d);
        }
        if (bias != nullptr) y = add_channel_bias(y, pvar(g, *bias, train));
        return y;
    }
};

template <typename S>
ModulatedConv2dT<S> make_modulated_conv2d(ParamSetT<S>& ps, const std::string& name, int ci, int co,
                                          int k, int d_style, int pad, RandomSource& rng,
                                          bool demodulate = true) {
    ModulatedConv2dT<S> c;
    c.w = &ps.add(name + ".w", normal_init<S>(rng, {co, ci, k, k}, ci * k * k, 1.0));
    c.mod_w = &ps.add(name + ".mw", normal_init<S>(rng, {ci, d_style}, d_style, 1.0));
    TensorT<S> mb({ci});
    mb.fill(S(1));
    c.mod_b = &ps.add(name + ".mb", std::move(mb));
    c.bias = &ps.add(name + ".b", TensorT<S>({co}));
    c.pad = pad;
    c.demodulate = demodulate;
    return c;
}

using ModulatedConv2d = ModulatedConv2dT<float>;

// ---------------------------------------------------------------------------
// per-layer spatial noise: out = x + strength * noise, noise shared over B,C
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> add_spatial_noise(VarT<S> x, const TensorT<S>& noise_hw, VarT<S> strength) {
    GraphT<S>& g = *x.g;
    const auto& sx = g.val(x.id).shape;
    detail::require(sx.size() == 4, "add_spatial_noise: want [B,C,H,W]");
    detail::require(strength.g == &g && g.val(strength.id).numel() == 1, "add_spatial_noise: strength");
    const int B = sx[0], C = sx[1], H = sx[2], W = sx[3];
    detail::require(noise_hw.numel() == static_cast<std::int64_t>(H) * W, "add_spatial_noise: noise size");
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    TensorT<S> out(sx);
    const auto& xv = g.val(x.id).data;
    const S st = g.val(strength.id)[0];
    auto noise = std::make_shared<TensorT<S>>(noise_hw);
    for (int bc = 0; bc < B * C; ++bc)
        for (std::size_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(bc) * hw + i] = xv[static_cast<std::size_t>(bc) * hw + i] + st * noise->data[i];
    VarT<S> o = g.leaf(std::move(out), g.wants(x.id) || g.wants(strength.id));
    if (o.g->wants(o.id)) {
        int oi = o.id, xi = x.id, si = strength.id;
        GraphT<S>* gp = &g;
        gp->nodes[static_cast<std::size_t>(oi)].back = [gp, oi, xi, si, B, C, hw, noise] {
            const auto& go = gp->grd(oi).data;
            if (gp->wants(xi)) {
                auto& gx = gp->grd(xi).data;
                for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            }
            if (gp->wants(si)) {
                S acc = 0;
                for (int bc = 0; bc < B * C; ++bc)
                    for (std::size_t i = 0; i < hw; ++i)
                        acc += go[static_cast<std::size_t>(bc) * hw + i] * noise->data[i];
                gp->grd(si)[0] += acc;
            }
        };
    }
    return o;
}

}  // namespace sonovid
