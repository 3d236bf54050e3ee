#include "sonovid/generator.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sonovid {
namespace {

// Channel width at resolution level k (res = 4 * 2^k): hold the base width for
// the first two levels, then shrink by 3/4 per level with a floor of 12.
int channels_for_level(int base, int k) {
    double c = base;
    for (int i = 1; i < k; ++i) c *= 0.75;
    const int ci = static_cast<int>(std::lround(c));
    return ci < 12 ? 12 : ci;
}

int int_log2(int v) {
    int k = 0;
    while ((1 << k) < v) ++k;
    if ((1 << k) != v) throw std::invalid_argument("expected a power of two");
    return k;
}

}  // namespace

GroupBounds group_bounds(const TrainConfig& cfg) {
    GroupBounds b;
    b.coarse_end = cfg.coarse_end;
    b.mid_end = cfg.mid_end;
    b.layers = cfg.style_layers;
    return b;
}

std::pair<int, int> group_rows(const GroupBounds& b, StyleGroup gset) {
    switch (gset) {
        case StyleGroup::coarse: return {0, b.coarse_end};
        case StyleGroup::mid: return {b.coarse_end, b.mid_end};
        case StyleGroup::fine: return {b.mid_end, b.layers};
    }
    throw std::invalid_argument("group_rows: bad group");
}

std::set<StyleGroup> parse_style_groups(const std::string& csv) {
    std::set<StyleGroup> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "coarse") out.insert(StyleGroup::coarse);
        else if (tok == "mid") out.insert(StyleGroup::mid);
        else if (tok == "fine") out.insert(StyleGroup::fine);
        else throw std::invalid_argument("unknown style group: '" + tok + "'");
    }
    if (out.empty()) throw std::invalid_argument("style group list is empty");
    return out;
}

Tensor style_mix(const Tensor& w1, const Tensor& w2, const std::set<StyleGroup>& groups,
                 const GroupBounds& bounds) {
    if (w1.shape != w2.shape || w1.shape.size() != 2 || w1.shape[0] != bounds.layers)
        throw std::invalid_argument("style_mix: shape mismatch");
    Tensor out = w1;
    const int d = w1.shape[1];
    for (StyleGroup gr : groups) {
        auto [r0, r1] = group_rows(bounds, gr);
        for (int r = r0; r < r1; ++r)
            for (int j = 0; j < d; ++j)
                out[static_cast<std::size_t>(r) * d + j] = w2[static_cast<std::size_t>(r) * d + j];
    }
    return out;
}

Tensor flatten_codes(const std::vector<const Tensor*>& codes) {
    if (codes.empty()) throw std::invalid_argument("flatten_codes: empty");
    const auto& sh = codes.front()->shape;
    if (sh.size() != 2) throw std::invalid_argument("flatten_codes: want [L,d] codes");
    Tensor out({static_cast<int>(codes.size()), sh[0] * sh[1]});
    const std::size_t per = codes.front()->data.size();
    for (std::size_t b = 0; b < codes.size(); ++b) {
        if (codes[b]->shape != sh) throw std::invalid_argument("flatten_codes: mixed shapes");
        std::copy(codes[b]->data.begin(), codes[b]->data.end(), out.data.begin() + b * per);
    }
    return out;
}

StyleGenerator make_generator(const TrainConfig& cfg, RandomSource& rng) {
    StyleGenerator gen;
    gen.latent_dim = cfg.latent_dim;
    gen.layers = cfg.style_layers;
    gen.image_size = cfg.image_size;
    const int d = cfg.latent_dim;
    const int ups_needed = int_log2(cfg.image_size) - 2;
    const int n_styled = gen.layers - 1;
    if (n_styled < 1 + 2 * ups_needed)
        throw std::invalid_argument("make_generator: style_layers too small for image_size");

    ParamSet& ps = gen.params;
    gen.map1 = make_linear(ps, "map.l1", d, d, rng, 1.0);
    gen.map2 = make_linear(ps, "map.l2", d, d, rng, 1.0);

    const int ch0 = channels_for_level(cfg.base_channels, 0);
    gen.input_const = &ps.add("syn.const", normal_init<float>(rng, {ch0, 4, 4}, 1, 1.0));

    int res = 4, level = 0, ups_done = 0, in_ch = ch0;
    for (int i = 0; i < n_styled; ++i) {
        const bool up = i >= 1 && (i % 2 == 1) && ups_done < ups_needed;
        if (up) {
            res *= 2;
            ++level;
            ++ups_done;
        }
        const int out_ch = channels_for_level(cfg.base_channels, level);
        gen.styled.push_back(
            make_modulated_conv2d(ps, "syn.c" + std::to_string(i), in_ch, out_ch, 3, d, 1, rng));
        Tensor s({1});
        gen.noise_strength.push_back(&ps.add("syn.ns" + std::to_string(i), std::move(s)));
        gen.noise_buf.push_back(
            &ps.add("syn.noise" + std::to_string(i), normal_init<float>(rng, {res, res}, 1, 1.0)));
        gen.styled_res.push_back(res);
        gen.styled_ch.push_back(out_ch);
        gen.styled_up.push_back(up);
        in_ch = out_ch;
    }
    gen.to_rgb = make_modulated_conv2d(ps, "syn.rgb", in_ch, 3, 1, d, 0, rng, false);
    return gen;
}

Var StyleGenerator::mapping(Graph& g, Var z, bool train) const {
    Var h = leaky_relu(map1(g, z, train));
    return map2(g, leaky_relu(h), train);
}

Var StyleGenerator::synthesize_batch(Graph& g, Var codes, bool train,
                                     const std::vector<Tensor>* noise) const {
    const auto& sc = codes.value().shape;
    if (sc.size() != 2 || sc[1] != layers * latent_dim)
        throw std::invalid_argument("synthesize_batch: want codes [B," +
                                    std::to_string(layers * latent_dim) + "], got " +
                                    shape_str(sc));
    if (noise != nullptr && static_cast<int>(noise->size()) != static_cast<int>(styled.size()))
        throw std::invalid_argument("synthesize_batch: wrong noise layer count");
    const int B = sc[0];
    Var x = broadcast0(pvar(g, *input_const, train), B);
    for (std::size_t i = 0; i < styled.size(); ++i) {
        if (styled_up[i]) x = upsample2x(x);
        Var style = slice_cols(codes, static_cast<int>(i) * latent_dim, latent_dim);
        x = styled[i](g, x, style, train);
        const Tensor& nz = noise != nullptr ? (*noise)[i] : noise_buf[i]->value;
        x = add_spatial_noise(x, nz, pvar(g, *noise_strength[i], train));
        x = leaky_relu(x);
    }
    Var style = slice_cols(codes, (layers - 1) * latent_dim, latent_dim);
    return tanh_op(to_rgb(g, x, style, train));
}

Image StyleGenerator::synthesize(const Tensor& code) const {
    if (code.shape != std::vector<int>{layers, latent_dim})
        throw std::invalid_argument("synthesize: want code [" + std::to_string(layers) + "," +
                                    std::to_string(latent_dim) + "], got " + shape_str(code.shape));
    Graph g;
    Tensor flat({1, layers * latent_dim});
    flat.data = code.data;
    Var img = synthesize_batch(g, g.leaf(std::move(flat), false), false);
    Image out(3, image_size, image_size);
    out.pixels = img.value().data;
    return out;
}

Tensor sample_latent_z(std::uint64_t seed, int d) {
    RandomSource rng(seed);
    Tensor z({1, d});
    rng.fill_normal(z);
    return z;
}

Tensor StyleGenerator::sample_latent(std::uint64_t seed) const {
    Graph g;
    Var w = mapping(g, g.leaf(sample_latent_z(seed, latent_dim), false), false);
    Tensor code({layers, latent_dim});
    for (int r = 0; r < layers; ++r)
        std::copy(w.value().data.begin(), w.value().data.end(),
                  code.data.begin() + static_cast<std::size_t>(r) * latent_dim);
    return code;
}

std::vector<Tensor> StyleGenerator::make_noise(RandomSource& rng) const {
    std::vector<Tensor> out;
    for (int r : styled_res) {
        Tensor t({r, r});
        rng.fill_normal(t);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace sonovid
