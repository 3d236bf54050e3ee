#include "sonovid/inversion.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sonovid/optim.h"

namespace sonovid {
namespace {

// pyramid widths: shallow -> deep
constexpr int kLvl1 = 24, kLvl2 = 32, kLvl3 = 48;

}  // namespace

SoundEncoder make_sound_encoder(const TrainConfig& cfg, RandomSource& rng) {
    SoundEncoder e;
    e.latent_dim = cfg.latent_dim;
    e.layers = cfg.style_layers;
    e.n_mels = cfg.n_mels;
    e.coarse_end = cfg.coarse_end;
    e.mid_end = cfg.mid_end;
    ParamSet& ps = e.params;
    e.c1 = make_conv2d(ps, "ea.c1", 1, kLvl1, 3, 2, 1, rng);
    e.c2 = make_conv2d(ps, "ea.c2", kLvl1, kLvl2, 3, 2, 1, rng);
    e.c3 = make_conv2d(ps, "ea.c3", kLvl2, kLvl3, 3, 2, 1, rng);
    for (int r = 0; r < e.layers; ++r) {
        const int in = r < e.coarse_end ? kLvl3 : (r < e.mid_end ? kLvl2 : kLvl1);
        e.heads.push_back(make_linear(ps, "ea.head" + std::to_string(r), in, e.latent_dim, rng, 1.0,
                                      true, /*zero_init=*/true));
    }
    return e;
}

Var SoundEncoder::encode(Graph& g, Var mel, bool train) const {
    const auto& s = mel.value().shape;
    if (s.size() != 4 || s[1] != 1 || s[2] != n_mels || s[3] < 1)
        throw std::invalid_argument("sound encoder: expected [B,1," + std::to_string(n_mels) +
                                    ",W], got " + shape_str(s));
    Var f1 = leaky_relu(c1(g, mel, train));
    Var f2 = leaky_relu(c2(g, f1, train));
    Var f3 = leaky_relu(c3(g, f2, train));
    Var p1 = global_avg_pool(f1);
    Var p2 = global_avg_pool(f2);
    Var p3 = global_avg_pool(f3);
    std::vector<Var> rows;
    for (int r = 0; r < layers; ++r) {
        Var src = r < coarse_end ? p3 : (r < mid_end ? p2 : p1);
        rows.push_back(heads[static_cast<std::size_t>(r)](g, src, train));
    }
    return concat_cols(rows);
}

Tensor SoundEncoder::invert(const MelSpectrogram& mel) const {
    Graph g;
    Var e = encode(g, g.leaf(pack_mels({&mel}, {0}, mel.n_frames), false), false);
    Tensor out({layers, latent_dim});
    out.data = e.value().data;
    return out;
}

Tensor fuse(const Tensor& w, const Tensor& e) {
    if (w.shape != e.shape) throw std::invalid_argument("fuse: shape mismatch");
    Tensor out = w;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += e.data[i];
    return out;
}

Var mean_code_rows(Var codes, int layers, int dim) {
    const auto& s = codes.value().shape;
    if (s.size() != 2 || s[1] != layers * dim)
        throw std::invalid_argument("mean_code_rows: want [B," + std::to_string(layers * dim) +
                                    "], got " + shape_str(s));
    Var acc = slice_cols(codes, 0, dim);
    for (int r = 1; r < layers; ++r) acc = add(acc, slice_cols(codes, r * dim, dim));
    return scale(acc, 1.0 / layers);
}

Var clip_av_term(Graph& g, const EmbeddingNets& nets, Var images, Var mels) {
    Var ev = nets.encode_images(g, images, false);
    Var ea = nets.encode_mels(g, mels, false);
    return mean_all(scale(add_scalar(row_dot(ev, ea), -1.0), -1.0));
}

Var clip_at_term(Graph& g, const EmbeddingNets& nets, Var images, const std::vector<int>& labels) {
    Var ev = nets.encode_images(g, images, false);
    Var et = nets.encode_labels(g, labels, false);
    return mean_all(scale(add_scalar(row_dot(ev, et), -1.0), -1.0));
}

std::pair<double, double> clip_alignment_loss(const EmbeddingNets& nets, const Image& img,
                                              const MelSpectrogram& mel, int label) {
    Graph g;
    Var iv = g.leaf(pack_images({&img}), false);
    Var mv = g.leaf(pack_mels({&mel}, {0}, mel.n_frames), false);
    const double av = clip_av_term(g, nets, iv, mv).value()[0];
    const double at = clip_at_term(g, nets, iv, {label}).value()[0];
    return {av, at};
}

double temporal_regularizer(const std::vector<Tensor>& codes) {
    if (codes.empty()) throw std::invalid_argument("temporal_regularizer: empty sequence");
    const auto& sh = codes.front().shape;
    std::vector<double> mean(codes.front().data.size(), 0.0);
    for (const Tensor& c : codes) {
        if (c.shape != sh) throw std::invalid_argument("temporal_regularizer: mixed shapes");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += c.data[i];
    }
    for (double& m : mean) m /= static_cast<double>(codes.size());
    double acc = 0;
    for (const Tensor& c : codes) {
        double sq = 0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double d = static_cast<double>(c.data[i]) - mean[i];
            sq += d * d;
        }
        acc += sq;
    }
    return acc / static_cast<double>(codes.size());
}

Var temporal_regularizer_term(Graph& g, Var codes, int T) {
    const auto& s = codes.value().shape;
    if (s.size() != 2 || T < 1 || s[0] % T != 0)
        throw std::invalid_argument("temporal_regularizer_term: want [B*T,n] with T dividing rows");
    const int B = s[0] / T;
    Tensor avg_w({1, T});
    avg_w.fill(1.0f / static_cast<float>(T));
    Tensor ones_col({T, 1});
    ones_col.fill(1.0f);
    Var avg_row = g.constant(std::move(avg_w));
    Var tile_col = g.constant(std::move(ones_col));
    Var acc;
    for (int b = 0; b < B; ++b) {
        Var block = slice0(codes, b * T, T);            // [T, n]
        Var mean = matmul(avg_row, block);              // [1, n]
        Var diff = sub(block, matmul(tile_col, mean));  // [T, n]
        Var term = scale(sum_all(square(diff)), 1.0 / T);
        acc = b == 0 ? term : add(acc, term);
    }
    return scale(acc, 1.0 / B);
}

InversionTrainStats train_inversion(SoundEncoder& enc, const StyleGenerator& gen,
                                    const EmbeddingNets& nets,
                                    const std::vector<LoadedClip>& clips, const TrainConfig& cfg,
                                    RandomSource& rng, std::ostream* csv, bool verbose) {
    if (clips.empty()) throw std::invalid_argument("train_inversion: no clips");
    auto train_idx = split_train_heldout(static_cast<int>(clips.size())).first;
    const int B = std::min(cfg.inversion_batch, static_cast<int>(train_idx.size()));
    const int T = cfg.inversion_segments;
    const int L = cfg.style_layers, d = cfg.latent_dim;

    Adam opt{cfg.inversion_lr};
    InversionTrainStats stats;
    if (csv != nullptr) *csv << "step,clip_av,clip_at,reg,total\n";

    for (int step = 0; step < cfg.inversion_steps; ++step) {
        opt.lr = cosine_lr(cfg.inversion_lr, step, cfg.inversion_steps);

        // one shared base code per clip, one mel segment per timestep
        std::vector<const MelSpectrogram*> seg_ptrs;
        std::vector<std::vector<MelSpectrogram>> segs(static_cast<std::size_t>(B));
        std::vector<int> labels, seg_offsets;
        Tensor bases({B * T, L * d});
        int width = 1 << 30;
        std::vector<int> chosen;
        for (int b = 0; b < B; ++b)
            chosen.push_back(train_idx[static_cast<std::size_t>(rng.index(static_cast<int>(train_idx.size())))]);
        for (int b = 0; b < B; ++b) {
            const LoadedClip& c = clips[static_cast<std::size_t>(chosen[static_cast<std::size_t>(b)])];
            segs[static_cast<std::size_t>(b)] = segment_for_video(c.mel, T);
            for (const auto& m : segs[static_cast<std::size_t>(b)]) width = std::min(width, m.n_frames);
        }
        for (int b = 0; b < B; ++b) {
            const LoadedClip& c = clips[static_cast<std::size_t>(chosen[static_cast<std::size_t>(b)])];
            Tensor z({1, d});
            rng.fill_normal(z);
            Graph gm;
            Var w = gen.mapping(gm, gm.leaf(std::move(z), false), false);
            for (int t = 0; t < T; ++t) {
                for (int r = 0; r < L; ++r)
                    std::copy(w.value().data.begin(), w.value().data.end(),
                              bases.data.begin() +
                                  (static_cast<std::size_t>(b) * T + t) * (L * d) + static_cast<std::size_t>(r) * d);
                seg_ptrs.push_back(&segs[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]);
                seg_offsets.push_back(0);
                labels.push_back(c.label);
            }
        }

        Graph g;
        Var mel_in = g.leaf(pack_mels(seg_ptrs, seg_offsets, width), false);
        Var residuals = enc.encode(g, mel_in, true);
        Var codes = add(g.leaf(std::move(bases), false), residuals);  // [B*T, L*d]
        Var frames = gen.synthesize_batch(g, codes, false);
        Var av = clip_av_term(g, nets, frames, mel_in);
        Var at = clip_at_term(g, nets, frames, labels);
        Var reg = temporal_regularizer_term(g, codes, T);
        Var total = add(add(av, at), scale(reg, cfg.lambda_bind));

        InversionLossReport rep;
        rep.clip_av = av.value()[0];
        rep.clip_at = at.value()[0];
        rep.reg = reg.value()[0];
        rep.total = total.value()[0];
        rep.lambda_bind = cfg.lambda_bind;
        if (!std::isfinite(rep.total))
            throw std::runtime_error("train_inversion: loss diverged at step " + std::to_string(step));

        enc.params.zero_grad();
        g.backward(total);
        g.accumulate_param_grads();
        opt.step(enc.params);

        if (csv != nullptr)
            *csv << step << "," << rep.clip_av << "," << rep.clip_at << "," << rep.reg << ","
                 << rep.total << "\n";
        if (step == 0) stats.first = rep;
        stats.last = rep;
        ++stats.steps;
        if (verbose && (step % 50 == 0 || step + 1 == cfg.inversion_steps))
            std::fprintf(stderr, "  invert step %4d  av %.4f  at %.4f  reg %.4f  total %.4f\n",
                         step, rep.clip_av, rep.clip_at, rep.reg, rep.total);
    }
    return stats;
}

Image edit_image(const StyleGenerator& gen, const SoundEncoder& enc, const Tensor& w,
                 const MelSpectrogram& mel) {
    return gen.synthesize(fuse(w, enc.invert(mel)));
}

std::pair<double, double> inversion_score(const EmbeddingNets& nets,
                                          const std::vector<const Image*>& originals,
                                          const std::vector<const Image*>& reconstructions) {
    if (originals.size() != reconstructions.size() || originals.empty())
        throw std::invalid_argument("inversion_score: need matched non-empty sets");
    double mse = 0, perc = 0;
    for (std::size_t i = 0; i < originals.size(); ++i) {
        const Image& a = *originals[i];
        const Image& b = *reconstructions[i];
        if (a.pixels.size() != b.pixels.size())
            throw std::invalid_argument("inversion_score: image shape mismatch");
        double sq = 0;
        for (std::size_t j = 0; j < a.pixels.size(); ++j) {
            const double d = static_cast<double>(a.pixels[j]) - b.pixels[j];
            sq += d * d;
        }
        mse += sq / static_cast<double>(a.pixels.size());

        Graph g;
        std::vector<Var> ta, tb;
        nets.encode_images_with_taps(g, g.leaf(pack_images({&a}), false), false, &ta);
        nets.encode_images_with_taps(g, g.leaf(pack_images({&b}), false), false, &tb);
        for (std::size_t l = 0; l < ta.size(); ++l) {
            const auto& va = ta[l].value();
            const auto& vb = tb[l].value();
            double lsq = 0;
            for (std::size_t j = 0; j < va.data.size(); ++j) {
                const double d = static_cast<double>(va[j]) - vb[j];
                lsq += d * d;
            }
            perc += lsq / static_cast<double>(va.numel());
        }
    }
    const double n = static_cast<double>(originals.size());
    return {perc / n, mse / n};
}

}  // namespace sonovid
