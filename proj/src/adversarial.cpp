#include "sonovid/adversarial.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sonovid/embedding.h"
#include "sonovid/optim.h"

namespace sonovid {
namespace {

constexpr int kDiscWidth = 48;

Var neg_mean_softplus(Var s) { return mean_all(softplus_op(scale(s, -1.0))); }

}  // namespace

PatchImageDisc make_image_disc(const TrainConfig& cfg, RandomSource& rng) {
    if (cfg.image_size % kPatchPixels != 0)
        throw std::invalid_argument("make_image_disc: image size not divisible by patch size");
    PatchImageDisc d;
    d.image_size = cfg.image_size;
    d.embed = make_conv2d(d.params, "di.embed", 3, kDiscWidth, kPatchPixels, kPatchPixels, 0, rng);
    d.mix = make_conv2d(d.params, "di.mix", kDiscWidth, kDiscWidth, 1, 1, 0, rng);
    d.head = make_conv2d(d.params, "di.head", kDiscWidth, 1, 1, 1, 0, rng, 1.0);
    return d;
}

PatchVideoDisc make_video_disc(const TrainConfig& cfg, RandomSource& rng) {
    if (cfg.image_size % kPatchPixels != 0)
        throw std::invalid_argument("make_video_disc: image size not divisible by patch size");
    PatchVideoDisc d;
    d.image_size = cfg.image_size;
    d.embed = make_conv3d(d.params, "dv.embed", 3, kDiscWidth, kVideoPatchFrames, kPatchPixels,
                          kPatchPixels, kVideoPatchStride, kPatchPixels, kPatchPixels, rng);
    d.mix = make_conv3d(d.params, "dv.mix", kDiscWidth, kDiscWidth, 1, 1, 1, 1, 1, 1, rng);
    d.head = make_conv3d(d.params, "dv.head", kDiscWidth, 1, 1, 1, 1, 1, 1, 1, rng, 1.0);
    return d;
}

Var PatchImageDisc::logit_grid(Graph& g, Var x, bool train) const {
    const auto& s = x.value().shape;
    if (s.size() != 4 || s[1] != 3 || s[2] != image_size || s[3] != image_size)
        throw std::invalid_argument("image disc: want [B,3," + std::to_string(image_size) + "," +
                                    std::to_string(image_size) + "], got " + shape_str(s));
    Var h = leaky_relu(embed(g, x, train));
    h = leaky_relu(mix(g, h, train));
    return head(g, h, train);
}

Var PatchImageDisc::scores(Graph& g, Var x, bool train) const {
    return global_avg_pool(logit_grid(g, x, train));
}

Var PatchVideoDisc::logit_grid(Graph& g, Var x, bool train) const {
    const auto& s = x.value().shape;
    if (s.size() != 5 || s[1] != 3 || s[3] != image_size || s[4] != image_size)
        throw std::invalid_argument("video disc: want [B,3,T," + std::to_string(image_size) + "," +
                                    std::to_string(image_size) + "], got " + shape_str(s));
    if (s[2] < kVideoPatchFrames)
        throw std::invalid_argument("video disc: clip shorter than the patch window");
    Var h = leaky_relu(embed(g, x, train));
    h = leaky_relu(mix(g, h, train));
    return head(g, h, train);
}

Var PatchVideoDisc::scores(Graph& g, Var x, bool train) const {
    return global_avg_pool(logit_grid(g, x, train));
}

Tensor pack_video(const VideoClip& clip) {
    if (clip.frames.empty()) throw std::invalid_argument("pack_video: empty clip");
    const Image& f0 = clip.frames.front();
    const int T = static_cast<int>(clip.frames.size());
    Tensor out({1, f0.channels, T, f0.height, f0.width});
    const std::size_t plane = static_cast<std::size_t>(f0.height) * f0.width;
    for (int t = 0; t < T; ++t) {
        const Image& fr = clip.frames[static_cast<std::size_t>(t)];
        if (fr.channels != f0.channels || fr.height != f0.height || fr.width != f0.width)
            throw std::invalid_argument("pack_video: mixed frame shapes");
        for (int c = 0; c < f0.channels; ++c)
            std::copy(fr.pixels.begin() + c * plane, fr.pixels.begin() + (c + 1) * plane,
                      out.data.begin() + (static_cast<std::size_t>(c) * T + t) * plane);
    }
    return out;
}

double score_video(const PatchVideoDisc& d, const VideoClip& clip) {
    Graph g;
    Var s = d.scores(g, g.leaf(pack_video(clip), false), false);
    return static_cast<double>(s.value()[0]);
}

R1Term r1_penalty(Graph& g, const ScoreSumFn& score_sum, const Tensor& x_real, double gamma) {
    Tensor u;
    {
        Graph probe;
        Var x = probe.leaf(x_real, true);
        probe.backward(score_sum(probe, x, false));
        u = probe.grd(x.id);
    }
    const int B = x_real.shape[0];
    double sum_sq = 0;
    for (float v : u.data) sum_sq += static_cast<double>(v) * v;
    R1Term out;
    out.exact = 0.5 * gamma * sum_sq / B;
    const double rms = std::sqrt(sum_sq / static_cast<double>(u.numel()));
    if (rms < 1e-8) {
        out.penalty = g.leaf(Tensor({1}), false);
        out.active = false;
        return out;
    }
    const double eps = 0.01 / rms;
    Tensor xp = x_real, xm = x_real;
    for (std::size_t i = 0; i < u.data.size(); ++i) {
        const float step = static_cast<float>(eps) * u.data[i];
        xp.data[i] += step;
        xm.data[i] -= step;
    }
    Var sp = score_sum(g, g.leaf(std::move(xp), false), true);
    Var sm = score_sum(g, g.leaf(std::move(xm), false), true);
    out.penalty = scale(sub(sp, sm), gamma / (4.0 * eps * B));
    out.active = true;
    return out;
}

Tensor sample_frames(const Tensor& video, RandomSource& rng, int disc_frames) {
    const auto& s = video.shape;
    if (s.size() != 5) throw std::invalid_argument("sample_frames: want [B,C,T,H,W]");
    const int B = s[0], C = s[1], T = s[2], H = s[3], W = s[4];
    Tensor out({B * disc_frames, C, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < disc_frames; ++j) {
            const int t = rng.index(T);
            for (int c = 0; c < C; ++c)
                std::copy(video.data.begin() + ((static_cast<std::size_t>(b) * C + c) * T + t) * plane,
                          video.data.begin() + ((static_cast<std::size_t>(b) * C + c) * T + t + 1) * plane,
                          out.data.begin() +
                              (static_cast<std::size_t>(b * disc_frames + j) * C + c) * plane);
        }
    return out;
}

AdvLosses adversarial_losses(const PatchVideoDisc& dv, const PatchImageDisc& di,
                             const Tensor& real_video, const Tensor& fake_video, RandomSource& rng,
                             int disc_frames) {
    if (real_video.shape != fake_video.shape)
        throw std::invalid_argument("adversarial_losses: shape mismatch");
    Graph g;
    Var s_rv = dv.scores(g, g.leaf(real_video, false), false);
    Var s_fv = dv.scores(g, g.leaf(fake_video, false), false);
    Var s_ri = di.scores(g, g.leaf(sample_frames(real_video, rng, disc_frames), false), false);
    Var s_fi = di.scores(g, g.leaf(sample_frames(fake_video, rng, disc_frames), false), false);
    AdvLosses out;
    out.l_dv = add(neg_mean_softplus(s_rv), mean_all(softplus_op(s_fv))).value()[0];
    out.l_di = add(neg_mean_softplus(s_ri), mean_all(softplus_op(s_fi))).value()[0];
    out.l_g = add(neg_mean_softplus(s_fv), neg_mean_softplus(s_fi)).value()[0];
    return out;
}

PretrainStats pretrain_generator(StyleGenerator& gen, PatchImageDisc& disc,
                                 const std::vector<const Image*>& images, const TrainConfig& cfg,
                                 RandomSource& rng, std::ostream* csv, bool verbose) {
    if (images.size() < 1000)
        throw std::invalid_argument("pretrain_generator: need at least 1000 images, got " +
                                    std::to_string(images.size()));
    const int B = cfg.pretrain_batch;
    const int L = cfg.style_layers, d = cfg.latent_dim;
    Adam g_opt{cfg.pretrain_lr, 0.0, 0.99};
    Adam d_opt{cfg.pretrain_lr, 0.0, 0.99};
    PretrainStats stats;
    if (csv != nullptr) *csv << "step,d_loss,g_loss,r1\n";

    for (int step = 0; step < cfg.pretrain_steps; ++step) {
        std::vector<const Image*> batch;
        for (int i = 0; i < B; ++i)
            batch.push_back(images[static_cast<std::size_t>(rng.integer(images.size()))]);
        Tensor real = pack_images(batch);

        Tensor z({B, d});
        rng.fill_normal(z);
        auto fake_noise = gen.make_noise(rng);
        Tensor fake;
        {
            Graph g;
            Var codes = tile_cols(gen.mapping(g, g.leaf(z, false), false), L);
            fake = gen.synthesize_batch(g, codes, false, &fake_noise).value();
        }

        double d_loss = 0, r1_exact = 0;
        {
            Graph g;
            Var s_r = disc.scores(g, g.leaf(real, false), true);
            Var s_f = disc.scores(g, g.leaf(fake, false), true);
            Var adv = add(neg_mean_softplus(s_r), mean_all(softplus_op(s_f)));
            R1Term r1 = r1_penalty(
                g, [&disc](Graph& gg, Var x, bool t) { return sum_all(disc.scores(gg, x, t)); },
                real, cfg.r1_gamma);
            Var total = r1.active ? add(adv, r1.penalty) : adv;
            d_loss = adv.value()[0];
            r1_exact = r1.exact;
            disc.params.zero_grad();
            g.backward(total);
            g.accumulate_param_grads();
            d_opt.step(disc.params);
        }

        Tensor z2({B, d});
        rng.fill_normal(z2);
        auto gen_noise = gen.make_noise(rng);
        double g_loss = 0;
        {
            Graph g;
            Var codes = tile_cols(gen.mapping(g, g.leaf(z2, false), true), L);
            Var img = gen.synthesize_batch(g, codes, true, &gen_noise);
            Var loss = neg_mean_softplus(disc.scores(g, img, false));
            g_loss = loss.value()[0];
            gen.params.zero_grad();
            g.backward(loss);
            g.accumulate_param_grads();
            g_opt.step(gen.params);
        }

        if (!std::isfinite(d_loss) || !std::isfinite(g_loss) || !std::isfinite(r1_exact))
            throw std::runtime_error("pretrain_generator: loss diverged at step " +
                                     std::to_string(step));
        if (csv != nullptr)
            *csv << step << "," << d_loss << "," << g_loss << "," << r1_exact << "\n";
        if (step == 0) {
            stats.first_d_loss = d_loss;
            stats.first_g_loss = g_loss;
        }
        stats.final_d_loss = d_loss;
        stats.final_g_loss = g_loss;
        ++stats.steps;
        if (verbose && (step % 50 == 0 || step + 1 == cfg.pretrain_steps))
            std::fprintf(stderr, "  pretrain step %4d  d %.4f  g %.4f  r1 %.5f\n", step, d_loss,
                         g_loss, r1_exact);
    }
    return stats;
}

}  // namespace sonovid
