#include "sonovid/video_train.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "sonovid/optim.h"

namespace sonovid {
namespace {

Var neg_mean_softplus(Var s) { return mean_all(softplus_op(scale(s, -1.0))); }

// [B,3,T,H,W] from the first T frames of each chosen clip.
Tensor pack_video_batch(const std::vector<const LoadedClip*>& batch, int T, int size) {
    const int B = static_cast<int>(batch.size());
    Tensor out({B, 3, T, size, size});
    const std::size_t hw = static_cast<std::size_t>(size) * size;
    for (int b = 0; b < B; ++b) {
        const auto& frames = batch[static_cast<std::size_t>(b)]->video.frames;
        if (static_cast<int>(frames.size()) < T)
            throw std::invalid_argument("train_video_model: clip shorter than " +
                                        std::to_string(T) + " frames");
        for (int t = 0; t < T; ++t) {
            const Image& im = frames[static_cast<std::size_t>(t)];
            if (im.height != size || im.width != size)
                throw std::invalid_argument("train_video_model: frame size mismatch");
            for (int c = 0; c < 3; ++c) {
                const std::size_t dst = ((static_cast<std::size_t>(b) * 3 + c) * T + t) * hw;
                const std::size_t src = static_cast<std::size_t>(c) * hw;
                std::copy(im.pixels.begin() + static_cast<std::ptrdiff_t>(src),
                          im.pixels.begin() + static_cast<std::ptrdiff_t>(src + hw),
                          out.data.begin() + static_cast<std::ptrdiff_t>(dst));
            }
        }
    }
    return out;
}

}  // namespace

VideoTrainStats train_video_model(TrajectoryModel& traj, SoundEncoder& enc,
                                  const StyleGenerator& gen, const EmbeddingNets& nets,
                                  PatchVideoDisc& dv, PatchImageDisc& di,
                                  const std::vector<LoadedClip>& clips, const TrainConfig& cfg,
                                  RandomSource& rng, std::ostream* csv, bool verbose) {
    const int T = cfg.video_frames;
    const int B = cfg.video_batch;
    const int L = gen.layers, d = gen.latent_dim;
    if (clips.empty()) throw std::invalid_argument("train_video_model: no clips");
    if (T < kVideoPatchFrames)
        throw std::invalid_argument("train_video_model: need at least " +
                                    std::to_string(kVideoPatchFrames) + " frames per clip");

    // one shared segment width keeps every packed mel batch rectangular
    int seg_width = 1 << 30;
    for (const auto& c : clips)
        for (int t = 0; t < T; ++t) {
            auto [lo, hi] = segment_bounds(c.mel.n_frames, T, t);
            seg_width = std::min(seg_width, hi - lo);
        }
    if (seg_width < 1) throw std::invalid_argument("train_video_model: audio too short to segment");

    Adam traj_opt{cfg.video_lr, 0.0, 0.99};
    Adam enc_opt{cfg.video_lr, 0.0, 0.99};
    Adam dv_opt{cfg.video_disc_lr, 0.0, 0.99};
    Adam di_opt{cfg.video_disc_lr, 0.0, 0.99};
    VideoTrainStats stats;
    if (csv != nullptr) *csv << "step,l_dv,l_di,l_g,l_enc,total\n";

    // per-timestep packed mels and the code rollout for one drawn batch
    auto packed_mels = [&](const std::vector<const LoadedClip*>& batch, int t) {
        std::vector<const MelSpectrogram*> mels;
        std::vector<int> offsets;
        for (const LoadedClip* c : batch) {
            mels.push_back(&c->mel);
            offsets.push_back(segment_bounds(c->mel.n_frames, T, t).first);
        }
        return pack_mels(mels, offsets, seg_width);
    };
    auto rollout_frames = [&](Graph& g, const std::vector<const LoadedClip*>& batch, bool train,
                              std::vector<Var>* codes_out) {
        Tensor z({B, d});
        rng.fill_normal(z);
        Var w0 = tile_cols(gen.mapping(g, g.leaf(std::move(z), false), false), L);
        std::vector<Var> ea;
        for (int t = 0; t < T; ++t)
            ea.push_back(enc.encode(g, g.leaf(packed_mels(batch, t), false),
                                    train && cfg.cotrain_encoder != 0));
        std::vector<Tensor> noises;
        for (int t = 1; t < T; ++t) {
            Tensor n({B, traj.noise_dim});
            rng.fill_normal(n);
            noises.push_back(std::move(n));
        }
        std::vector<Var> codes = rollout_codes(g, traj, w0, ea, noises, train);
        if (codes_out != nullptr) *codes_out = codes;
        return gen.synthesize_batch(g, concat0(codes), false);  // [T*B,3,H,W], t-major
    };

    for (int step = 0; step < cfg.video_steps; ++step) {
        std::vector<const LoadedClip*> batch;
        for (int i = 0; i < B; ++i)
            batch.push_back(&clips[static_cast<std::size_t>(rng.integer(clips.size()))]);
        Tensor real_video = pack_video_batch(batch, T, gen.image_size);

        Tensor fake_video;
        {
            Graph g;
            Var frames = rollout_frames(g, batch, false, nullptr);
            fake_video = frames_to_video(frames, T, B).value();
        }

        double l_dv = 0, l_di = 0;
        {
            Graph g;
            Var s_r = dv.scores(g, g.leaf(real_video, false), true);
            Var s_f = dv.scores(g, g.leaf(fake_video, false), true);
            Var adv = add(neg_mean_softplus(s_r), mean_all(softplus_op(s_f)));
            R1Term r1 = r1_penalty(
                g, [&dv](Graph& gg, Var x, bool t) { return sum_all(dv.scores(gg, x, t)); },
                real_video, cfg.r1_gamma);
            Var obj = r1.active ? add(adv, r1.penalty) : adv;
            l_dv = adv.value()[0];
            dv.params.zero_grad();
            g.backward(obj);
            g.accumulate_param_grads();
            dv_opt.step(dv.params);
        }
        {
            Tensor real_frames = sample_frames(real_video, rng, cfg.disc_frames);
            Tensor fake_frames = sample_frames(fake_video, rng, cfg.disc_frames);
            Graph g;
            Var s_r = di.scores(g, g.leaf(std::move(real_frames), false), true);
            Var s_f = di.scores(g, g.leaf(std::move(fake_frames), false), true);
            Var adv = add(neg_mean_softplus(s_r), mean_all(softplus_op(s_f)));
            R1Term r1 = r1_penalty(
                g, [&di](Graph& gg, Var x, bool t) { return sum_all(di.scores(gg, x, t)); },
                sample_frames(real_video, rng, cfg.disc_frames), cfg.r1_gamma);
            Var obj = r1.active ? add(adv, r1.penalty) : adv;
            l_di = adv.value()[0];
            di.params.zero_grad();
            g.backward(obj);
            g.accumulate_param_grads();
            di_opt.step(di.params);
        }

        VideoStepLosses row;
        row.l_dv = l_dv;
        row.l_di = l_di;
        {
            Graph g;
            std::vector<Var> codes;
            Var frames = rollout_frames(g, batch, true, &codes);
            Var video = frames_to_video(frames, T, B);
            Var l_gv = neg_mean_softplus(dv.scores(g, video, false));
            std::vector<int> pick;
            for (int b = 0; b < B; ++b)
                for (int j = 0; j < cfg.disc_frames; ++j) pick.push_back(rng.index(T) * B + b);
            Var l_gi = neg_mean_softplus(di.scores(g, gather0(frames, pick), false));

            std::vector<Var> mel_parts;
            std::vector<int> labels;
            for (int t = 0; t < T; ++t) {
                mel_parts.push_back(g.leaf(packed_mels(batch, t), false));
                for (const LoadedClip* c : batch) labels.push_back(c->label);
            }
            Var l_av = clip_av_term(g, nets, frames, concat0(mel_parts));
            Var l_at = clip_at_term(g, nets, frames, labels);

            Var code_sum = codes[0];
            for (int t = 1; t < T; ++t) code_sum = add(code_sum, codes[static_cast<std::size_t>(t)]);
            Var code_mean = scale(code_sum, 1.0 / T);
            Var spread;
            for (int t = 0; t < T; ++t) {
                Var sq = sum_all(square(sub(codes[static_cast<std::size_t>(t)], code_mean)));
                spread = t == 0 ? sq : add(spread, sq);
            }
            Var reg = scale(spread, 1.0 / (static_cast<double>(B) * T));

            Var l_enc = add(add(l_av, l_at), scale(reg, cfg.lambda_bind));
            Var l_g = add(l_gv, l_gi);
            Var total = add(l_g, scale(l_enc, cfg.lambda_enc));

            row.l_g_v = l_gv.value()[0];
            row.l_g_i = l_gi.value()[0];
            row.l_g = l_g.value()[0];
            row.l_enc = l_enc.value()[0];
            row.total = total.value()[0];

            traj.params.zero_grad();
            if (cfg.cotrain_encoder != 0) enc.params.zero_grad();
            g.backward(total);
            g.accumulate_param_grads();
            traj_opt.step(traj.params);
            if (cfg.cotrain_encoder != 0) enc_opt.step(enc.params);
        }

        const double checks[5] = {row.l_dv, row.l_di, row.l_g, row.l_enc, row.total};
        for (double v : checks)
            if (!std::isfinite(v))
                throw std::runtime_error("train_video_model: loss diverged at step " +
                                         std::to_string(step));
        if (csv != nullptr)
            *csv << step << "," << row.l_dv << "," << row.l_di << "," << row.l_g << ","
                 << row.l_enc << "," << row.total << "\n";
        if (step == 0) stats.first = row;
        stats.last = row;
        ++stats.steps;
        if (verbose && (step % 25 == 0 || step + 1 == cfg.video_steps))
            std::fprintf(stderr, "  video step %4d  dv %.4f  di %.4f  g %.4f  enc %.4f\n", step,
                         row.l_dv, row.l_di, row.l_g, row.l_enc);
    }
    return stats;
}

}  // namespace sonovid
