#include "sonovid/embedding.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sonovid/optim.h"

namespace sonovid {
namespace {

constexpr double kMaxLogitScale = 100.0;

void clamp_logit_scale(Param& p) {
    const float cap = std::log(static_cast<float>(kMaxLogitScale));
    if (p.value[0] > cap) p.value[0] = cap;
}

std::vector<double> widen(const Tensor& t) {
    std::vector<double> v(t.data.begin(), t.data.end());
    return v;
}

}  // namespace

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine_distance: size mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_distance: zero-norm input");
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_distance(const Tensor& a, const Tensor& b) {
    return cosine_distance(widen(a), widen(b));
}

void cosine_distance_grad(const std::vector<double>& a, const std::vector<double>& b,
                          std::vector<double>* da, std::vector<double>* db) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine_distance_grad: size mismatch");
    double dot = 0, na2 = 0, nb2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    if (na2 == 0.0 || nb2 == 0.0)
        throw std::invalid_argument("cosine_distance_grad: zero-norm input");
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    da->assign(a.size(), 0.0);
    db->assign(a.size(), 0.0);
    // d/da [1 - a.b/(|a||b|)] = -b/(|a||b|) + (a.b) a / (|a|^3 |b|)
    for (std::size_t i = 0; i < a.size(); ++i) {
        (*da)[i] = -b[i] / (na * nb) + dot * a[i] / (na2 * na * nb);
        (*db)[i] = -a[i] / (na * nb) + dot * b[i] / (nb2 * nb * na);
    }
}

float mel_to_input(float v) { return (v + 6.0f) * 0.25f; }

Tensor pack_images(const std::vector<const Image*>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("pack_images: empty batch");
    const Image& first = *imgs.front();
    for (const Image* im : imgs)
        if (im->channels != first.channels || im->height != first.height || im->width != first.width)
            throw std::invalid_argument("pack_images: mixed shapes");
    Tensor out({static_cast<int>(imgs.size()), first.channels, first.height, first.width});
    const std::size_t per = first.pixels.size();
    for (std::size_t b = 0; b < imgs.size(); ++b)
        std::copy(imgs[b]->pixels.begin(), imgs[b]->pixels.end(), out.data.begin() + b * per);
    return out;
}

Tensor pack_mels(const std::vector<const MelSpectrogram*>& mels, const std::vector<int>& offsets,
                 int width) {
    if (mels.empty() || mels.size() != offsets.size())
        throw std::invalid_argument("pack_mels: bad batch");
    const int M = mels.front()->n_mels;
    Tensor out({static_cast<int>(mels.size()), 1, M, width});
    for (std::size_t b = 0; b < mels.size(); ++b) {
        const MelSpectrogram& m = *mels[b];
        if (m.n_mels != M) throw std::invalid_argument("pack_mels: mixed mel counts");
        if (offsets[b] < 0 || offsets[b] + width > m.n_frames)
            throw std::invalid_argument("pack_mels: crop out of range");
        for (int r = 0; r < M; ++r)
            for (int t = 0; t < width; ++t)
                out[(b * static_cast<std::size_t>(M) + r) * width + t] =
                    mel_to_input(m.at(r, offsets[b] + t));
    }
    return out;
}

EmbeddingNets make_embedding_nets(const TrainConfig& cfg, RandomSource& rng) {
    EmbeddingNets n;
    n.dim = cfg.embed_dim;
    n.classes = cfg.classes;
    n.image_size = cfg.image_size;
    n.n_mels = cfg.n_mels;
    ParamSet& ps = n.params;
    n.iv1 = make_conv2d(ps, "img.c1", 3, 16, 3, 2, 1, rng);
    n.iv2 = make_conv2d(ps, "img.c2", 16, 32, 3, 2, 1, rng);
    n.iv3 = make_conv2d(ps, "img.c3", 32, 48, 3, 2, 1, rng);
    n.iv4 = make_conv2d(ps, "img.c4", 48, 64, 3, 2, 1, rng);
    n.iv_fc = make_linear(ps, "img.fc", 64, n.dim, rng);
    n.au1 = make_conv2d(ps, "aud.c1", 1, 16, 3, 2, 1, rng);
    n.au2 = make_conv2d(ps, "aud.c2", 16, 32, 3, 2, 1, rng);
    n.au3 = make_conv2d(ps, "aud.c3", 32, 48, 3, 2, 1, rng);
    n.au_r1 = make_conv2d(ps, "aud.r1", 48, 48, 3, 1, 1, rng);
    n.au_r2 = make_conv2d(ps, "aud.r2", 48, 48, 3, 1, 1, rng);
    n.au4 = make_conv2d(ps, "aud.c4", 48, 64, 3, 2, 1, rng);
    n.au_fc = make_linear(ps, "aud.fc", 64, n.dim, rng);
    n.text_table = &ps.add("text.table", normal_init<float>(rng, {n.classes, n.dim}, n.dim, 1.0));
    Tensor ls({1});
    ls[0] = std::log(1.0f / static_cast<float>(cfg.temperature_init));
    n.log_scale = &ps.add("text.logit_scale", std::move(ls));
    clamp_logit_scale(*n.log_scale);
    return n;
}

Var EmbeddingNets::encode_images(Graph& g, Var x, bool train) const {
    return encode_images_with_taps(g, x, train, nullptr);
}

Var EmbeddingNets::encode_images_with_taps(Graph& g, Var x, bool train,
                                           std::vector<Var>* taps) const {
    const auto& s = x.value().shape;
    if (s.size() != 4 || s[1] != 3 || s[2] != image_size || s[3] != image_size)
        throw std::invalid_argument("encode_images: expected [B,3," + std::to_string(image_size) +
                                    "," + std::to_string(image_size) + "], got " +
                                    shape_str(x.value().shape));
    Var h = leaky_relu(iv1(g, x, train));
    h = leaky_relu(iv2(g, h, train));
    if (taps != nullptr) taps->push_back(h);
    h = leaky_relu(iv3(g, h, train));
    if (taps != nullptr) taps->push_back(h);
    h = leaky_relu(iv4(g, h, train));
    return row_l2_normalize(iv_fc(g, global_avg_pool(h), train));
}

Var EmbeddingNets::encode_mels(Graph& g, Var x, bool train) const {
    const auto& s = x.value().shape;
    if (s.size() != 4 || s[1] != 1 || s[2] != n_mels || s[3] < 1)
        throw std::invalid_argument("encode_mels: expected [B,1," + std::to_string(n_mels) +
                                    ",W], got " + shape_str(x.value().shape));
    Var h = leaky_relu(au1(g, x, train));
    h = leaky_relu(au2(g, h, train));
    h = leaky_relu(au3(g, h, train));
    Var r = au_r2(g, leaky_relu(au_r1(g, h, train)), train);
    h = leaky_relu(add(h, r));
    h = leaky_relu(au4(g, h, train));
    return row_l2_normalize(au_fc(g, global_avg_pool(h), train));
}

Var EmbeddingNets::encode_labels(Graph& g, const std::vector<int>& ids, bool train) const {
    for (int id : ids)
        if (id < 0 || id >= classes) throw std::invalid_argument("encode_labels: id out of range");
    return row_l2_normalize(gather0(pvar(g, *text_table, train), ids));
}

Tensor EmbeddingNets::embed_image(const Image& img) const {
    Graph g;
    Var e = encode_images(g, g.leaf(pack_images({&img}), false), false);
    Tensor out({dim});
    out.data = e.value().data;
    return out;
}

Tensor EmbeddingNets::embed_mel(const MelSpectrogram& mel) const {
    Graph g;
    Var e = encode_mels(g, g.leaf(pack_mels({&mel}, {0}, mel.n_frames), false), false);
    Tensor out({dim});
    out.data = e.value().data;
    return out;
}

Tensor EmbeddingNets::embed_label(int id) const {
    Graph g;
    Var e = encode_labels(g, {id}, false);
    Tensor out({dim});
    out.data = e.value().data;
    return out;
}

double EmbeddingNets::logit_scale() const {
    return std::min(kMaxLogitScale, std::exp(static_cast<double>(log_scale->value[0])));
}

Var contrastive_loss(Graph& g, const EmbeddingNets& nets, Var images, Var mels,
                     const std::vector<int>& labels, bool train, ContrastiveParts* parts) {
    const int B = images.value().shape[0];
    if (static_cast<int>(labels.size()) != B || mels.value().shape[0] != B)
        throw std::invalid_argument("contrastive_loss: batch size mismatch");
    Var emb_i = nets.encode_images(g, images, train);
    Var emb_a = nets.encode_mels(g, mels, train);
    Var emb_t = nets.encode_labels(g, labels, train);
    Var s = exp_op(pvar(g, *nets.log_scale, train));
    std::vector<int> idx(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) idx[static_cast<std::size_t>(i)] = i;
    Var l_it = scale(add(softmax_cross_entropy(scale_by(matmul_nt(emb_i, emb_t), s), idx),
                         softmax_cross_entropy(scale_by(matmul_nt(emb_t, emb_i), s), idx)),
                     0.5);
    Var l_ia = scale(add(softmax_cross_entropy(scale_by(matmul_nt(emb_i, emb_a), s), idx),
                         softmax_cross_entropy(scale_by(matmul_nt(emb_a, emb_i), s), idx)),
                     0.5);
    Var total = add(l_it, l_ia);
    if (parts != nullptr) {
        parts->image_text = l_it.value()[0];
        parts->image_audio = l_ia.value()[0];
        parts->total = total.value()[0];
    }
    return total;
}

std::pair<std::vector<int>, std::vector<int>> split_train_heldout(int n) {
    std::vector<int> train, held;
    for (int i = 0; i < n; ++i)
        (i % 5 == 4 ? held : train).push_back(i);
    return {train, held};
}

EmbeddingTrainStats train_contrastive(EmbeddingNets& nets, const std::vector<LoadedClip>& clips,
                                      const TrainConfig& cfg, RandomSource& rng, bool verbose) {
    if (clips.empty()) throw std::invalid_argument("train_contrastive: no clips");
    auto [train_idx, held_idx] = split_train_heldout(static_cast<int>(clips.size()));
    if (train_idx.empty()) throw std::invalid_argument("train_contrastive: empty training split");
    const int B = std::min(cfg.embed_batch, static_cast<int>(train_idx.size()));

    Adam opt{cfg.embed_lr};
    EmbeddingTrainStats stats;
    std::vector<int> pool = train_idx;
    for (int step = 0; step < cfg.embed_steps; ++step) {
        // draw B distinct clips when possible
        std::vector<int> batch(static_cast<std::size_t>(B));
        for (int k = 0; k < B; ++k) {
            const int j = k + rng.index(static_cast<int>(pool.size()) - k);
            std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
            batch[static_cast<std::size_t>(k)] = pool[static_cast<std::size_t>(k)];
        }
        bool single_class = true;
        for (int i : batch)
            if (clips[static_cast<std::size_t>(i)].label != clips[static_cast<std::size_t>(batch[0])].label)
                single_class = false;
        if (single_class && B > 1) {
            std::fprintf(stderr, "train_contrastive: skipping single-class batch at step %d\n", step);
            ++stats.skipped_batches;
            continue;
        }

        std::vector<const Image*> imgs;
        std::vector<const MelSpectrogram*> mels;
        std::vector<int> offs, labels;
        int min_frames = 1 << 30;
        for (int i : batch)
            min_frames = std::min(min_frames, clips[static_cast<std::size_t>(i)].mel.n_frames);
        const int lo = std::min(6, min_frames);
        const int w = lo + rng.index(min_frames - lo + 1);
        for (int i : batch) {
            const LoadedClip& c = clips[static_cast<std::size_t>(i)];
            imgs.push_back(&c.video.frames[rng.index(static_cast<int>(c.video.frames.size()))]);
            mels.push_back(&c.mel);
            offs.push_back(rng.index(c.mel.n_frames - w + 1));
            labels.push_back(c.label);
        }

        Graph g;
        Var x_img = g.leaf(pack_images(imgs), false);
        Var x_mel = g.leaf(pack_mels(mels, offs, w), false);
        ContrastiveParts parts;
        Var loss = contrastive_loss(g, nets, x_img, x_mel, labels, true, &parts);
        nets.params.zero_grad();
        g.backward(loss);
        g.accumulate_param_grads();
        opt.step(nets.params);
        clamp_logit_scale(*nets.log_scale);

        if (stats.steps_run == 0) stats.first_loss = parts.total;
        stats.final_loss = parts.total;
        ++stats.steps_run;
        if (verbose && (step % 50 == 0 || step + 1 == cfg.embed_steps))
            std::fprintf(stderr, "  embed step %4d  loss %.4f  (it %.4f  ia %.4f  scale %.1f)\n",
                         step, parts.total, parts.image_text, parts.image_audio, nets.logit_scale());
    }
    stats.heldout_retrieval =
        retrieval_top1(nets, clips, held_idx.empty() ? train_idx : held_idx, cfg.embed_batch);
    return stats;
}

double retrieval_top1(const EmbeddingNets& nets, const std::vector<LoadedClip>& clips,
                      const std::vector<int>& indices, int batch) {
    int correct = 0, total = 0;
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch));
        const int B = static_cast<int>(end - start);
        if (B < 2) break;
        std::vector<const Image*> imgs;
        std::vector<const MelSpectrogram*> mels;
        std::vector<int> offs, labels;
        int w = 1 << 30;
        for (std::size_t k = start; k < end; ++k)
            w = std::min(w, clips[static_cast<std::size_t>(indices[k])].mel.n_frames);
        for (std::size_t k = start; k < end; ++k) {
            const LoadedClip& c = clips[static_cast<std::size_t>(indices[k])];
            imgs.push_back(&c.video.frames.front());
            mels.push_back(&c.mel);
            offs.push_back(0);
            labels.push_back(c.label);
        }
        Graph g;
        Var emb_i = nets.encode_images(g, g.leaf(pack_images(imgs), false), false);
        Var emb_a = nets.encode_mels(g, g.leaf(pack_mels(mels, offs, w), false), false);
        const auto& vi = emb_i.value();
        const auto& va = emb_a.value();
        const int d = nets.dim;
        for (int r = 0; r < B; ++r) {
            int best = 0;
            double best_sim = -2.0;
            for (int c = 0; c < B; ++c) {
                double sim = 0;
                for (int j = 0; j < d; ++j)
                    sim += static_cast<double>(va[static_cast<std::size_t>(r) * d + j]) *
                           vi[static_cast<std::size_t>(c) * d + j];
                if (sim > best_sim) {
                    best_sim = sim;
                    best = c;
                }
            }
            if (labels[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(r)]) ++correct;
            ++total;
        }
    }
    return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

}  // namespace sonovid
