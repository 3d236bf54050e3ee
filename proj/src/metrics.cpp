#include "sonovid/metrics.h"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "sonovid/optim.h"

namespace sonovid {
namespace {

constexpr double kEigTol = 1e-8;
constexpr int kFeatureBatch = 4;
constexpr double kFeatureLr = 1e-3;

using Md = Eigen::MatrixXd;

Md as_matrix(const std::vector<double>& m, int dim) {
    Md out(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) out(i, j) = m[static_cast<std::size_t>(i) * dim + j];
    return out;
}

// Symmetrizes, rejects eigenvalues below -tol, clips the rest at zero.
Md psd_sqrt(Md m, double tol, const char* who) {
    Md sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Md> eig(sym);
    if (eig.info() != Eigen::Success) throw std::runtime_error(std::string(who) + ": eigensolver");
    Eigen::VectorXd vals = eig.eigenvalues();
    const double scale = std::max(1.0, vals.cwiseAbs().maxCoeff());
    for (int i = 0; i < vals.size(); ++i) {
        if (vals[i] < -tol * scale)
            throw std::invalid_argument(std::string(who) + ": matrix is not positive semidefinite");
        vals[i] = std::sqrt(std::max(0.0, vals[i]));
    }
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

void check_stats(const FeatureStats& s, const char* who) {
    if (s.dim <= 0 || s.n < 2 || static_cast<int>(s.mean.size()) != s.dim ||
        static_cast<int>(s.cov.size()) != s.dim * s.dim)
        throw std::invalid_argument(std::string(who) + ": malformed feature stats");
    for (int i = 0; i < s.dim; ++i)
        for (int j = 0; j < i; ++j)
            if (std::abs(s.cov[static_cast<std::size_t>(i) * s.dim + j] -
                         s.cov[static_cast<std::size_t>(j) * s.dim + i]) > 1e-8)
                throw std::invalid_argument(std::string(who) + ": covariance is not symmetric");
}

Tensor pack_clip_batch(const std::vector<const VideoClip*>& clips) {
    if (clips.empty()) throw std::invalid_argument("pack_clip_batch: empty batch");
    const int B = static_cast<int>(clips.size());
    int T = static_cast<int>(clips.front()->frames.size());
    for (const VideoClip* c : clips) T = std::min(T, static_cast<int>(c->frames.size()));
    if (T < 1) throw std::invalid_argument("pack_clip_batch: empty clip");
    const Image& f0 = clips.front()->frames.front();
    const int H = f0.height, W = f0.width;
    Tensor out({B, 3, T, H, W});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            const Image& im = clips[static_cast<std::size_t>(b)]->frames[static_cast<std::size_t>(t)];
            if (im.height != H || im.width != W || im.channels != 3)
                throw std::invalid_argument("pack_clip_batch: frame shape mismatch");
            for (int c = 0; c < 3; ++c)
                std::copy(im.pixels.begin() + static_cast<std::ptrdiff_t>(c * hw),
                          im.pixels.begin() + static_cast<std::ptrdiff_t>((c + 1) * hw),
                          out.data.begin() +
                              static_cast<std::ptrdiff_t>(((static_cast<std::size_t>(b) * 3 + c) * T + t) * hw));
        }
    return out;
}

double mean_split_kl(const std::vector<LabelDistribution>& dists, int lo, int hi) {
    const int C = static_cast<int>(dists[static_cast<std::size_t>(lo)].probs.size());
    std::vector<double> marginal(static_cast<std::size_t>(C), 0.0);
    for (int i = lo; i < hi; ++i)
        for (int c = 0; c < C; ++c)
            marginal[static_cast<std::size_t>(c)] +=
                dists[static_cast<std::size_t>(i)].probs[static_cast<std::size_t>(c)] / (hi - lo);
    double kl = 0;
    for (int i = lo; i < hi; ++i)
        for (int c = 0; c < C; ++c) {
            const double p = dists[static_cast<std::size_t>(i)].probs[static_cast<std::size_t>(c)];
            if (p > 0) kl += p * std::log(p / marginal[static_cast<std::size_t>(c)]);
        }
    return kl / (hi - lo);
}

}  // namespace

FeatureStats fit_feature_stats(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2)
        throw std::invalid_argument("fit_feature_stats: need at least two samples");
    FeatureStats s;
    s.n = static_cast<int>(features.size());
    s.dim = static_cast<int>(features.front().size());
    if (s.dim < 1) throw std::invalid_argument("fit_feature_stats: empty feature");
    s.mean.assign(static_cast<std::size_t>(s.dim), 0.0);
    for (const auto& f : features) {
        if (static_cast<int>(f.size()) != s.dim)
            throw std::invalid_argument("fit_feature_stats: ragged feature rows");
        for (int i = 0; i < s.dim; ++i) s.mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
    }
    for (auto& v : s.mean) v /= s.n;
    s.cov.assign(static_cast<std::size_t>(s.dim) * s.dim, 0.0);
    for (const auto& f : features)
        for (int i = 0; i < s.dim; ++i) {
            const double di = f[static_cast<std::size_t>(i)] - s.mean[static_cast<std::size_t>(i)];
            for (int j = i; j < s.dim; ++j)
                s.cov[static_cast<std::size_t>(i) * s.dim + j] +=
                    di * (f[static_cast<std::size_t>(j)] - s.mean[static_cast<std::size_t>(j)]);
        }
    for (int i = 0; i < s.dim; ++i)
        for (int j = i; j < s.dim; ++j) {
            s.cov[static_cast<std::size_t>(i) * s.dim + j] /= (s.n - 1);
            s.cov[static_cast<std::size_t>(j) * s.dim + i] =
                s.cov[static_cast<std::size_t>(i) * s.dim + j];
        }
    return s;
}

std::vector<double> sym_matrix_sqrt(const std::vector<double>& m, int dim) {
    if (dim < 1 || static_cast<int>(m.size()) != dim * dim)
        throw std::invalid_argument("sym_matrix_sqrt: bad shape");
    Md r = psd_sqrt(as_matrix(m, dim), kEigTol, "sym_matrix_sqrt");
    std::vector<double> out(static_cast<std::size_t>(dim) * dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) out[static_cast<std::size_t>(i) * dim + j] = r(i, j);
    return out;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    check_stats(a, "frechet_distance");
    check_stats(b, "frechet_distance");
    if (a.dim != b.dim) throw std::invalid_argument("frechet_distance: dimension mismatch");
    const int d = a.dim;
    Md ca = as_matrix(a.cov, d), cb = as_matrix(b.cov, d);
    Md sa = psd_sqrt(ca, kEigTol, "frechet_distance");
    Md prod = sa * cb * sa;
    Md sym = 0.5 * (prod + prod.transpose());
    Eigen::SelfAdjointEigenSolver<Md> eig(sym);
    if (eig.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigensolver");
    double trace_sqrt = 0;
    for (int i = 0; i < d; ++i) trace_sqrt += std::sqrt(std::max(0.0, eig.eigenvalues()[i]));
    double mean_sq = 0;
    for (int i = 0; i < d; ++i) {
        const double diff = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
        mean_sq += diff * diff;
    }
    return std::max(0.0, mean_sq + ca.trace() + cb.trace() - 2.0 * trace_sqrt);
}

void validate_distribution(const LabelDistribution& d) {
    if (d.probs.empty()) throw std::invalid_argument("validate_distribution: empty");
    double sum = 0;
    for (double p : d.probs) {
        if (p < 0) throw std::invalid_argument("validate_distribution: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("validate_distribution: probabilities sum to " +
                                    std::to_string(sum));
}

std::pair<double, double> inception_score(const std::vector<LabelDistribution>& dists, int splits) {
    if (dists.empty()) throw std::invalid_argument("inception_score: no distributions");
    if (splits < 1) throw std::invalid_argument("inception_score: bad split count");
    const int n = static_cast<int>(dists.size());
    const std::size_t C = dists.front().probs.size();
    for (const auto& d : dists) {
        validate_distribution(d);
        if (d.probs.size() != C) throw std::invalid_argument("inception_score: mixed class counts");
    }
    const int S = n >= splits ? splits : 1;
    std::vector<double> scores;
    for (int s = 0; s < S; ++s) {
        const int lo = s * n / S, hi = (s + 1) * n / S;
        if (hi > lo) scores.push_back(std::exp(mean_split_kl(dists, lo, hi)));
    }
    double mean = 0;
    for (double v : scores) mean += v;
    mean /= static_cast<double>(scores.size());
    double var = 0;
    for (double v : scores) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / static_cast<double>(scores.size()))};
}

Var VideoFeatureNet::features(Graph& g, Var video, bool train) const {
    Var h = leaky_relu(c1(g, video, train));
    h = leaky_relu(c2(g, h, train));
    h = leaky_relu(c3(g, h, train));
    return global_avg_pool(h);
}

Var VideoFeatureNet::logits(Graph& g, Var video, bool train) const {
    return head(g, features(g, video, train), train);
}

std::vector<double> VideoFeatureNet::clip_feature(const VideoClip& clip) const {
    Graph g;
    Var f = features(g, g.leaf(pack_clip_batch({&clip}), false), false);
    std::vector<double> out;
    for (float v : f.value().data) out.push_back(v);
    return out;
}

LabelDistribution VideoFeatureNet::classify(const VideoClip& clip) const {
    Graph g;
    Var lg = logits(g, g.leaf(pack_clip_batch({&clip}), false), false);
    const auto& v = lg.value().data;
    double mx = v[0];
    for (float x : v) mx = std::max(mx, static_cast<double>(x));
    LabelDistribution d;
    double sum = 0;
    for (float x : v) {
        d.probs.push_back(std::exp(static_cast<double>(x) - mx));
        sum += d.probs.back();
    }
    for (double& p : d.probs) p /= sum;
    return d;
}

VideoFeatureNet make_feature_net(const TrainConfig& cfg, RandomSource& rng) {
    VideoFeatureNet n;
    n.classes = cfg.classes;
    n.image_size = cfg.image_size;
    n.feature_dim = 48;
    n.c1 = make_conv3d(n.params, "feat.c1", 3, 24, 3, 4, 4, 1, 2, 2, rng);
    n.c2 = make_conv3d(n.params, "feat.c2", 24, 32, 3, 4, 4, 2, 2, 2, rng);
    n.c3 = make_conv3d(n.params, "feat.c3", 32, 48, 3, 3, 3, 1, 2, 2, rng);
    n.c1.pt = n.c1.py = n.c1.px = 1;
    n.c2.pt = n.c2.py = n.c2.px = 1;
    n.c3.pt = n.c3.py = n.c3.px = 1;
    n.head = make_linear(n.params, "feat.head", n.feature_dim, cfg.classes, rng, 1.0);
    return n;
}

FeatureTrainStats train_feature_net(VideoFeatureNet& net, const std::vector<LoadedClip>& clips,
                                    const TrainConfig& cfg, RandomSource& rng, std::ostream* csv,
                                    bool verbose) {
    if (clips.empty()) throw std::invalid_argument("train_feature_net: no clips");
    Adam opt{kFeatureLr};
    FeatureTrainStats stats;
    if (csv != nullptr) *csv << "step,loss\n";
    for (int step = 0; step < cfg.eval_feature_steps; ++step) {
        std::vector<const VideoClip*> batch;
        std::vector<int> labels;
        for (int i = 0; i < kFeatureBatch; ++i) {
            const auto& c = clips[static_cast<std::size_t>(rng.integer(clips.size()))];
            batch.push_back(&c.video);
            labels.push_back(c.label);
        }
        Graph g;
        Var loss = softmax_cross_entropy(net.logits(g, g.leaf(pack_clip_batch(batch), false), true),
                                         labels);
        const double v = loss.value()[0];
        if (!std::isfinite(v))
            throw std::runtime_error("train_feature_net: loss diverged at step " +
                                     std::to_string(step));
        net.params.zero_grad();
        g.backward(loss);
        g.accumulate_param_grads();
        opt.step(net.params);
        if (csv != nullptr) *csv << step << "," << v << "\n";
        if (step == 0) stats.first_loss = v;
        stats.last_loss = v;
        ++stats.steps;
        if (verbose && (step % 50 == 0 || step + 1 == cfg.eval_feature_steps))
            std::fprintf(stderr, "  feature step %4d  loss %.4f\n", step, v);
    }
    return stats;
}

std::pair<double, double> inception_score(const std::vector<const VideoClip*>& clips,
                                          const VideoFeatureNet& net, int splits) {
    if (clips.empty()) throw std::invalid_argument("inception_score: no clips");
    std::vector<LabelDistribution> dists;
    for (const VideoClip* c : clips) dists.push_back(net.classify(*c));
    return inception_score(dists, splits);
}

double video_feature_gap(const VideoFeatureNet& net, const std::vector<const VideoClip*>& real,
                         const std::vector<const VideoClip*>& fake) {
    std::vector<std::vector<double>> fr, ff;
    for (const VideoClip* c : real) fr.push_back(net.clip_feature(*c));
    for (const VideoClip* c : fake) ff.push_back(net.clip_feature(*c));
    return frechet_distance(fit_feature_stats(fr), fit_feature_stats(ff));
}

std::vector<double> video_embedding(const EmbeddingNets& nets, const VideoClip& clip) {
    if (clip.frames.empty()) throw std::invalid_argument("video_embedding: empty clip");
    std::vector<double> acc;
    for (const Image& f : clip.frames) {
        const Tensor e = nets.embed_image(f);
        if (acc.empty()) acc.assign(e.data.size(), 0.0);
        for (std::size_t i = 0; i < e.data.size(); ++i) acc[i] += e.data[i];
    }
    double norm = 0;
    for (double& v : acc) {
        v /= static_cast<double>(clip.frames.size());
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("video_embedding: degenerate embedding");
    for (double& v : acc) v /= norm;
    return acc;
}

std::pair<double, double> semantic_consistency(const EmbeddingNets& nets,
                                               const std::vector<const VideoClip*>& clips,
                                               const std::vector<const MelSpectrogram*>& mels,
                                               const std::vector<int>& labels) {
    if (clips.empty() || clips.size() != mels.size() || clips.size() != labels.size())
        throw std::invalid_argument("semantic_consistency: mismatched inputs");
    auto to_double = [](const Tensor& t) {
        return std::vector<double>(t.data.begin(), t.data.end());
    };
    double sim_tv = 0, sim_av = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const std::vector<double> v = video_embedding(nets, *clips[i]);
        sim_tv += 1.0 - cosine_distance(v, to_double(nets.embed_label(labels[i])));
        sim_av += 1.0 - cosine_distance(v, to_double(nets.embed_mel(*mels[i])));
    }
    const double n = static_cast<double>(clips.size());
    return {sim_tv / n, sim_av / n};
}

}  // namespace sonovid
