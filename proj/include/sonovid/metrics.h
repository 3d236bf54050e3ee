// metrics.h — set-level evaluation of generated clips: a class score from a
// small clip classifier, a Gaussian feature-space distance between real and
// generated sets, and cross-modal similarity against audio and labels.
#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include "sonovid/config.h"
#include "sonovid/dataset.h"
#include "sonovid/embedding.h"
#include "sonovid/nn.h"

namespace sonovid {

// Gaussian fit of a feature sample: mean plus unbiased covariance.
struct FeatureStats {
    int dim = 0;
    int n = 0;
    std::vector<double> mean;  // [dim]
    std::vector<double> cov;   // [dim*dim], row-major, symmetric
};

// Rejects fewer than two samples or ragged rows.
FeatureStats fit_feature_stats(const std::vector<std::vector<double>>& features);

// Principal square root of a symmetric PSD matrix (row-major [dim*dim]);
// eigenvalues above -1e-8 are clipped to zero, anything lower is rejected.
std::vector<double> sym_matrix_sqrt(const std::vector<double>& m, int dim);

// |mu_a - mu_b|^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^(1/2)), clamped at 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct LabelDistribution {
    std::vector<double> probs;
};

// Throws unless probs are nonnegative and sum to 1 within 1e-6.
void validate_distribution(const LabelDistribution& d);

// exp of the mean KL between per-clip and split-marginal label
// distributions, reported as (mean, std) over contiguous splits. Sets
// smaller than the split count are scored as a single split.
std::pair<double, double> inception_score(const std::vector<LabelDistribution>& dists,
                                          int splits = 10);

// Shallow 3D-conv classifier over whole clips; its pooled activations double
// as the feature space for the distribution distance.
struct VideoFeatureNet {
    int classes = 0;
    int image_size = 0;
    int feature_dim = 0;
    ParamSet params;
    Conv3d c1, c2, c3;
    Linear head;

    Var features(Graph& g, Var video, bool train) const;  // [B,3,T,H,W] -> [B,F]
    Var logits(Graph& g, Var video, bool train) const;    // -> [B,C]
    std::vector<double> clip_feature(const VideoClip& clip) const;
    LabelDistribution classify(const VideoClip& clip) const;
};

VideoFeatureNet make_feature_net(const TrainConfig& cfg, RandomSource& rng);

struct FeatureTrainStats {
    double first_loss = 0;
    double last_loss = 0;
    int steps = 0;
};

// Cross-entropy training on labelled real clips; cfg.eval_feature_steps
// steps. Writes "step,loss" rows when csv is non-null.
FeatureTrainStats train_feature_net(VideoFeatureNet& net, const std::vector<LoadedClip>& clips,
                                    const TrainConfig& cfg, RandomSource& rng, std::ostream* csv,
                                    bool verbose = false);

std::pair<double, double> inception_score(const std::vector<const VideoClip*>& clips,
                                          const VideoFeatureNet& net, int splits = 10);

// Fits Gaussians to both feature sets and returns their distance.
double video_feature_gap(const VideoFeatureNet& net, const std::vector<const VideoClip*>& real,
                         const std::vector<const VideoClip*>& fake);

// Frame embeddings averaged over the clip, then renormalized to unit length.
std::vector<double> video_embedding(const EmbeddingNets& nets, const VideoClip& clip);

// (sim_tv, sim_av): mean cosine similarity of each clip's video embedding
// against its label embedding and its audio embedding.
std::pair<double, double> semantic_consistency(const EmbeddingNets& nets,
                                               const std::vector<const VideoClip*>& clips,
                                               const std::vector<const MelSpectrogram*>& mels,
                                               const std::vector<int>& labels);

}  // namespace sonovid
