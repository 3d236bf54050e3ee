// inversion.h — the sound encoder that maps a mel spectrogram into the layered
// latent space, its training losses, and sound-guided image editing.
#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sonovid/audio.h"
#include "sonovid/config.h"
#include "sonovid/dataset.h"
#include "sonovid/embedding.h"
#include "sonovid/generator.h"
#include "sonovid/nn.h"

namespace sonovid {

// Convolutional backbone with a three-level feature pyramid; each style row is
// produced by a zero-initialized head reading one pyramid level, so an
// untrained encoder emits the zero matrix (identity edit).
struct SoundEncoder {
    int latent_dim = 0;
    int layers = 0;
    int n_mels = 0;
    int coarse_end = 0;
    int mid_end = 0;
    ParamSet params;
    Conv2d c1, c2, c3;           // shallow, middle, deep pyramid levels
    std::vector<Linear> heads;   // per style row; deep level feeds coarse rows

    Var encode(Graph& g, Var mel, bool train) const;  // [B,1,M,W] -> [B, L*d]
    Tensor invert(const MelSpectrogram& mel) const;   // [L, d]
};

SoundEncoder make_sound_encoder(const TrainConfig& cfg, RandomSource& rng);

// Elementwise sum of a base code and an encoder residual.
Tensor fuse(const Tensor& w, const Tensor& e);

// Mean over L rows of a flattened [B, L*d] code batch -> [B, d].
Var mean_code_rows(Var codes, int layers, int dim);

struct InversionLossReport {
    double clip_av = 0;
    double clip_at = 0;
    double reg = 0;
    double total = 0;
    double lambda_bind = 0;
};

// Mean cosine distance terms on frozen embedding towers.
Var clip_av_term(Graph& g, const EmbeddingNets& nets, Var images, Var mels);
Var clip_at_term(Graph& g, const EmbeddingNets& nets, Var images, const std::vector<int>& labels);

// Scalar convenience for a single (image, audio, label) triple.
std::pair<double, double> clip_alignment_loss(const EmbeddingNets& nets, const Image& img,
                                              const MelSpectrogram& mel, int label);

// Mean over timesteps of the squared distance to the per-sequence mean code.
double temporal_regularizer(const std::vector<Tensor>& codes);

// Batched graph form over clip-major codes [B*T, L*d]: averages the per-clip
// regularizer over the batch.
Var temporal_regularizer_term(Graph& g, Var codes, int T);

struct InversionTrainStats {
    InversionLossReport first;
    InversionLossReport last;
    int steps = 0;
};

// Trains the encoder against frozen generator and embeddings: per clip, one
// shared random base code is fused with the encoding of each audio segment,
// the frames are synthesized, and the alignment + spread losses are applied.
// Writes "step,clip_av,clip_at,reg,total" rows when csv is non-null.
InversionTrainStats train_inversion(SoundEncoder& enc, const StyleGenerator& gen,
                                    const EmbeddingNets& nets,
                                    const std::vector<LoadedClip>& clips, const TrainConfig& cfg,
                                    RandomSource& rng, std::ostream* csv, bool verbose = false);

Image edit_image(const StyleGenerator& gen, const SoundEncoder& enc, const Tensor& w,
                 const MelSpectrogram& mel);

// (perceptual, mse): mse is the mean squared pixel error; perceptual is the
// mean squared distance between middle image-tower activations.
std::pair<double, double> inversion_score(const EmbeddingNets& nets,
                                          const std::vector<const Image*>& originals,
                                          const std::vector<const Image*>& reconstructions);

}  // namespace sonovid
