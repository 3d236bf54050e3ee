// adversarial.h — patch discriminators for frames and clips, the associated
// losses, and the generator pretraining loop.
#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "sonovid/config.h"
#include "sonovid/generator.h"
#include "sonovid/image_io.h"
#include "sonovid/nn.h"
#include "sonovid/rng.h"

namespace sonovid {

// Non-overlapping 8x8 pixel patches, one logit each; the clip score is the
// mean patch logit.
struct PatchImageDisc {
    int image_size = 0;
    ParamSet params;
    Conv2d embed;  // k8 s8
    Conv2d mix;    // 1x1
    Conv2d head;   // 1x1 -> logit

    Var logit_grid(Graph& g, Var x, bool train) const;  // [B,3,H,W] -> [B,1,H/8,W/8]
    Var scores(Graph& g, Var x, bool train) const;      // -> [B,1] per-sample mean logit
};

// 4-frame by 8x8-pixel spatiotemporal patches with temporal stride 3 so a
// 10-frame clip is covered by three overlapping windows.
struct PatchVideoDisc {
    int image_size = 0;
    ParamSet params;
    Conv3d embed;  // k (4,8,8), stride (3,8,8)
    Conv3d mix;    // 1x1x1
    Conv3d head;   // 1x1x1 -> logit

    Var logit_grid(Graph& g, Var x, bool train) const;  // [B,3,T,H,W] -> [B,1,T',H/8,W/8]
    Var scores(Graph& g, Var x, bool train) const;      // -> [B,1]
};

constexpr int kVideoPatchFrames = 4;
constexpr int kVideoPatchStride = 3;
constexpr int kPatchPixels = 8;

PatchImageDisc make_image_disc(const TrainConfig& cfg, RandomSource& rng);
PatchVideoDisc make_video_disc(const TrainConfig& cfg, RandomSource& rng);

// Mean patch logit of one clip; rejects clips shorter than the patch window.
double score_video(const PatchVideoDisc& d, const VideoClip& clip);

Tensor pack_video(const VideoClip& clip);  // [1,3,T,H,W]

// Builds the frozen-parameter score sum on a fresh input leaf.
using ScoreSumFn = std::function<Var(Graph&, Var, bool)>;

struct R1Term {
    Var penalty;       // graph node contributing to the discriminator loss
    double exact = 0;  // (gamma/2) * mean_b |grad_x score_b|^2, for logging
    bool active = false;
};

// R1 gradient penalty via a symmetric finite difference along the input
// gradient direction: differentiating (S(x+eU) - S(x-eU)) / (2e) with respect
// to discriminator parameters approximates the gradient of |grad_x S|^2.
R1Term r1_penalty(Graph& g, const ScoreSumFn& score_sum, const Tensor& x_real, double gamma);

struct AdvLosses {
    double l_dv = 0;
    double l_di = 0;
    double l_g = 0;
};

// Evaluation-only losses on a matched real/fake pair, standard GAN form:
// D loss per discriminator = mean softplus(-s_real) + mean softplus(s_fake),
// generator loss = mean softplus(-s_fake), summed over both discriminators.
// Frames for the image discriminator are drawn uniformly per clip.
AdvLosses adversarial_losses(const PatchVideoDisc& dv, const PatchImageDisc& di,
                             const Tensor& real_video, const Tensor& fake_video,
                             RandomSource& rng, int disc_frames);

// Picks disc_frames frames per clip and stacks them into [B*disc_frames,3,H,W].
Tensor sample_frames(const Tensor& video, RandomSource& rng, int disc_frames);

struct PretrainStats {
    double first_d_loss = 0;
    double final_d_loss = 0;
    double first_g_loss = 0;
    double final_g_loss = 0;
    int steps = 0;
};

// Alternating non-saturating GAN training of the generator against the image
// patch discriminator, with R1 on real batches. Aborts on NaN. Writes
// "step,d_loss,g_loss,r1" rows when csv is non-null.
PretrainStats pretrain_generator(StyleGenerator& gen, PatchImageDisc& disc,
                                 const std::vector<const Image*>& images, const TrainConfig& cfg,
                                 RandomSource& rng, std::ostream* csv, bool verbose = false);

}  // namespace sonovid
