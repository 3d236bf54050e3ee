// video_train.h — adversarial training of the recurrent motion model: patch
// discriminators on clips and frames push realism, alignment terms keep every
// frame tied to its audio segment and class label.
#pragma once

#include <ostream>
#include <vector>

#include "sonovid/adversarial.h"
#include "sonovid/config.h"
#include "sonovid/dataset.h"
#include "sonovid/embedding.h"
#include "sonovid/inversion.h"
#include "sonovid/trajectory.h"

namespace sonovid {

struct VideoStepLosses {
    double l_dv = 0;     // video discriminator loss (without the R1 term)
    double l_di = 0;     // image discriminator loss (without the R1 term)
    double l_g_v = 0;    // generator term from the video discriminator
    double l_g_i = 0;    // generator term from the image discriminator
    double l_g = 0;      // l_g_v + l_g_i
    double l_enc = 0;    // alignment + code spread
    double total = 0;    // l_g + lambda_enc * l_enc
};

struct VideoTrainStats {
    VideoStepLosses first;
    VideoStepLosses last;
    int steps = 0;
};

// Alternating updates: both discriminators ascend on real clips versus
// rollouts (with R1 on real inputs), then the recurrent blocks, and the sound
// encoder when cfg.cotrain_encoder is set, descend the combined objective.
// The image generator and the embedding towers stay frozen. Writes
// "step,l_dv,l_di,l_g,l_enc,total" rows when csv is non-null; aborts on NaN.
VideoTrainStats train_video_model(TrajectoryModel& traj, SoundEncoder& enc,
                                  const StyleGenerator& gen, const EmbeddingNets& nets,
                                  PatchVideoDisc& dv, PatchImageDisc& di,
                                  const std::vector<LoadedClip>& clips, const TrainConfig& cfg,
                                  RandomSource& rng, std::ostream* csv, bool verbose = false);

}  // namespace sonovid
