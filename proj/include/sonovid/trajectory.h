// trajectory.h — recurrent latent motion: each new style code is predicted
// from the previous code plus the sound code of the segment behind it, with
// separate recurrent blocks owning the coarse, mid, and fine row bands.
#pragma once

#include <cstdint>
#include <vector>

#include "sonovid/audio.h"
#include "sonovid/config.h"
#include "sonovid/generator.h"
#include "sonovid/inversion.h"
#include "sonovid/nn.h"

namespace sonovid {

// Stacked gated recurrent cells over the group rows of (current + sound)
// codes, then a zero-initialized head reads [last hidden ∥ noise ∥ sound
// rows] and emits a residual for the group, so a fresh model is the identity.
struct TrajectoryBlock {
    int row_begin = 0;
    int row_end = 0;
    std::vector<GRUCell> cells;
    Linear head;
};

struct TrajectoryModel {
    int latent_dim = 0;
    int layers = 0;
    int frames = 0;  // default rollout horizon T
    int hidden = 0;
    int noise_dim = 0;
    ParamSet params;
    std::vector<TrajectoryBlock> blocks;  // coarse, mid, fine
};

TrajectoryModel make_trajectory(const TrainConfig& cfg, RandomSource& rng);

struct TrajectoryState {
    std::vector<std::vector<Tensor>> h;  // [block][cell], each [1, hidden]
    int t = 0;
    int horizon = 0;
    Tensor current;  // [L, d]
};

// Zero hidden states at timestep 0; horizon <= 0 keeps the model default.
TrajectoryState init_state(const TrajectoryModel& m, Tensor current, int horizon = 0);

// One recurrence: consumes the audio segment behind the new code plus a fresh
// noise vector. Rejects t >= horizon and shape mismatches.
TrajectoryState step(const TrajectoryModel& m, const SoundEncoder& enc,
                     const TrajectoryState& state, const MelSpectrogram& seg,
                     const Tensor& noise);

// codes[0] = w0 + sound code of segs[0]; codes[t] advances with segs[t-1].
// Noise is resampled per step from the seed.
std::vector<Tensor> rollout(const TrajectoryModel& m, const SoundEncoder& enc, const Tensor& w0,
                            const std::vector<MelSpectrogram>& segs, std::uint64_t seed);

// One frame per code, in order, on the frozen generator.
VideoClip render_video(const StyleGenerator& gen, const std::vector<Tensor>& codes, int fps);

// Batched graph rollout for training. ea_codes[t] is the [B, L*d] sound code
// of segment t (the last entry feeds alignment losses only, not the
// recurrence); noises[t-1] is the [B, noise_dim] draw behind codes[t].
// Returns ea_codes.size() code vars of shape [B, L*d].
std::vector<Var> rollout_codes(Graph& g, const TrajectoryModel& m, Var w0,
                               const std::vector<Var>& ea_codes,
                               const std::vector<Tensor>& noises, bool train);

}  // namespace sonovid
