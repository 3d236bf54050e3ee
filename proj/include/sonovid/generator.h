// generator.h — style-based image synthesis over a layered latent space.
//
// A latent code is an [L, d] matrix: one d-dimensional style row per synthesis
// layer. Rows are grouped into coarse / mid / fine bands so callers can edit or
// mix only part of the code.
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sonovid/config.h"
#include "sonovid/image_io.h"
#include "sonovid/nn.h"
#include "sonovid/rng.h"
#include "sonovid/tensor.h"

namespace sonovid {

enum class StyleGroup { coarse, mid, fine };

struct GroupBounds {
    int coarse_end = 0;  // rows [0, coarse_end) are coarse
    int mid_end = 0;     // rows [coarse_end, mid_end) are mid
    int layers = 0;      // rows [mid_end, layers) are fine
};

GroupBounds group_bounds(const TrainConfig& cfg);
std::pair<int, int> group_rows(const GroupBounds& b, StyleGroup gset);

// Parses a comma-separated list like "coarse,fine"; rejects empty input and
// unknown names.
std::set<StyleGroup> parse_style_groups(const std::string& csv);

// Rows of chosen groups come from w2, everything else from w1.
Tensor style_mix(const Tensor& w1, const Tensor& w2, const std::set<StyleGroup>& groups,
                 const GroupBounds& bounds);

// [B, L*d] batch from per-sample [L, d] codes.
Tensor flatten_codes(const std::vector<const Tensor*>& codes);

struct StyleGenerator {
    int latent_dim = 0;
    int layers = 0;
    int image_size = 0;
    ParamSet params;

    Linear map1, map2;         // z -> w mapping
    Param* input_const = nullptr;  // [ch0, 4, 4]
    std::vector<ModulatedConv2d> styled;  // layers-1 convs, style row i feeds styled[i]
    ModulatedConv2d to_rgb;               // 1x1, fed by the last style row
    std::vector<Param*> noise_strength;   // one scalar per styled conv
    std::vector<Param*> noise_buf;        // frozen per-layer noise [H, W]

    std::vector<int> styled_res;  // output resolution of each styled conv
    std::vector<int> styled_ch;   // output channels of each styled conv
    std::vector<bool> styled_up;  // whether the conv is preceded by 2x upsampling

    Var mapping(Graph& g, Var z, bool train) const;  // [B,d] -> [B,d]

    // codes [B, L*d] -> frames [B,3,H,W] in (-1,1). When noise is null the
    // frozen buffers are used, making this a pure function of (params, codes).
    Var synthesize_batch(Graph& g, Var codes, bool train,
                         const std::vector<Tensor>* noise = nullptr) const;

    Image synthesize(const Tensor& code) const;  // code [L, d]
    Tensor sample_latent(std::uint64_t seed) const;  // [L, d], rows identical
    std::vector<Tensor> make_noise(RandomSource& rng) const;
};

// Standard-normal mapping input used by sample_latent.
Tensor sample_latent_z(std::uint64_t seed, int d);

StyleGenerator make_generator(const TrainConfig& cfg, RandomSource& rng);

}  // namespace sonovid
