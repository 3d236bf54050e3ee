// config.h — one flat, typed key-value record drives every stage.
// Serialization is canonical: save -> load -> save is byte-identical.
#pragma once

#include <cstdint>
#include <string>

namespace sonovid {

struct TrainConfig {
    // data
    int classes = 4;
    int n_clips = 240;
    int image_size = 64;
    int video_frames = 10;  // T
    int fps = 10;
    double audio_seconds = 1.0;
    int sample_rate = 16000;

    // mel
    int n_mels = 64;
    int mel_window = 1024;
    int mel_hop = 256;

    // embedding
    int embed_dim = 64;  // d_e
    int embed_batch = 16;
    int embed_steps = 600;
    double embed_lr = 1e-3;
    double temperature_init = 0.07;

    // generator
    int latent_dim = 128;  // d
    int style_layers = 10;  // L
    int coarse_end = 3;
    int mid_end = 6;
    int base_channels = 32;
    int pretrain_steps = 700;
    int pretrain_batch = 6;
    double pretrain_lr = 2e-3;
    double r1_gamma = 1.0;

    // inversion
    int inversion_steps = 800;
    int inversion_batch = 2;
    int inversion_segments = 4;  // timesteps sampled per clip per step
    double inversion_lr = 1e-4;
    double lambda_bind = 0.1;  // weight on the latent spread regularizer

    // video
    int video_steps = 450;
    int video_batch = 2;
    double video_lr = 1e-4;
    double video_disc_lr = 1e-4;
    double lambda_enc = 1.0;
    int gru_cells = 2;
    int gru_hidden = 128;
    int noise_dim = 128;
    int disc_frames = 2;  // frames per clip shown to the image discriminator
    int cotrain_encoder = 0;  // also update the sound encoder during video training

    // eval
    int eval_clips = 40;
    int eval_feature_steps = 300;

    // run
    int seed = 7;
    std::string profile = "desk";
};

// Fills profile-dependent defaults ("desk" or "paper").
TrainConfig default_config(const std::string& profile);

// Canonical text form (sections and keys in fixed order).
std::string serialize_config(const TrainConfig& c);

// Parses the canonical format; every key must be present exactly once.
// Unknown or missing keys raise errors naming the key.
TrainConfig parse_config(const std::string& text);

TrainConfig load_config(const std::string& path);
void save_config(const std::string& path, const TrainConfig& c);

// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const TrainConfig& c);

// hash of just the shape-determining and input-format fields; two configs with
// equal architecture hashes produce interchangeable checkpoints
std::uint64_t architecture_hash(const TrainConfig& c);

// Derived sanity checks (group bounds, positive dims); throws on violation.
void validate_config(const TrainConfig& c);

}  // namespace sonovid
