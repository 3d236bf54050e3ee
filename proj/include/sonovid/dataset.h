// dataset.h — synthetic paired audio-video data, the JSON-lines manifest
// format, and ingestion into training-ready triples.
//
// Each synthetic class couples a visual oscillation frequency to the AM rate
// of its audio track; that shared rate is the learnable cross-modal signal.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonovid/audio.h"
#include "sonovid/config.h"
#include "sonovid/image_io.h"

namespace sonovid {

struct PairedClipRecord {
    std::string video_path;  // directory of frame_%04d.png, relative to manifest
    std::string audio_path;  // WAV, relative to manifest
    std::string class_label;
    double duration = 0.0;  // seconds
    int fps = 0;
};

struct ClassSpec {
    std::string name;
    double osc_hz = 0.0;      // visual oscillation = audio AM rate
    double carrier_hz = 0.0;  // audio carrier
    float bg[3] = {0, 0, 0};  // background base color, [0,1]
    float fg[3] = {0, 0, 0};  // moving blob color, [0,1]
};

std::vector<ClassSpec> default_classes(int count);

// Writes out_dir/clips/... plus out_dir/manifest.jsonl; class assignment is
// round-robin, everything deterministic in (cfg, seed).
void generate_synthetic_dataset(const std::string& out_dir, const TrainConfig& cfg,
                                std::uint64_t seed);

std::vector<PairedClipRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<PairedClipRecord>& records);

struct LoadedClip {
    VideoClip video;
    Waveform audio;
    MelSpectrogram mel;  // full-clip spectrogram
    int label = -1;
    std::string label_name;
};

// Loads every record, splitting long sources into non-overlapping clips of
// cfg.video_frames frames. Records whose audio/video durations disagree by
// more than one frame are skipped with a warning on stderr. Labels are indexed
// by sorted order of the distinct labels present.
std::vector<LoadedClip> ingest(const std::string& manifest_path, const TrainConfig& cfg);

std::vector<std::string> distinct_labels(const std::vector<PairedClipRecord>& records);

}  // namespace sonovid
