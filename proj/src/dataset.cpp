#include "sonovid/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sonovid/rng.h"

namespace fs = std::filesystem;

namespace sonovid {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ull * (salt + 1));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

float smooth_edge(float dist, float radius) {
    // 1 inside, 0 outside, ~3px soft rim
    const float t = (radius + 1.5f - dist) / 3.0f;
    return std::clamp(t, 0.0f, 1.0f);
}

std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.png", t);
    return buf;
}

}  // namespace

std::vector<ClassSpec> default_classes(int count) {
    if (count < 2) throw std::invalid_argument("default_classes: want >= 2 classes");
    static const char* kNames[4] = {"hum", "chime", "whistle", "drone"};
    static const float kBg[4][3] = {{0.10f, 0.15f, 0.35f},
                                    {0.30f, 0.10f, 0.12f},
                                    {0.08f, 0.28f, 0.16f},
                                    {0.25f, 0.22f, 0.08f}};
    static const float kFg[4][3] = {{0.95f, 0.85f, 0.30f},
                                    {0.35f, 0.80f, 0.95f},
                                    {0.95f, 0.45f, 0.75f},
                                    {0.55f, 0.95f, 0.50f}};
    std::vector<ClassSpec> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
        ClassSpec s;
        if (c < 4) {
            s.name = kNames[c];
        } else {
            s.name = "class" + std::to_string(c);
        }
        s.osc_hz = 1.0 + 0.75 * c;
        s.carrier_hz = 300.0 * std::pow(2.1, c % 6);
        for (int k = 0; k < 3; ++k) {
            s.bg[k] = kBg[c % 4][k];
            s.fg[k] = kFg[c % 4][k];
        }
        // recolor repeats slightly so classes past 4 stay distinguishable
        if (c >= 4) {
            s.bg[c % 3] = std::min(1.0f, s.bg[c % 3] + 0.3f);
            s.fg[(c + 1) % 3] = std::max(0.0f, s.fg[(c + 1) % 3] - 0.3f);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void generate_synthetic_dataset(const std::string& out_dir, const TrainConfig& cfg,
                                std::uint64_t seed) {
    const std::vector<ClassSpec> classes = default_classes(cfg.classes);
    const int T = cfg.video_frames;
    const int H = cfg.image_size, W = cfg.image_size;
    const double duration = static_cast<double>(T) / cfg.fps;
    const int n_samples = static_cast<int>(std::lround(duration * cfg.sample_rate));

    fs::create_directories(fs::path(out_dir) / "clips");
    std::vector<PairedClipRecord> records;
    records.reserve(static_cast<std::size_t>(cfg.n_clips));

    for (int i = 0; i < cfg.n_clips; ++i) {
        const int cls = i % cfg.classes;
        const ClassSpec& spec = classes[static_cast<std::size_t>(cls)];
        RandomSource rng(mix_seed(seed, static_cast<std::uint64_t>(i)));

        const double phase = rng.uniform(0.0, 2.0 * kPi);
        const double cx = W * 0.5 + rng.uniform(-8.0, 8.0);
        const double cy = H * 0.5 + rng.uniform(-8.0, 8.0);
        const double amp = rng.uniform(6.0, 12.0) * (W / 64.0);
        const double drift = rng.uniform(-3.0, 3.0) * (H / 64.0);  // px/s vertical
        const double radius = rng.uniform(7.0, 10.0) * (W / 64.0);
        const float brightness = static_cast<float>(rng.uniform(0.9, 1.1));

        char clip_name[32];
        std::snprintf(clip_name, sizeof(clip_name), "clip_%04d", i);
        const fs::path clip_dir = fs::path(out_dir) / "clips" / clip_name;
        fs::create_directories(clip_dir);

        for (int t = 0; t < T; ++t) {
            const double time = static_cast<double>(t) / cfg.fps;
            const double bx = cx + amp * std::sin(2.0 * kPi * spec.osc_hz * time + phase);
            const double by = cy + drift * time;
            Image img(3, H, W);
            for (int y = 0; y < H; ++y) {
                const float grad = 0.65f + 0.35f * static_cast<float>(y) / H;
                for (int x = 0; x < W; ++x) {
                    const float dx = static_cast<float>(x) - static_cast<float>(bx);
                    const float dy = static_cast<float>(y) - static_cast<float>(by);
                    const float a = smooth_edge(std::sqrt(dx * dx + dy * dy), static_cast<float>(radius));
                    for (int c = 0; c < 3; ++c) {
                        const float bg = spec.bg[c] * grad * brightness;
                        const float v = bg + a * (spec.fg[c] * brightness - bg);
                        img.at(c, y, x) = std::clamp(v, 0.0f, 1.0f) * 2.0f - 1.0f;
                    }
                }
            }
            write_png((clip_dir / frame_name(t)).string(), img);
        }

        Waveform w;
        w.sample_rate = cfg.sample_rate;
        w.samples.resize(static_cast<std::size_t>(n_samples));
        for (int s = 0; s < n_samples; ++s) {
            const double time = static_cast<double>(s) / cfg.sample_rate;
            const double env = 0.55 + 0.45 * std::sin(2.0 * kPi * spec.osc_hz * time + phase);
            w.samples[static_cast<std::size_t>(s)] =
                static_cast<float>(0.5 * env * std::sin(2.0 * kPi * spec.carrier_hz * time));
        }
        const std::string wav_rel = std::string("clips/") + clip_name + ".wav";
        write_wav((fs::path(out_dir) / wav_rel).string(), w);

        PairedClipRecord rec;
        rec.video_path = std::string("clips/") + clip_name;
        rec.audio_path = wav_rel;
        rec.class_label = spec.name;
        rec.duration = duration;
        rec.fps = cfg.fps;
        records.push_back(std::move(rec));
    }
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
}

void write_manifest(const std::string& path, const std::vector<PairedClipRecord>& records) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& r : records) {
        nlohmann::json j;
        j["video_path"] = r.video_path;
        j["audio_path"] = r.audio_path;
        j["class_label"] = r.class_label;
        j["duration"] = r.duration;
        j["fps"] = r.fps;
        os << j.dump() << "\n";
    }
}

std::vector<PairedClipRecord> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<PairedClipRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        PairedClipRecord r;
        r.video_path = j.at("video_path").get<std::string>();
        r.audio_path = j.at("audio_path").get<std::string>();
        r.class_label = j.at("class_label").get<std::string>();
        r.duration = j.at("duration").get<double>();
        r.fps = j.at("fps").get<int>();
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::string> distinct_labels(const std::vector<PairedClipRecord>& records) {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.class_label);
    return {s.begin(), s.end()};
}

std::vector<LoadedClip> ingest(const std::string& manifest_path, const TrainConfig& cfg) {
    const std::vector<PairedClipRecord> records = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    const std::vector<std::string> labels = distinct_labels(records);
    auto label_index = [&](const std::string& name) {
        const auto it = std::lower_bound(labels.begin(), labels.end(), name);
        return static_cast<int>(it - labels.begin());
    };

    const int T = cfg.video_frames;
    const double clip_seconds = static_cast<double>(T) / cfg.fps;
    std::vector<LoadedClip> out;

    for (const auto& rec : records) {
        std::vector<std::string> frame_files;
        for (const auto& e : fs::directory_iterator(base / rec.video_path))
            if (e.path().extension() == ".png") frame_files.push_back(e.path().string());
        std::sort(frame_files.begin(), frame_files.end());

        Waveform audio = read_wav((base / rec.audio_path).string());
        const double video_dur = static_cast<double>(frame_files.size()) / rec.fps;
        const double audio_dur = audio.duration();
        if (std::fabs(video_dur - audio_dur) > 1.0 / rec.fps) {
            std::cerr << "warning: skipping " << rec.video_path << ": video " << video_dur
                      << "s vs audio " << audio_dur << "s (more than one frame apart)\n";
            continue;
        }

        const int samples_per_clip = static_cast<int>(std::lround(clip_seconds * audio.sample_rate));
        const int n_sub = std::min(static_cast<int>(frame_files.size()) / T,
                                   static_cast<int>(audio.samples.size()) / samples_per_clip);
        for (int k = 0; k < n_sub; ++k) {
            LoadedClip clip;
            clip.video.fps = rec.fps;
            for (int t = 0; t < T; ++t)
                clip.video.frames.push_back(read_png(frame_files[static_cast<std::size_t>(k * T + t)]));
            clip.audio.sample_rate = audio.sample_rate;
            clip.audio.samples.assign(
                audio.samples.begin() + static_cast<std::ptrdiff_t>(k) * samples_per_clip,
                audio.samples.begin() + static_cast<std::ptrdiff_t>(k + 1) * samples_per_clip);
            clip.mel = compute_mel(clip.audio, cfg.n_mels, cfg.mel_window, cfg.mel_hop);
            clip.label = label_index(rec.class_label);
            clip.label_name = rec.class_label;
            out.push_back(std::move(clip));
        }
    }
    return out;
}

}  // namespace sonovid
