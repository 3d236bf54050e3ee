#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sonovid/dataset.h"
#include "sonovid/image_io.h"
#include "sonovid/rng.h"

using namespace sonovid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Least-squares sinusoid fit of the spectrogram energy envelope over a
// frequency grid; independent of the generator's own parameters.
double estimate_am_rate(const Waveform& w) {
    MelSpectrogram e = mel_filter_energies(w, 32, 1024, 256);
    std::vector<double> env(static_cast<std::size_t>(e.n_frames));
    for (int f = 0; f < e.n_frames; ++f) {
        double s = 0;
        for (int j = 0; j < e.n_mels; ++j) s += e.at(j, f);
        env[static_cast<std::size_t>(f)] = s;
    }
    const double frame_rate = static_cast<double>(w.sample_rate) / e.hop;
    double best_f = 0, best_res = 1e300;
    for (double freq = 0.3; freq <= 6.0; freq += 0.005) {
        // regress env on [1, sin, cos] via 3x3 normal equations
        double a[3][3] = {{0}}, b[3] = {0};
        for (int t = 0; t < e.n_frames; ++t) {
            const double time = t / frame_rate;
            const double bas[3] = {1.0, std::sin(2 * M_PI * freq * time),
                                   std::cos(2 * M_PI * freq * time)};
            for (int i = 0; i < 3; ++i) {
                b[i] += bas[i] * env[static_cast<std::size_t>(t)];
                for (int j = 0; j < 3; ++j) a[i][j] += bas[i] * bas[j];
            }
        }
        // solve by Gaussian elimination
        double m[3][4];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m[i][j] = a[i][j];
            m[i][3] = b[i];
        }
        for (int col = 0; col < 3; ++col) {
            int piv = col;
            for (int r = col + 1; r < 3; ++r)
                if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
            for (int j = 0; j < 4; ++j) std::swap(m[col][j], m[piv][j]);
            for (int r = 0; r < 3; ++r) {
                if (r == col || m[col][col] == 0) continue;
                const double k = m[r][col] / m[col][col];
                for (int j = 0; j < 4; ++j) m[r][j] -= k * m[col][j];
            }
        }
        double coef[3];
        for (int i = 0; i < 3; ++i) coef[i] = m[i][i] != 0 ? m[i][3] / m[i][i] : 0;
        double res = 0;
        for (int t = 0; t < e.n_frames; ++t) {
            const double time = t / frame_rate;
            const double pred = coef[0] + coef[1] * std::sin(2 * M_PI * freq * time) +
                                coef[2] * std::cos(2 * M_PI * freq * time);
            const double d = env[static_cast<std::size_t>(t)] - pred;
            res += d * d;
        }
        if (res < best_res) {
            best_res = res;
            best_f = freq;
        }
    }
    return best_f;
}

}  // namespace

TEST_CASE("png quantization endpoints and round trip") {
    CHECK(pixel_to_byte(-1.0f) == 0);
    CHECK(pixel_to_byte(1.0f) == 255);
    CHECK(pixel_to_byte(-2.0f) == 0);
    CHECK(pixel_to_byte(2.0f) == 255);
    CHECK(byte_to_pixel(255) == doctest::Approx(1.0));
    CHECK(byte_to_pixel(0) == doctest::Approx(-1.0));

    RandomSource rng(50);
    Image img(3, 9, 7);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform(-1.2, 1.2));
    const std::string path = "/tmp/sonovid_test_img.png";
    write_png(path, img);
    Image r = read_png(path);
    REQUIRE(r.height == 9);
    REQUIRE(r.width == 7);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(r.pixels[i] == byte_to_pixel(pixel_to_byte(img.pixels[i])));
    // re-encoding the quantized image is lossless
    write_png(path, r);
    Image r2 = read_png(path);
    CHECK(r2.pixels == r.pixels);
    fs::remove(path);
}

TEST_CASE("same seed produces byte-identical dataset artifacts") {
    TrainConfig cfg = default_config("desk");
    cfg.n_clips = 4;
    cfg.video_frames = 3;
    cfg.fps = 10;
    cfg.image_size = 16;
    const std::string d1 = "/tmp/sonovid_ds_a", d2 = "/tmp/sonovid_ds_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    generate_synthetic_dataset(d1, cfg, 99);
    generate_synthetic_dataset(d2, cfg, 99);
    CHECK(slurp(d1 + "/manifest.jsonl") == slurp(d2 + "/manifest.jsonl"));
    CHECK(slurp(d1 + "/clips/clip_0002/frame_0001.png") ==
          slurp(d2 + "/clips/clip_0002/frame_0001.png"));
    CHECK(slurp(d1 + "/clips/clip_0003.wav") == slurp(d2 + "/clips/clip_0003.wav"));

    const std::string d3 = "/tmp/sonovid_ds_c";
    fs::remove_all(d3);
    generate_synthetic_dataset(d3, cfg, 100);
    CHECK(slurp(d1 + "/clips/clip_0000.wav") != slurp(d3 + "/clips/clip_0000.wav"));
    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(d3);
}

TEST_CASE("round-robin class assignment is balanced within one") {
    TrainConfig cfg = default_config("desk");
    cfg.n_clips = 10;
    cfg.classes = 4;
    cfg.video_frames = 2;
    cfg.fps = 10;
    cfg.image_size = 16;
    const std::string dir = "/tmp/sonovid_ds_bal";
    fs::remove_all(dir);
    generate_synthetic_dataset(dir, cfg, 7);
    auto records = read_manifest(dir + "/manifest.jsonl");
    REQUIRE(records.size() == 10);
    std::map<std::string, int> counts;
    for (const auto& r : records) counts[r.class_label]++;
    REQUIRE(counts.size() == 4);
    int lo = 1 << 30, hi = 0;
    for (const auto& [_, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
    fs::remove_all(dir);
}

TEST_CASE("audio AM rate matches the class's visual oscillation within 5%") {
    TrainConfig cfg = default_config("desk");
    cfg.n_clips = 4;
    cfg.classes = 4;
    cfg.video_frames = 20;  // 2 s clips give the fit two AM cycles
    cfg.fps = 10;
    cfg.image_size = 16;
    const std::string dir = "/tmp/sonovid_ds_am";
    fs::remove_all(dir);
    generate_synthetic_dataset(dir, cfg, 11);
    auto records = read_manifest(dir + "/manifest.jsonl");
    auto classes = default_classes(cfg.classes);
    for (const auto& rec : records) {
        const Waveform w = read_wav(dir + "/" + rec.audio_path);
        double want = -1;
        for (const auto& c : classes)
            if (c.name == rec.class_label) want = c.osc_hz;
        REQUIRE(want > 0);
        const double got = estimate_am_rate(w);
        CHECK(std::fabs(got - want) / want < 0.05);
    }
    fs::remove_all(dir);
}

TEST_CASE("ingest returns one triple per generated clip with aligned labels") {
    TrainConfig cfg = default_config("desk");
    cfg.n_clips = 6;
    cfg.video_frames = 4;
    cfg.fps = 10;
    cfg.image_size = 16;
    cfg.mel_window = 1024;
    cfg.mel_hop = 256;
    const std::string dir = "/tmp/sonovid_ds_ing";
    fs::remove_all(dir);
    generate_synthetic_dataset(dir, cfg, 21);
    auto clips = ingest(dir + "/manifest.jsonl", cfg);
    REQUIRE(clips.size() == 6);
    auto records = read_manifest(dir + "/manifest.jsonl");
    auto labels = distinct_labels(records);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        CHECK(static_cast<int>(clips[i].video.frames.size()) == 4);
        CHECK(clips[i].video.frames[0].height == 16);
        CHECK(clips[i].mel.n_mels == cfg.n_mels);
        CHECK(clips[i].mel.n_frames >= cfg.video_frames);
        CHECK(clips[i].label_name == records[i].class_label);
        CHECK(labels[static_cast<std::size_t>(clips[i].label)] == clips[i].label_name);
        for (const auto& f : clips[i].video.frames)
            for (float p : f.pixels) {
                CHECK(p >= -1.0f);
                CHECK(p <= 1.0f);
            }
    }
    fs::remove_all(dir);
}

TEST_CASE("long sources split into non-overlapping fixed-length clips") {
    TrainConfig cfg = default_config("desk");
    cfg.video_frames = 4;
    cfg.fps = 10;
    cfg.image_size = 16;
    const std::string dir = "/tmp/sonovid_ds_long";
    fs::remove_all(dir);
    fs::create_directories(dir + "/clips/long_clip");

    const int total_frames = 12;  // 3 sub-clips of 4 frames
    for (int t = 0; t < total_frames; ++t) {
        Image img(3, 16, 16);
        for (auto& p : img.pixels) p = static_cast<float>(t) / total_frames;
        char name[64];
        std::snprintf(name, sizeof(name), "%s/clips/long_clip/frame_%04d.png", dir.c_str(), t);
        write_png(name, img);
    }
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(static_cast<std::size_t>(16000 * 1.2), 0.0f);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<float>(0.4 * std::sin(2 * M_PI * 500.0 * i / 16000.0));
    write_wav(dir + "/clips/long_clip.wav", w);

    std::vector<PairedClipRecord> recs(1);
    recs[0].video_path = "clips/long_clip";
    recs[0].audio_path = "clips/long_clip.wav";
    recs[0].class_label = "hum";
    recs[0].duration = 1.2;
    recs[0].fps = 10;
    write_manifest(dir + "/manifest.jsonl", recs);

    auto clips = ingest(dir + "/manifest.jsonl", cfg);
    REQUIRE(clips.size() == 3);
    // sub-clip k starts at frame 4k; our frames encode their index in every pixel
    for (int k = 0; k < 3; ++k) {
        const float want = byte_to_pixel(pixel_to_byte(static_cast<float>(4 * k) / total_frames));
        CHECK(clips[static_cast<std::size_t>(k)].video.frames[0].pixels[0] == doctest::Approx(want));
        CHECK(static_cast<int>(clips[static_cast<std::size_t>(k)].audio.samples.size()) == 6400);
    }
    fs::remove_all(dir);
}

TEST_CASE("records with misaligned durations are skipped") {
    TrainConfig cfg = default_config("desk");
    cfg.video_frames = 4;
    cfg.fps = 10;
    cfg.image_size = 16;
    const std::string dir = "/tmp/sonovid_ds_bad";
    fs::remove_all(dir);
    fs::create_directories(dir + "/clips/bad_clip");
    for (int t = 0; t < 4; ++t) {
        Image img(3, 16, 16);
        char name[64];
        std::snprintf(name, sizeof(name), "%s/clips/bad_clip/frame_%04d.png", dir.c_str(), t);
        write_png(name, img);
    }
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(16000 / 10, 0.0f);  // 0.1 s audio vs 0.4 s video
    write_wav(dir + "/clips/bad_clip.wav", w);
    std::vector<PairedClipRecord> recs(1);
    recs[0].video_path = "clips/bad_clip";
    recs[0].audio_path = "clips/bad_clip.wav";
    recs[0].class_label = "hum";
    recs[0].duration = 0.4;
    recs[0].fps = 10;
    write_manifest(dir + "/manifest.jsonl", recs);
    auto clips = ingest(dir + "/manifest.jsonl", cfg);
    CHECK(clips.empty());
    fs::remove_all(dir);
}

TEST_CASE("default classes expose distinct oscillation rates") {
    auto cs = default_classes(4);
    REQUIRE(cs.size() == 4);
    for (std::size_t i = 0; i < cs.size(); ++i)
        for (std::size_t j = i + 1; j < cs.size(); ++j) {
            CHECK(cs[i].name != cs[j].name);
            CHECK(std::fabs(cs[i].osc_hz - cs[j].osc_hz) > 0.5);
        }
}
