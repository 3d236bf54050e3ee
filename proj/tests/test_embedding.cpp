#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "sonovid/dataset.h"
#include "sonovid/embedding.h"

using namespace sonovid;

namespace {

std::vector<double> random_unit(RandomSource& rng, int d) {
    std::vector<double> v(static_cast<std::size_t>(d));
    double n = 0;
    for (auto& x : v) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.classes = 2;
    cfg.n_clips = 24;
    cfg.image_size = 16;
    cfg.video_frames = 5;
    cfg.fps = 10;
    cfg.audio_seconds = 0.5;
    cfg.sample_rate = 8000;
    cfg.n_mels = 16;
    cfg.mel_window = 256;
    cfg.mel_hop = 128;
    cfg.embed_dim = 32;
    cfg.embed_batch = 8;
    cfg.embed_steps = 250;
    cfg.embed_lr = 2e-3;
    return cfg;
}

Image random_image(RandomSource& rng, int size) {
    Image im(3, size, size);
    for (auto& p : im.pixels) p = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    return im;
}

MelSpectrogram random_mel(RandomSource& rng, int n_mels, int n_frames) {
    MelSpectrogram m;
    m.n_mels = n_mels;
    m.n_frames = n_frames;
    m.hop = 128;
    m.sample_rate = 8000;
    m.values.resize(static_cast<std::size_t>(n_mels) * n_frames);
    for (auto& v : m.values) v = static_cast<float>(rng.uniform() * 8.0 - 10.0);
    return m;
}

}  // namespace

TEST_CASE("cosine distance endpoint values") {
    std::vector<double> a = {1, 0, 0}, b = {0, 1, 0};
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0));
    CHECK(cosine_distance(a, b) == doctest::Approx(1.0));
    std::vector<double> na = {-1, 0, 0};
    CHECK(cosine_distance(a, na) == doctest::Approx(2.0));
    // scale invariance and symmetry
    std::vector<double> a5 = {5, 0, 0};
    CHECK(cosine_distance(a5, b) == doctest::Approx(1.0));
    RandomSource rng(11);
    for (int i = 0; i < 20; ++i) {
        auto u = random_unit(rng, 8);
        auto v = random_unit(rng, 8);
        const double d = cosine_distance(u, v);
        CHECK(d >= 0.0);
        CHECK(d <= 2.0);
        CHECK(cosine_distance(v, u) == doctest::Approx(d));
    }
    CHECK_THROWS(cosine_distance(std::vector<double>{0, 0}, b = {1, 0}));
}

TEST_CASE("cosine distance gradient matches central differences") {
    RandomSource rng(12);
    const double h = 1e-6;
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_unit(rng, 16);
        auto b = random_unit(rng, 16);
        std::vector<double> da, db;
        cosine_distance_grad(a, b, &da, &db);
        for (std::size_t i = 0; i < a.size(); ++i) {
            auto ap = a, am = a;
            ap[i] += h;
            am[i] -= h;
            const double num = (cosine_distance(ap, b) - cosine_distance(am, b)) / (2 * h);
            worst = std::max(worst, std::abs(num - da[i]) / std::max(1.0, std::abs(num)));
            auto bp = b, bm = b;
            bp[i] += h;
            bm[i] -= h;
            const double numb = (cosine_distance(a, bp) - cosine_distance(a, bm)) / (2 * h);
            worst = std::max(worst, std::abs(numb - db[i]) / std::max(1.0, std::abs(numb)));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("mel input mapping and crop packing") {
    CHECK(mel_to_input(-6.0f) == doctest::Approx(0.0f));
    CHECK(mel_to_input(2.0f) == doctest::Approx(2.0f));
    RandomSource rng(13);
    auto m = random_mel(rng, 4, 10);
    Tensor t = pack_mels({&m}, {3}, 5);
    CHECK(t.shape == std::vector<int>{1, 1, 4, 5});
    CHECK(t[0] == doctest::Approx(mel_to_input(m.at(0, 3))));
    CHECK(t[4 * 5 - 1] == doctest::Approx(mel_to_input(m.at(3, 7))));
    CHECK_THROWS(pack_mels({&m}, {8}, 5));
}

TEST_CASE("encoders emit unit-norm deterministic embeddings") {
    TrainConfig cfg = tiny_config();
    RandomSource rng(21);
    EmbeddingNets nets = make_embedding_nets(cfg, rng);
    RandomSource data_rng(22);
    Image im = random_image(data_rng, cfg.image_size);
    MelSpectrogram mel = random_mel(data_rng, cfg.n_mels, 30);

    Tensor e1 = nets.embed_image(im);
    Tensor e2 = nets.embed_image(im);
    double n = 0;
    for (float v : e1.data) n += static_cast<double>(v) * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-5);
    CHECK(e1.data == e2.data);

    Tensor a1 = nets.embed_mel(mel);
    Tensor a2 = nets.embed_mel(mel);
    n = 0;
    for (float v : a1.data) n += static_cast<double>(v) * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-5);
    CHECK(a1.data == a2.data);

    Tensor t0 = nets.embed_label(0);
    Tensor t0b = nets.embed_label(0);
    n = 0;
    for (float v : t0.data) n += static_cast<double>(v) * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-5);
    CHECK(t0.data == t0b.data);

    // wrong shapes are rejected
    Image wrong(3, 8, 8);
    CHECK_THROWS(nets.embed_image(wrong));
    CHECK_THROWS(nets.embed_label(cfg.classes));
    MelSpectrogram bad = random_mel(data_rng, cfg.n_mels + 1, 30);
    CHECK_THROWS(nets.embed_mel(bad));
}

TEST_CASE("contrastive loss starts near ln(B) and is reproducible") {
    TrainConfig cfg = tiny_config();
    cfg.classes = 8;
    cfg.embed_dim = 64;
    cfg.temperature_init = 1.0;  // keep logits small so the start is near-uniform
    RandomSource rng(31);
    EmbeddingNets nets = make_embedding_nets(cfg, rng);
    const int B = 8;
    RandomSource data_rng(32);
    std::vector<Image> ims;
    std::vector<MelSpectrogram> mels;
    std::vector<const Image*> imp;
    std::vector<const MelSpectrogram*> mp;
    std::vector<int> offs, labels;
    for (int i = 0; i < B; ++i) {
        ims.push_back(random_image(data_rng, cfg.image_size));
        mels.push_back(random_mel(data_rng, cfg.n_mels, 20));
    }
    for (int i = 0; i < B; ++i) {
        imp.push_back(&ims[static_cast<std::size_t>(i)]);
        mp.push_back(&mels[static_cast<std::size_t>(i)]);
        offs.push_back(0);
        labels.push_back(i);
    }
    ContrastiveParts p1, p2;
    {
        Graph g;
        contrastive_loss(g, nets, g.leaf(pack_images(imp), false), g.leaf(pack_mels(mp, offs, 20), false),
                         labels, false, &p1);
    }
    {
        Graph g;
        contrastive_loss(g, nets, g.leaf(pack_images(imp), false), g.leaf(pack_mels(mp, offs, 20), false),
                         labels, false, &p2);
    }
    const double lnB = std::log(static_cast<double>(B));
    CHECK(p1.image_text == doctest::Approx(lnB).epsilon(0.2));
    CHECK(p1.image_audio == doctest::Approx(lnB).epsilon(0.2));
    CHECK(p1.total == p2.total);
}

TEST_CASE("single-class batches are skipped") {
    TrainConfig cfg = tiny_config();
    cfg.embed_steps = 3;
    cfg.embed_batch = 4;
    RandomSource rng(41);
    EmbeddingNets nets = make_embedding_nets(cfg, rng);
    std::vector<LoadedClip> clips;
    RandomSource data_rng(42);
    for (int i = 0; i < 8; ++i) {
        LoadedClip c;
        c.video.fps = 10;
        c.video.frames.push_back(random_image(data_rng, cfg.image_size));
        c.mel = random_mel(data_rng, cfg.n_mels, 20);
        c.label = 0;
        c.label_name = "only";
        clips.push_back(std::move(c));
    }
    RandomSource train_rng(43);
    auto stats = train_contrastive(nets, clips, cfg, train_rng);
    CHECK(stats.steps_run == 0);
    CHECK(stats.skipped_batches == 3);
}

TEST_CASE("two-class training run separates the modalities") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "sonovid_embed_test").string();
    fs::remove_all(dir);
    TrainConfig cfg = tiny_config();
    cfg.n_clips = 30;
    generate_synthetic_dataset(dir, cfg, 5);
    auto clips = ingest(dir + "/manifest.jsonl", cfg);
    REQUIRE(static_cast<int>(clips.size()) == cfg.n_clips);

    RandomSource rng(51);
    EmbeddingNets nets = make_embedding_nets(cfg, rng);
    RandomSource train_rng(52);
    auto stats = train_contrastive(nets, clips, cfg, train_rng);
    CHECK(stats.steps_run + stats.skipped_batches == cfg.embed_steps);
    CHECK(stats.steps_run > cfg.embed_steps * 9 / 10);
    CHECK(stats.final_loss < stats.first_loss);
    CHECK(stats.heldout_retrieval > 0.9);

    // held-out class structure: same-class image pairs closer than cross-class
    auto held = split_train_heldout(static_cast<int>(clips.size())).second;
    std::vector<Tensor> embs;
    std::vector<int> labels;
    for (int i : held) {
        embs.push_back(nets.embed_image(clips[static_cast<std::size_t>(i)].video.frames[0]));
        labels.push_back(clips[static_cast<std::size_t>(i)].label);
    }
    int good = 0, pairs = 0;
    for (std::size_t i = 0; i < embs.size(); ++i)
        for (std::size_t j = i + 1; j < embs.size(); ++j)
            for (std::size_t k = 0; k < embs.size(); ++k) {
                if (labels[i] != labels[j]) continue;
                if (labels[k] == labels[i]) continue;
                ++pairs;
                if (cosine_distance(embs[i], embs[j]) < cosine_distance(embs[i], embs[k])) ++good;
            }
    REQUIRE(pairs > 0);
    CHECK(static_cast<double>(good) / pairs >= 0.9);

    // matched triplets beat mismatched ones on average
    double matched = 0, mismatched = 0;
    int n_m = 0, n_x = 0;
    for (int i : held) {
        Tensor ea = nets.embed_mel(clips[static_cast<std::size_t>(i)].mel);
        for (int j : held) {
            Tensor ev = nets.embed_image(clips[static_cast<std::size_t>(j)].video.frames[0]);
            double sim = 0;
            for (int k = 0; k < nets.dim; ++k)
                sim += static_cast<double>(ea[static_cast<std::size_t>(k)]) * ev[static_cast<std::size_t>(k)];
            if (clips[static_cast<std::size_t>(i)].label == clips[static_cast<std::size_t>(j)].label) {
                matched += sim;
                ++n_m;
            } else {
                mismatched += sim;
                ++n_x;
            }
        }
    }
    CHECK(matched / n_m > mismatched / n_x);

    // label embeddings stay distinct
    const double table_cos =
        1.0 - cosine_distance(nets.embed_label(0), nets.embed_label(1));
    CHECK(table_cos < 0.9);
    fs::remove_all(dir);
}
