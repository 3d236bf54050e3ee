// sonovid CLI: dataset synthesis, the four training stages, audio-driven
// video generation, single-image editing, and set-level evaluation.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonovid/adversarial.h"
#include "sonovid/audio.h"
#include "sonovid/checkpoint.h"
#include "sonovid/config.h"
#include "sonovid/dataset.h"
#include "sonovid/embedding.h"
#include "sonovid/generator.h"
#include "sonovid/image_io.h"
#include "sonovid/inversion.h"
#include "sonovid/metrics.h"
#include "sonovid/trajectory.h"
#include "sonovid/video_train.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sonovid;

namespace {

// stage salts for independent random streams under one run seed
enum : std::uint64_t {
    kSaltEmbed = 1,
    kSaltPretrain = 2,
    kSaltInversion = 3,
    kSaltVideo = 4,
    kSaltFeatures = 5,
};

struct GlobalOpts {
    std::string config_path;
    std::string profile = "desk";
    std::int64_t seed = -1;
};

TrainConfig resolve_config(const GlobalOpts& g) {
    TrainConfig cfg =
        g.config_path.empty() ? default_config(g.profile) : load_config(g.config_path);
    if (g.seed >= 0) cfg.seed = static_cast<int>(g.seed);
    validate_config(cfg);
    return cfg;
}

RandomSource stage_rng(const TrainConfig& cfg, std::uint64_t salt) {
    RandomSource root(static_cast<std::uint64_t>(cfg.seed));
    return root.fork(salt);
}

std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::vector<LoadedClip> load_dataset(const std::string& manifest, const TrainConfig& cfg) {
    if (!fs::exists(manifest))
        throw std::runtime_error(manifest + " not found; run `sonovid make-data` first");
    std::vector<LoadedClip> clips = ingest(manifest, cfg);
    if (clips.empty()) throw std::runtime_error(manifest + " yielded no usable clips");
    return clips;
}

Checkpoint read_stage_ckpt(const std::string& path, const TrainConfig& cfg, const char* producer) {
    if (!fs::exists(path))
        throw std::runtime_error(path + " not found; run `sonovid " + producer + "` first");
    Checkpoint ck = load_checkpoint_file(path);
    require_config_match(ck, cfg);
    return ck;
}

void write_stage_ckpt(const std::string& path, const TrainConfig& cfg,
                      const std::vector<const ParamSet*>& sets) {
    Checkpoint ck;
    stamp_config(ck, cfg);
    for (const ParamSet* ps : sets) ck.add_params("", *ps);
    fs::create_directories(fs::path(path).parent_path());
    save_checkpoint(path, ck);
}

EmbeddingNets load_embedding(const std::string& run, const TrainConfig& cfg) {
    RandomSource rng = stage_rng(cfg, kSaltEmbed);
    EmbeddingNets nets = make_embedding_nets(cfg, rng);
    read_stage_ckpt(run + "/embedding.ckpt", cfg, "train-embedding").load_params("", nets.params);
    return nets;
}

StyleGenerator load_generator(const std::string& run, const TrainConfig& cfg) {
    RandomSource rng = stage_rng(cfg, kSaltPretrain);
    StyleGenerator gen = make_generator(cfg, rng);
    read_stage_ckpt(run + "/generator.ckpt", cfg, "pretrain-generator").load_params("", gen.params);
    return gen;
}

SoundEncoder load_encoder(const std::string& run, const TrainConfig& cfg, const char* ckpt_name,
                          const char* producer) {
    RandomSource rng = stage_rng(cfg, kSaltInversion);
    SoundEncoder enc = make_sound_encoder(cfg, rng);
    read_stage_ckpt(run + "/" + ckpt_name, cfg, producer).load_params("", enc.params);
    return enc;
}

TrajectoryModel load_trajectory(const std::string& run, const TrainConfig& cfg) {
    RandomSource rng = stage_rng(cfg, kSaltVideo);
    TrajectoryModel traj = make_trajectory(cfg, rng);
    read_stage_ckpt(run + "/video.ckpt", cfg, "train-video").load_params("", traj.params);
    return traj;
}

MelSpectrogram load_audio_mel(const std::string& path, const TrainConfig& cfg) {
    const Waveform wav = read_wav(path);
    return compute_mel(wav, cfg.n_mels, cfg.mel_window, cfg.mel_hop);
}

std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.png", t);
    return buf;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_make_data(const TrainConfig& cfg, const std::string& out) {
    generate_synthetic_dataset(out, cfg, static_cast<std::uint64_t>(cfg.seed));
    std::printf("wrote %d clips over %d classes to %s\n", cfg.n_clips, cfg.classes, out.c_str());
    return 0;
}

int cmd_train_embedding(const TrainConfig& cfg, const std::string& data, const std::string& run) {
    std::vector<LoadedClip> clips = load_dataset(data, cfg);
    RandomSource rng = stage_rng(cfg, kSaltEmbed);
    EmbeddingNets nets = make_embedding_nets(cfg, rng);
    EmbeddingTrainStats stats = train_contrastive(nets, clips, cfg, rng, true);
    write_stage_ckpt(run + "/embedding.ckpt", cfg, {&nets.params});
    std::printf("embedding: loss %.4f -> %.4f, heldout retrieval %.3f (%d steps)\n",
                stats.first_loss, stats.final_loss, stats.heldout_retrieval, stats.steps_run);
    return 0;
}

int cmd_pretrain_generator(const TrainConfig& cfg, const std::string& data,
                           const std::string& run) {
    std::vector<LoadedClip> clips = load_dataset(data, cfg);
    std::vector<const Image*> images;
    for (const auto& c : clips)
        for (const auto& f : c.video.frames) images.push_back(&f);
    RandomSource rng = stage_rng(cfg, kSaltPretrain);
    StyleGenerator gen = make_generator(cfg, rng);
    PatchImageDisc disc = make_image_disc(cfg, rng);
    fs::create_directories(run);
    std::ofstream csv(run + "/pretrain_loss.csv");
    PretrainStats stats = pretrain_generator(gen, disc, images, cfg, rng, &csv, true);
    write_stage_ckpt(run + "/generator.ckpt", cfg, {&gen.params});
    std::printf("pretrain: d %.4f -> %.4f, g %.4f -> %.4f (%d steps)\n", stats.first_d_loss,
                stats.final_d_loss, stats.first_g_loss, stats.final_g_loss, stats.steps);
    return 0;
}

int cmd_train_inversion(const TrainConfig& cfg, const std::string& data, const std::string& run) {
    std::vector<LoadedClip> clips = load_dataset(data, cfg);
    EmbeddingNets nets = load_embedding(run, cfg);
    StyleGenerator gen = load_generator(run, cfg);
    RandomSource rng = stage_rng(cfg, kSaltInversion);
    SoundEncoder enc = make_sound_encoder(cfg, rng);
    std::ofstream csv(run + "/inversion_loss.csv");
    InversionTrainStats stats = train_inversion(enc, gen, nets, clips, cfg, rng, &csv, true);
    write_stage_ckpt(run + "/inversion.ckpt", cfg, {&enc.params});
    std::printf("inversion: total %.4f -> %.4f (%d steps)\n", stats.first.total, stats.last.total,
                stats.steps);
    return 0;
}

int cmd_train_video(const TrainConfig& cfg, const std::string& data, const std::string& run) {
    std::vector<LoadedClip> clips = load_dataset(data, cfg);
    EmbeddingNets nets = load_embedding(run, cfg);
    StyleGenerator gen = load_generator(run, cfg);
    SoundEncoder enc = load_encoder(run, cfg, "inversion.ckpt", "train-inversion");
    RandomSource rng = stage_rng(cfg, kSaltVideo);
    TrajectoryModel traj = make_trajectory(cfg, rng);
    PatchVideoDisc dv = make_video_disc(cfg, rng);
    PatchImageDisc di = make_image_disc(cfg, rng);
    std::ofstream csv(run + "/video_loss.csv");
    VideoTrainStats stats = train_video_model(traj, enc, gen, nets, dv, di, clips, cfg, rng, &csv,
                                              true);
    // the encoder rides along so later stages read one file, updated or not
    write_stage_ckpt(run + "/video.ckpt", cfg, {&traj.params, &dv.params, &di.params, &enc.params});
    std::printf("video: total %.4f -> %.4f, l_enc %.4f -> %.4f (%d steps)\n", stats.first.total,
                stats.last.total, stats.first.l_enc, stats.last.l_enc, stats.steps);
    return 0;
}

int cmd_generate(const TrainConfig& cfg, const std::string& run, const std::string& audio,
                 int frames, const std::string& out) {
    StyleGenerator gen = load_generator(run, cfg);
    SoundEncoder enc = load_encoder(run, cfg, "video.ckpt", "train-video");
    TrajectoryModel traj = load_trajectory(run, cfg);

    const MelSpectrogram mel = load_audio_mel(audio, cfg);
    const int T = frames > 0 ? frames : cfg.video_frames;
    std::vector<MelSpectrogram> segs = segment_for_video(mel, T);
    const Tensor w0 = gen.sample_latent(static_cast<std::uint64_t>(cfg.seed));
    std::vector<Tensor> codes = rollout(traj, enc, w0, segs, static_cast<std::uint64_t>(cfg.seed));
    VideoClip clip = render_video(gen, codes, cfg.fps);

    fs::create_directories(out);
    for (int t = 0; t < T; ++t)
        write_png(out + "/" + frame_name(t), clip.frames[static_cast<std::size_t>(t)]);

    json bounds = json::array();
    for (int t = 0; t < T; ++t) {
        auto [lo, hi] = segment_bounds(mel.n_frames, T, t);
        bounds.push_back({lo, hi});
    }
    json manifest = {{"audio", audio},
                     {"seed", cfg.seed},
                     {"frames", T},
                     {"fps", cfg.fps},
                     {"config_hash", hash_hex(config_hash(cfg))},
                     {"config", serialize_config(cfg)},
                     {"segment_bounds", bounds}};
    std::ofstream(out + "/manifest.json") << manifest.dump(2) << "\n";
    std::printf("wrote %d frames to %s\n", T, out.c_str());
    return 0;
}

int cmd_edit_image(const TrainConfig& cfg, const std::string& run, const std::string& audio,
                   const std::string& out) {
    StyleGenerator gen = load_generator(run, cfg);
    SoundEncoder enc = load_encoder(run, cfg, "inversion.ckpt", "train-inversion");
    const MelSpectrogram mel = load_audio_mel(audio, cfg);
    const Tensor w = gen.sample_latent(static_cast<std::uint64_t>(cfg.seed));
    const Image img = edit_image(gen, enc, w, mel);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_png(out, img);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

// Renders cfg.eval_clips rollouts, one per real clip round-robin, into a
// dataset-format directory so `evaluate` can ingest both sides identically.
void build_fake_set(const TrainConfig& cfg, const std::string& run,
                    const std::vector<LoadedClip>& real, const std::string& fake_dir) {
    StyleGenerator gen = load_generator(run, cfg);
    SoundEncoder enc = load_encoder(run, cfg, "video.ckpt", "train-video");
    TrajectoryModel traj = load_trajectory(run, cfg);
    std::vector<PairedClipRecord> records;
    for (int i = 0; i < cfg.eval_clips; ++i) {
        const LoadedClip& src = real[static_cast<std::size_t>(i) % real.size()];
        std::vector<MelSpectrogram> segs = segment_for_video(src.mel, cfg.video_frames);
        const std::uint64_t clip_seed =
            static_cast<std::uint64_t>(cfg.seed) * 1000003ull + static_cast<std::uint64_t>(i);
        const Tensor w0 = gen.sample_latent(clip_seed);
        VideoClip clip = render_video(gen, rollout(traj, enc, w0, segs, clip_seed), cfg.fps);

        char name[32];
        std::snprintf(name, sizeof name, "clip_%04d", i);
        const std::string rel = std::string("clips/") + name;
        fs::create_directories(fake_dir + "/" + rel);
        for (std::size_t t = 0; t < clip.frames.size(); ++t)
            write_png(fake_dir + "/" + rel + "/" + frame_name(static_cast<int>(t)),
                      clip.frames[t]);
        write_wav(fake_dir + "/" + rel + "/audio.wav", src.audio);
        PairedClipRecord rec;
        rec.video_path = rel;
        rec.audio_path = rel + "/audio.wav";
        rec.class_label = src.label_name;
        rec.duration = static_cast<double>(clip.frames.size()) / cfg.fps;
        rec.fps = cfg.fps;
        records.push_back(std::move(rec));
    }
    write_manifest(fake_dir + "/manifest.jsonl", records);
}

VideoFeatureNet load_or_train_features(const TrainConfig& cfg, const std::string& run,
                                       const std::vector<LoadedClip>& real) {
    RandomSource rng = stage_rng(cfg, kSaltFeatures);
    VideoFeatureNet net = make_feature_net(cfg, rng);
    const std::string path = run + "/eval_features.ckpt";
    if (fs::exists(path)) {
        Checkpoint ck = load_checkpoint_file(path);
        require_config_match(ck, cfg);
        ck.load_params("", net.params);
        return net;
    }
    std::fprintf(stderr, "training the clip feature net (%d steps)\n", cfg.eval_feature_steps);
    std::ofstream csv(run + "/feature_loss.csv");
    train_feature_net(net, real, cfg, rng, &csv, true);
    write_stage_ckpt(path, cfg, {&net.params});
    return net;
}

int cmd_evaluate(const TrainConfig& cfg, const std::string& run, const std::string& real_dir,
                 const std::string& fake_dir, const std::string& out) {
    std::vector<LoadedClip> real = load_dataset(real_dir + "/manifest.jsonl", cfg);
    const std::string fake_manifest = fake_dir + "/manifest.jsonl";
    if (!fs::exists(fake_manifest)) {
        std::fprintf(stderr, "no manifest in %s, rendering %d clips there\n", fake_dir.c_str(),
                     cfg.eval_clips);
        build_fake_set(cfg, run, real, fake_dir);
    }
    std::vector<LoadedClip> fake = ingest(fake_manifest, cfg);
    if (fake.empty()) throw std::runtime_error(fake_manifest + " yielded no usable clips");

    VideoFeatureNet feat = load_or_train_features(cfg, run, real);
    std::vector<const VideoClip*> real_clips, fake_clips;
    std::vector<const MelSpectrogram*> fake_mels;
    std::vector<int> fake_labels;
    for (const auto& c : real) {
        if (static_cast<int>(real_clips.size()) >= cfg.eval_clips) break;
        real_clips.push_back(&c.video);
    }
    for (const auto& c : fake) {
        if (static_cast<int>(fake_clips.size()) >= cfg.eval_clips) break;
        fake_clips.push_back(&c.video);
        fake_mels.push_back(&c.mel);
        fake_labels.push_back(c.label);
    }

    auto [is_mean, is_std] = inception_score(fake_clips, feat);
    const double fvd = video_feature_gap(feat, real_clips, fake_clips);
    EmbeddingNets nets = load_embedding(run, cfg);
    auto [sim_tv, sim_av] = semantic_consistency(nets, fake_clips, fake_mels, fake_labels);

    json report = {{"is_mean", is_mean},
                   {"is_std", is_std},
                   {"fvd", fvd},
                   {"sim_tv", sim_tv},
                   {"sim_av", sim_av},
                   {"real_clips", static_cast<int>(real_clips.size())},
                   {"fake_clips", static_cast<int>(fake_clips.size())},
                   {"config_hash", hash_hex(config_hash(cfg))}};
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    std::ofstream(out) << report.dump(2) << "\n";
    std::printf("is %.3f +- %.3f  fvd %.3f  sim_tv %.4f  sim_av %.4f -> %s\n", is_mean, is_std,
                fvd, sim_tv, sim_av, out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sound-guided video generation pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "config file (overrides --profile)");
    app.add_option("--profile", g.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--seed", g.seed, "override the config seed");

    std::string data = "data/manifest.jsonl";
    std::string run = "run";
    std::string out_dir = "data";
    std::string audio, out_path;
    std::string real_dir = "data", fake_dir = "out/fake";
    int frames = 0;

    CLI::App* c_make = app.add_subcommand("make-data", "render the synthetic paired dataset");
    c_make->add_option("--out", out_dir, "dataset directory");

    auto add_data_run = [&](CLI::App* c) {
        c->add_option("--data", data, "dataset manifest");
        c->add_option("--run", run, "artifact directory");
    };
    CLI::App* c_emb = app.add_subcommand("train-embedding", "train the joint embedding");
    add_data_run(c_emb);
    CLI::App* c_pre = app.add_subcommand("pretrain-generator", "adversarially pretrain the image generator");
    add_data_run(c_pre);
    CLI::App* c_inv = app.add_subcommand("train-inversion", "train the audio-to-latent encoder");
    add_data_run(c_inv);
    CLI::App* c_vid = app.add_subcommand("train-video", "train the recurrent video model");
    add_data_run(c_vid);

    CLI::App* c_gen = app.add_subcommand("generate", "render a video from an audio file");
    c_gen->add_option("--audio", audio, "input WAV")->required();
    c_gen->add_option("--frames", frames, "frame count (default: config video_frames)");
    c_gen->add_option("--out", out_path, "output directory")->required();
    c_gen->add_option("--run", run, "artifact directory");

    CLI::App* c_edit = app.add_subcommand("edit-image", "re-style a sampled image with audio");
    c_edit->add_option("--audio", audio, "input WAV")->required();
    c_edit->add_option("--out", out_path, "output PNG")->required();
    c_edit->add_option("--run", run, "artifact directory");

    CLI::App* c_eval = app.add_subcommand("evaluate", "score generated clips against the dataset");
    c_eval->add_option("--real", real_dir, "real dataset directory");
    c_eval->add_option("--fake", fake_dir, "generated set directory (rendered if missing)");
    c_eval->add_option("--out", out_path, "report path");
    c_eval->add_option("--run", run, "artifact directory");

    CLI11_PARSE(app, argc, argv);

    try {
        const TrainConfig cfg = resolve_config(g);
        if (c_make->parsed()) return cmd_make_data(cfg, out_dir);
        if (c_emb->parsed()) return cmd_train_embedding(cfg, data, run);
        if (c_pre->parsed()) return cmd_pretrain_generator(cfg, data, run);
        if (c_inv->parsed()) return cmd_train_inversion(cfg, data, run);
        if (c_vid->parsed()) return cmd_train_video(cfg, data, run);
        if (c_gen->parsed()) return cmd_generate(cfg, run, audio, frames, out_path);
        if (c_edit->parsed()) return cmd_edit_image(cfg, run, audio, out_path);
        if (c_eval->parsed())
            return cmd_evaluate(cfg, run, real_dir, fake_dir,
                                out_path.empty() ? "out/report.json" : out_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
