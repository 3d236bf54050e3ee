#include "sonovid/config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace sonovid {

namespace {

struct FieldRef {
    enum Kind { kInt, kDouble, kString } kind;
    void* ptr;
};

// Single source of truth for section/key layout; ordering here defines the
// canonical serialization order.
std::vector<std::pair<std::string, FieldRef>> schema(TrainConfig& c) {
    auto I = [](int& v) { return FieldRef{FieldRef::kInt, &v}; };
    auto D = [](double& v) { return FieldRef{FieldRef::kDouble, &v}; };
    auto S = [](std::string& v) { return FieldRef{FieldRef::kString, &v}; };
    return {
        {"data.classes", I(c.classes)},
        {"data.n_clips", I(c.n_clips)},
        {"data.image_size", I(c.image_size)},
        {"data.video_frames", I(c.video_frames)},
        {"data.fps", I(c.fps)},
        {"data.audio_seconds", D(c.audio_seconds)},
        {"data.sample_rate", I(c.sample_rate)},
        {"mel.n_mels", I(c.n_mels)},
        {"mel.window", I(c.mel_window)},
        {"mel.hop", I(c.mel_hop)},
        {"embedding.dim", I(c.embed_dim)},
        {"embedding.batch", I(c.embed_batch)},
        {"embedding.steps", I(c.embed_steps)},
        {"embedding.lr", D(c.embed_lr)},
        {"embedding.temperature_init", D(c.temperature_init)},
        {"generator.latent_dim", I(c.latent_dim)},
        {"generator.style_layers", I(c.style_layers)},
        {"generator.coarse_end", I(c.coarse_end)},
        {"generator.mid_end", I(c.mid_end)},
        {"generator.base_channels", I(c.base_channels)},
        {"generator.pretrain_steps", I(c.pretrain_steps)},
        {"generator.pretrain_batch", I(c.pretrain_batch)},
        {"generator.pretrain_lr", D(c.pretrain_lr)},
        {"generator.r1_gamma", D(c.r1_gamma)},
        {"inversion.steps", I(c.inversion_steps)},
        {"inversion.batch", I(c.inversion_batch)},
        {"inversion.segments", I(c.inversion_segments)},
        {"inversion.lr", D(c.inversion_lr)},
        {"inversion.lambda_bind", D(c.lambda_bind)},
        {"video.steps", I(c.video_steps)},
        {"video.batch", I(c.video_batch)},
        {"video.lr", D(c.video_lr)},
        {"video.disc_lr", D(c.video_disc_lr)},
        {"video.lambda_enc", D(c.lambda_enc)},
        {"video.gru_cells", I(c.gru_cells)},
        {"video.gru_hidden", I(c.gru_hidden)},
        {"video.noise_dim", I(c.noise_dim)},
        {"video.disc_frames", I(c.disc_frames)},
        {"video.cotrain_encoder", I(c.cotrain_encoder)},
        {"eval.clips", I(c.eval_clips)},
        {"eval.feature_steps", I(c.eval_feature_steps)},
        {"run.seed", I(c.seed)},
        {"run.profile", S(c.profile)},
    };
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("double formatting failed");
    return std::string(buf, end);
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig default_config(const std::string& profile) {
    TrainConfig c;
    c.profile = profile;
    if (profile == "desk") return c;
    if (profile == "paper") {
        c.image_size = 256;
        c.embed_dim = 512;
        c.latent_dim = 512;
        c.style_layers = 16;
        c.base_channels = 512;
        c.gru_cells = 5;
        c.gru_hidden = 512;
        c.noise_dim = 512;
        return c;
    }
    throw std::invalid_argument("unknown profile: " + profile + " (want desk or paper)");
}

std::string serialize_config(const TrainConfig& c) {
    TrainConfig tmp = c;
    std::ostringstream os;
    std::string cur_section;
    for (const auto& [full_key, ref] : schema(tmp)) {
        const std::size_t dot = full_key.find('.');
        const std::string section = full_key.substr(0, dot);
        const std::string key = full_key.substr(dot + 1);
        if (section != cur_section) {
            if (!cur_section.empty()) os << "\n";
            os << "[" << section << "]\n";
            cur_section = section;
        }
        os << key << " = ";
        switch (ref.kind) {
            case FieldRef::kInt: os << *static_cast<int*>(ref.ptr); break;
            case FieldRef::kDouble: os << format_double(*static_cast<double*>(ref.ptr)); break;
            case FieldRef::kString: os << *static_cast<std::string*>(ref.ptr); break;
        }
        os << "\n";
    }
    return os.str();
}

TrainConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = section + "." + trim(line.substr(0, eq));
        if (kv.count(key)) throw std::runtime_error("duplicate config key: " + key);
        kv[key] = trim(line.substr(eq + 1));
    }

    TrainConfig c;
    for (auto& [full_key, ref] : schema(c)) {
        auto it = kv.find(full_key);
        if (it == kv.end()) throw std::runtime_error("missing config key: " + full_key);
        const std::string& raw = it->second;
        switch (ref.kind) {
            case FieldRef::kInt: {
                int v = 0;
                auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
                if (ec != std::errc() || p != raw.data() + raw.size())
                    throw std::runtime_error("config key " + full_key + ": bad integer '" + raw + "'");
                *static_cast<int*>(ref.ptr) = v;
                break;
            }
            case FieldRef::kDouble: {
                double v = 0;
                auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
                if (ec != std::errc() || p != raw.data() + raw.size())
                    throw std::runtime_error("config key " + full_key + ": bad number '" + raw + "'");
                *static_cast<double*>(ref.ptr) = v;
                break;
            }
            case FieldRef::kString: *static_cast<std::string*>(ref.ptr) = raw; break;
        }
        kv.erase(it);
    }
    if (!kv.empty()) throw std::runtime_error("unknown config key: " + kv.begin()->first);
    validate_config(c);
    return c;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

void save_config(const std::string& path, const TrainConfig& c) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config: " + path);
    os << serialize_config(c);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

std::uint64_t config_hash(const TrainConfig& c) {
    return fnv1a(serialize_config(c));
}

std::uint64_t architecture_hash(const TrainConfig& c) {
    // only the fields that fix parameter shapes and input formats; training
    // schedules, seeds, and dataset sizing do not change what a checkpoint is
    std::ostringstream ss;
    ss << "classes=" << c.classes
       << " image_size=" << c.image_size
       << " sample_rate=" << c.sample_rate
       << " n_mels=" << c.n_mels
       << " mel_window=" << c.mel_window
       << " mel_hop=" << c.mel_hop
       << " embed_dim=" << c.embed_dim
       << " latent_dim=" << c.latent_dim
       << " style_layers=" << c.style_layers
       << " coarse_end=" << c.coarse_end
       << " mid_end=" << c.mid_end
       << " base_channels=" << c.base_channels
       << " gru_cells=" << c.gru_cells
       << " gru_hidden=" << c.gru_hidden
       << " noise_dim=" << c.noise_dim;
    return fnv1a(ss.str());
}

void validate_config(const TrainConfig& c) {
    auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
    if (c.classes < 2) fail("data.classes must be >= 2");
    if (c.image_size < 8 || (c.image_size & (c.image_size - 1)) != 0)
        fail("data.image_size must be a power of two >= 8");
    if (c.video_frames < 1) fail("data.video_frames must be >= 1");
    if (c.fps < 1) fail("data.fps must be >= 1");
    if (c.mel_hop <= 0 || c.mel_window < c.mel_hop) fail("mel: want window >= hop > 0");
    if (!(0 < c.coarse_end && c.coarse_end < c.mid_end && c.mid_end < c.style_layers))
        fail("generator: want 0 < coarse_end < mid_end < style_layers");
    if (c.latent_dim < 1 || c.embed_dim < 1) fail("dims must be positive");
    if (c.profile != "desk" && c.profile != "paper") fail("run.profile must be desk or paper");
}

}  // namespace sonovid
