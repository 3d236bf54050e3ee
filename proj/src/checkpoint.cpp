#include "sonovid/checkpoint.h"

#include <fstream>
#include <stdexcept>

#include "sonovid/binio.h"

namespace sonovid {

void Checkpoint::load_params(const std::string& prefix, ParamSet& ps) const {
    for (auto& p : ps.items()) {
        const std::string name = prefix + p->name;
        const Tensor* t = find(name);
        if (t == nullptr) throw std::runtime_error("checkpoint missing array: " + name);
        if (t->shape != p->value.shape)
            throw std::runtime_error("checkpoint array " + name + " has shape " + shape_str(t->shape) +
                                     ", model expects " + shape_str(p->value.shape));
        p->value = *t;
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
    write_tag(os, "SVCK");
    write_u32(os, ck.version);
    write_u64(os, ck.cfg_hash);
    write_u32(os, static_cast<std::uint32_t>(ck.cfg_text.size()));
    os.write(ck.cfg_text.data(), static_cast<std::streamsize>(ck.cfg_text.size()));
    write_u32(os, static_cast<std::uint32_t>(ck.arrays.size()));
    for (const auto& [name, t] : ck.arrays) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
        for (float v : t.data) write_f32(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    expect_tag(is, "SVCK", path);
    Checkpoint ck;
    ck.version = read_u32(is);
    if (ck.version != 1)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(ck.version) +
                                 " in " + path);
    ck.cfg_hash = read_u64(is);
    const std::uint32_t cfg_len = read_u32(is);
    ck.cfg_text.resize(cfg_len);
    is.read(ck.cfg_text.data(), cfg_len);
    const std::uint32_t n = read_u32(is);
    ck.arrays.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rank = read_u32(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_u32(is));
        Tensor t(shape);
        for (auto& v : t.data) v = read_f32(is);
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        ck.arrays.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void stamp_config(Checkpoint& ck, const TrainConfig& cfg) {
    ck.cfg_text = serialize_config(cfg);
    ck.cfg_hash = config_hash(cfg);
}

void require_config_match(const Checkpoint& ck, const TrainConfig& cfg, bool allow_mismatch) {
    if (ck.cfg_hash == config_hash(cfg)) return;
    if (allow_mismatch) return;
    // seeds and training schedules may differ between stages; only a change in
    // model shapes or input formats makes a checkpoint unreadable
    if (!ck.cfg_text.empty()) {
        TrainConfig stored = parse_config(ck.cfg_text);
        if (architecture_hash(stored) == architecture_hash(cfg)) return;
    }
    throw std::runtime_error(
        "checkpoint was written under an incompatible architecture config; "
        "pass a matching config or explicitly allow the mismatch");
}

}  // namespace sonovid
