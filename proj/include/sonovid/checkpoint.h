// checkpoint.h — self-describing parameter container (magic "SVCK"): version,
// config hash + echo, then named float arrays with explicit shapes.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sonovid/config.h"
#include "sonovid/nn.h"
#include "sonovid/tensor.h"

namespace sonovid {

struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t cfg_hash = 0;
    std::string cfg_text;
    std::vector<std::pair<std::string, Tensor>> arrays;

    void add_array(std::string name, Tensor t) { arrays.emplace_back(std::move(name), std::move(t)); }

    void add_params(const std::string& prefix, const ParamSet& ps) {
        for (const auto& p : ps.items()) add_array(prefix + p->name, p->value);
    }

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : arrays)
            if (n == name) return &t;
        return nullptr;
    }

    // Copies stored values into ps. Every parameter must be present with a
    // matching shape; failures name the offending array.
    void load_params(const std::string& prefix, ParamSet& ps) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint_file(const std::string& path);

// Attaches config identity to a checkpoint being written.
void stamp_config(Checkpoint& ck, const TrainConfig& cfg);

// Rejects checkpoints written under a different architecture config unless
// explicitly allowed.
void require_config_match(const Checkpoint& ck, const TrainConfig& cfg, bool allow_mismatch = false);

}  // namespace sonovid
