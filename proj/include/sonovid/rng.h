// rng.h — seeded random source with a fixed, implementation-independent
// mapping from engine output to uniforms and normals, so that artifacts
// are reproducible from (config, seed) regardless of libstdc++ version.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sonovid/tensor.h"

namespace sonovid {

class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 bits of the engine output.
    double uniform() {
        const std::uint64_t x = engine_() >> 11;
        return static_cast<double>(x) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t integer(std::uint64_t n) {
        // Rejection-free modulo bias is negligible for our n; keep it simple
        // and fully deterministic.
        return engine_() % n;
    }

    int index(int n) { return static_cast<int>(integer(static_cast<std::uint64_t>(n))); }

    template <typename S>
    void fill_normal(TensorT<S>& t, double stddev = 1.0, double mean = 0.0) {
        for (auto& v : t.data) v = static_cast<S>(mean + stddev * normal());
    }

    template <typename S>
    void fill_uniform(TensorT<S>& t, double lo, double hi) {
        for (auto& v : t.data) v = static_cast<S>(uniform(lo, hi));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(integer(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream (e.g. per training stage).
    RandomSource fork(std::uint64_t salt) {
        return RandomSource(engine_() ^ (salt * 0x9e3779b97f4a7c15ull));
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sonovid
