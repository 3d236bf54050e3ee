// tensor.h — flat n-dimensional array of scalars, row-major.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sonovid {

template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> sh) : shape(std::move(sh)), data(numel_of(shape), S(0)) {}
    TensorT(std::vector<int> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        if (static_cast<std::size_t>(numel_of(shape)) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static std::int64_t numel_of(const std::vector<int>& sh) {
        std::int64_t n = 1;
        for (int d : sh) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(S(0)); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    template <typename S2>
    TensorT<S2> cast() const {
        TensorT<S2> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<S2>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename S>
bool all_finite(const TensorT<S>& t) {
    for (S v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

inline std::string shape_str(const std::vector<int>& sh) {
    std::string s = "[";
    for (std::size_t i = 0; i < sh.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(sh[i]);
    }
    return s + "]";
}

}  // namespace sonovid
