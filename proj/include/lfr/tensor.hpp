#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lfr/common.hpp"

namespace lfr {

// Dense row-major tensor. Storage precision is a template parameter; the
// artifact-wide default is lfr::real_t (32-bit unless LFR_DOUBLE_PRECISION).
// Reductions and dot products accumulate in 64-bit regardless of T.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        LFR_REQUIRE(numel_of(shape) == static_cast<int64_t>(data.size()),
                    "tensor: shape does not match data length");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            LFR_REQUIRE(d > 0, "tensor: dimensions must be positive");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    // 4-D NCHW offset
    int64_t at4(int n, int c, int h, int w) const {
        return ((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    double sum64() const {
        double acc = 0.0;
        for (T v : data) acc += static_cast<double>(v);
        return acc;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }

    static TensorT zeros_like(const TensorT& o) { return TensorT(o.shape); }

    static TensorT scalar(T v) { return TensorT({1}, std::vector<T>{v}); }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<real_t>;

}  // namespace lfr
