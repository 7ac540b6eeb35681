#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sspsd/errors.hpp"

namespace sspsd {

/// Dense rank-3 tensor in HWC layout, double precision.
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int height, int width, int channels)
        : h(height), w(width), c(channels),
          v(static_cast<std::size_t>(height) * width * channels, 0.0) {}

    double& at(int y, int x, int ch) {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    const double* row_ptr(int y, int x) const {
        return &v[(static_cast<std::size_t>(y) * w + x) * c];
    }
    double* row_ptr(int y, int x) {
        return &v[(static_cast<std::size_t>(y) * w + x) * c];
    }
    std::size_t numel() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }
};

inline double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double x : t.v) s += x * x;
    return std::sqrt(s);
}

inline void scale_in_place(Tensor& t, double factor) {
    for (double& x : t.v) x *= factor;
}

// dst += factor * src
inline void add_scaled(Tensor& dst, const Tensor& src, double factor) {
    if (!dst.same_shape(src)) throw ShapeError("add_scaled: shape mismatch");
    for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += factor * src.v[i];
}

}  // namespace sspsd
