#pragma once

#include <string>
#include <vector>

#include "lfr/common.hpp"

namespace lfr {

// Dense H x W x C image, unit-range intensities, row-major with interleaved
// channels.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> v;

    Image() = default;
    Image(int h_, int w_, int c_, float fill = 0.f)
        : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch = 0) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch = 0) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }

    size_t size() const { return v.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

    Image clipped(float lo = 0.f, float hi = 1.f) const;
};

// 16-bit binary PGM (c=1) / PPM (c=3).
void write_pnm(const Image& img, const std::string& path);
Image read_pnm(const std::string& path);

double image_mse(const Image& a, const Image& b);

}  // namespace lfr
