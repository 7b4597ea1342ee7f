#include "lfr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lfr {

Image Image::clipped(float lo, float hi) const {
    Image out = *this;
    for (auto& x : out.v) x = std::min(hi, std::max(lo, x));
    return out;
}

void write_pnm(const Image& img, const std::string& path) {
    LFR_REQUIRE(img.c == 1 || img.c == 3, "write_pnm: 1 or 3 channels only");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pnm: cannot open " + path);
    os << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n65535\n";
    for (float x : img.v) {
        const float cl = std::min(1.f, std::max(0.f, x));
        const auto q = static_cast<uint16_t>(std::lround(cl * 65535.0));
        os.put(static_cast<char>(q >> 8));  // PNM 16-bit is big-endian
        os.put(static_cast<char>(q & 0xFF));
    }
    if (!os) throw std::runtime_error("write_pnm: write failed: " + path);
}

Image read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pnm: cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P6") throw std::runtime_error("read_pnm: unsupported format in " + path);
    auto next_int = [&is, &path]() {
        // skip whitespace and '#' comment lines
        int ch = is.peek();
        while (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t' || ch == '#') {
            if (ch == '#') is.ignore(1 << 16, '\n');
            else is.get();
            ch = is.peek();
        }
        int v;
        if (!(is >> v)) throw std::runtime_error("read_pnm: bad header in " + path);
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    is.get();  // single whitespace after maxval
    Image img(h, w, magic == "P5" ? 1 : 3);
    if (maxval == 65535) {
        for (auto& x : img.v) {
            const int hi = is.get(), lo = is.get();
            x = static_cast<float>((hi << 8) | lo) / 65535.f;
        }
    } else if (maxval == 255) {
        for (auto& x : img.v) x = static_cast<float>(is.get()) / 255.f;
    } else {
        throw std::runtime_error("read_pnm: unsupported maxval in " + path);
    }
    if (!is) throw std::runtime_error("read_pnm: truncated file " + path);
    return img;
}

double image_mse(const Image& a, const Image& b) {
    LFR_REQUIRE(a.same_shape(b), "image_mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.v.size());
}

}  // namespace lfr
