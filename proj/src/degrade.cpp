#include "lfr/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace lfr::degrade {

void DegradationParams::validate() const {
    LFR_REQUIRE(sigma >= 0.0, "degrade: sigma must be >= 0");
    LFR_REQUIRE(r > 0.0, "degrade: r must be > 0");
    LFR_REQUIRE(delta >= 0.0, "degrade: delta must be >= 0");
    LFR_REQUIRE(q >= 1 && q <= 100, "degrade: q must be in [1, 100]");
    LFR_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, "degrade: kernel_size must be odd");
}

void ParamRanges::validate() const {
    LFR_REQUIRE(sigma_lo <= sigma_hi && r_lo <= r_hi && delta_lo <= delta_hi && q_lo <= q_hi,
                "degrade: range lo must be <= hi");
    LFR_REQUIRE(sigma_lo >= 0.0 && r_lo > 0.0 && delta_lo >= 0.0, "degrade: invalid range bounds");
    LFR_REQUIRE(q_lo >= 1 && q_hi <= 100, "degrade: q range must be within [1, 100]");
    LFR_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, "degrade: kernel_size must be odd");
}

namespace {

// mirror index into [0, n) (symmetric reflection, edge included)
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma, int ksize) {
    std::vector<double> k(static_cast<size_t>(ksize));
    const int half = ksize / 2;
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        const double x = i - half;
        k[static_cast<size_t>(i)] = std::exp(-0.5 * x * x / (sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

}  // namespace

std::vector<double> blur_kernel(double sigma, int kernel_size) {
    LFR_REQUIRE(sigma > 0.0, "blur_kernel: sigma must be > 0");
    LFR_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, "blur_kernel: kernel_size must be odd");
    return gaussian_kernel(sigma, kernel_size);
}

Image gaussian_blur(const Image& x, double sigma, int kernel_size) {
    LFR_REQUIRE(sigma >= 0.0, "gaussian_blur: sigma must be >= 0");
    LFR_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, "gaussian_blur: kernel_size must be odd");
    if (sigma < 1e-6) return x;
    const auto k = gaussian_kernel(sigma, kernel_size);
    const int half = kernel_size / 2;

    Image tmp(x.h, x.w, x.c);
    for (int y = 0; y < x.h; ++y)
        for (int ch = 0; ch < x.c; ++ch)
            for (int xx = 0; xx < x.w; ++xx) {
                double acc = 0.0;
                for (int i = -half; i <= half; ++i)
                    acc += k[static_cast<size_t>(i + half)] * x.at(y, reflect(xx + i, x.w), ch);
                tmp.at(y, xx, ch) = static_cast<float>(acc);
            }
    Image out(x.h, x.w, x.c);
    for (int y = 0; y < x.h; ++y)
        for (int ch = 0; ch < x.c; ++ch)
            for (int xx = 0; xx < x.w; ++xx) {
                double acc = 0.0;
                for (int i = -half; i <= half; ++i)
                    acc += k[static_cast<size_t>(i + half)] * tmp.at(reflect(y + i, x.h), xx, ch);
                out.at(y, xx, ch) = static_cast<float>(acc);
            }
    return out;
}

Image resample(const Image& x, double factor, Resample dir, int out_h, int out_w) {
    LFR_REQUIRE(factor > 0.0, "resample: factor must be > 0");
    int ho, wo;
    if (out_h > 0 && out_w > 0) {
        ho = out_h;
        wo = out_w;
    } else if (dir == Resample::kDown) {
        ho = static_cast<int>(std::floor(x.h / factor));
        wo = static_cast<int>(std::floor(x.w / factor));
    } else {
        ho = static_cast<int>(std::floor(x.h * factor));
        wo = static_cast<int>(std::floor(x.w * factor));
    }
    LFR_REQUIRE(ho >= 1 && wo >= 1, "resample: resulting dimension < 1");
    if (ho == x.h && wo == x.w) return x;

    Image out(ho, wo, x.c);
    const double sy = static_cast<double>(x.h) / ho;
    const double sx = static_cast<double>(x.w) / wo;
    for (int y = 0; y < ho; ++y) {
        // half-pixel centers, clamped at the borders
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(x.h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, x.h - 1);
        const double wy = fy - y0;
        for (int xx = 0; xx < wo; ++xx) {
            double fx = (xx + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(x.w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, x.w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < x.c; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * x.at(y0, x0, ch) + wx * x.at(y0, x1, ch)) +
                                 wy * ((1 - wx) * x.at(y1, x0, ch) + wx * x.at(y1, x1, ch));
                out.at(y, xx, ch) = static_cast<float>(v);
            }
        }
    }
    return out;
}

Image add_noise(const Image& x, double delta, uint64_t seed) {
    LFR_REQUIRE(delta >= 0.0, "add_noise: delta must be >= 0");
    if (delta == 0.0) return x;
    Rng rng(Rng::derive(seed, 0x6E6F6973ULL));  // "nois"
    Image out = x;
    for (auto& v : out.v) v = static_cast<float>(v + delta * rng.normal());
    return out;
}

int quant_step(int q) {
    LFR_REQUIRE(q >= 1 && q <= 100, "dct_compress: q must be in [1, 100]");
    return std::max(1, static_cast<int>(std::lround(50.0 / q * 2.0)));
}

namespace {

// Orthonormal 8x8 DCT-II basis, M[u][i].
const std::array<std::array<double, 8>, 8>& dct_basis() {
    static const auto m = [] {
        std::array<std::array<double, 8>, 8> b{};
        for (int u = 0; u < 8; ++u) {
            const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int i = 0; i < 8; ++i)
                b[u][i] = cu * std::cos((2 * i + 1) * u * M_PI / 16.0);
        }
        return b;
    }();
    return m;
}

}  // namespace

Image dct_compress(const Image& x, int q) {
    const int s = quant_step(q);
    const auto& m = dct_basis();
    const int hp = (x.h + 7) / 8 * 8, wp = (x.w + 7) / 8 * 8;

    Image out(x.h, x.w, x.c);
    std::array<double, 64> blk{}, tmp{}, coef{};
    for (int ch = 0; ch < x.c; ++ch)
        for (int by = 0; by < hp; by += 8)
            for (int bx = 0; bx < wp; bx += 8) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        blk[i * 8 + j] =
                            255.0 * x.at(reflect(by + i, x.h), reflect(bx + j, x.w), ch);
                // coef = M * blk * M^T
                for (int u = 0; u < 8; ++u)
                    for (int j = 0; j < 8; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < 8; ++i) acc += m[u][i] * blk[i * 8 + j];
                        tmp[u * 8 + j] = acc;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double acc = 0.0;
                        for (int j = 0; j < 8; ++j) acc += tmp[u * 8 + j] * m[v][j];
                        coef[u * 8 + v] = acc;
                    }
                if (s > 1) {
                    for (int i = 1; i < 64; ++i)  // DC at index 0 is kept
                        coef[static_cast<size_t>(i)] = std::round(coef[static_cast<size_t>(i)] / s) * s;
                }
                // blk = M^T * coef * M
                for (int i = 0; i < 8; ++i)
                    for (int v = 0; v < 8; ++v) {
                        double acc = 0.0;
                        for (int u = 0; u < 8; ++u) acc += m[u][i] * coef[u * 8 + v];
                        tmp[i * 8 + v] = acc;
                    }
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double acc = 0.0;
                        for (int v = 0; v < 8; ++v) acc += tmp[i * 8 + v] * m[v][j];
                        blk[i * 8 + j] = acc / 255.0;
                    }
                for (int i = 0; i < 8 && by + i < x.h; ++i)
                    for (int j = 0; j < 8 && bx + j < x.w; ++j)
                        out.at(by + i, bx + j, ch) = static_cast<float>(blk[i * 8 + j]);
            }
    return out;
}

Image apply(const Image& x, const DegradationParams& p, uint64_t seed) {
    p.validate();
    Image y = gaussian_blur(x, p.sigma, p.kernel_size);
    y = resample(y, p.r, Resample::kDown);
    y = add_noise(y, p.delta, seed);
    y = dct_compress(y, p.q);
    y = resample(y, p.r, Resample::kUp, x.h, x.w);
    return y.clipped();
}

DegradationParams sample_params(const ParamRanges& ranges, uint64_t seed) {
    ranges.validate();
    Rng rng(Rng::derive(seed, 0x70617261ULL));  // "para"
    DegradationParams p;
    p.sigma = rng.uniform(ranges.sigma_lo, ranges.sigma_hi);
    p.r = rng.uniform(ranges.r_lo, ranges.r_hi);
    p.delta = rng.uniform(ranges.delta_lo, ranges.delta_hi);
    p.q = std::clamp(static_cast<int>(std::lround(rng.uniform(ranges.q_lo, ranges.q_hi))),
                     ranges.q_lo, ranges.q_hi);
    p.kernel_size = ranges.kernel_size;
    return p;
}

}  // namespace lfr::degrade
