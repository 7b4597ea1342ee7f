#pragma once

#include "lfr/image.hpp"

namespace lfr::degrade {

struct DegradationParams {
    double sigma = 0.0;   // blur std-dev, pixels
    double r = 1.0;       // resample factor
    double delta = 0.0;   // noise std-dev, intensity units
    int q = 100;          // compression quality, 1..100
    int kernel_size = 9;  // odd blur kernel width

    void validate() const;
};

struct ParamRanges {
    double sigma_lo = 0.1, sigma_hi = 3.0;
    double r_lo = 1.0, r_hi = 4.0;
    // The reference ranges are on a 0-255 intensity scale; unit-range images
    // use delta in [0, 20/255].
    double delta_lo = 0.0, delta_hi = 20.0 / 255.0;
    int q_lo = 30, q_hi = 100;
    int kernel_size = 9;

    void validate() const;
};

enum class Resample { kDown, kUp };

// Separable Gaussian blur with reflective boundaries; kernel normalized to
// sum 1 in 64-bit. sigma below 1e-6 is the identity.
Image gaussian_blur(const Image& x, double sigma, int kernel_size);

// The normalized 1-D kernel the blur uses.
std::vector<double> blur_kernel(double sigma, int kernel_size);

// Bilinear resampling. Down: floor(dim / factor). Up: floor(dim * factor)
// unless explicit output dims are passed (the pipeline restores the
// recorded originals).
Image resample(const Image& x, double factor, Resample dir, int out_h = 0, int out_w = 0);

// i.i.d. Gaussian pixel noise, not clipped.
Image add_noise(const Image& x, double delta, uint64_t seed);

// Block-DCT compression surrogate: 8x8 orthonormal DCT, uniform scalar
// quantization of AC coefficients on the 0-255 scale with step
// s(q) = max(1, round(50/q * 2)); step 1 is lossless and DC always survives.
// Declared surrogate; not bit-compatible JPEG.
Image dct_compress(const Image& x, int q);

int quant_step(int q);

// blur -> down(r) -> noise -> compress -> up(r) -> clip [0,1].
Image apply(const Image& x, const DegradationParams& p, uint64_t seed);

DegradationParams sample_params(const ParamRanges& ranges, uint64_t seed);

}  // namespace lfr::degrade
