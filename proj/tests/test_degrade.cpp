#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lfr/dataset.hpp"
#include "lfr/degrade.hpp"
#include "lfr/metrics.hpp"

using namespace lfr;
using namespace lfr::degrade;

namespace {

Image test_chart(int n = 16) {
    // mixture of gradient, checker and a bright square
    Image im(n, n, 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            float v = 0.3f * static_cast<float>(x) / n + 0.2f * (((x / 2 + y / 2) % 2) ? 1.f : 0.f);
            if (y >= n / 4 && y < n / 2 && x >= n / 4 && x < n / 2) v += 0.4f;
            im.at(y, x) = std::min(1.f, v);
        }
    return im;
}

}  // namespace

TEST_CASE("gaussian_blur: sigma below 1e-6 is the identity") {
    auto x = test_chart();
    auto y = gaussian_blur(x, 1e-7, 9);
    CHECK(y.v == x.v);
}

TEST_CASE("gaussian_blur: unit impulse yields the kernel, summing to 1") {
    Image x(17, 17, 1);
    x.at(8, 8) = 1.f;
    auto y = gaussian_blur(x, 2.0, 9);
    double sum = 0;
    for (float v : y.v) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));  // float image storage
    CHECK(y.at(8, 8) > y.at(8, 7));
    CHECK(y.at(8, 7) == doctest::Approx(y.at(8, 9)).epsilon(1e-6));
    // separable 2-D value at the impulse equals k[half]^2
    const auto k = blur_kernel(2.0, 9);
    CHECK(y.at(8, 8) == doctest::Approx(k[4] * k[4]).epsilon(1e-6));
}

TEST_CASE("blur kernel sums to one within 1e-12 (64-bit construction)") {
    for (double sigma : {0.3, 1.0, 3.0, 15.0})
        for (int ks : {9, 21, 41}) {
            const auto k = blur_kernel(sigma, ks);
            double sum = 0;
            for (double v : k) sum += v;
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
}

TEST_CASE("gaussian_blur: constant image stays constant for any sigma") {
    Image x(12, 12, 1, 0.37f);
    for (double sigma : {0.5, 2.0, 8.0}) {
        auto y = gaussian_blur(x, sigma, 11);
        for (float v : y.v) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
    }
}

TEST_CASE("gaussian_blur: 1-D kernel sums to one within 1e-12 (via row blur of impulse row)") {
    Image x(1, 41, 1);
    x.at(0, 20) = 1.f;
    auto y = gaussian_blur(x, 3.0, 41);
    double sum = 0;
    for (float v : y.v) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-6);  // float storage; kernel built in 64-bit
}

TEST_CASE("gaussian_blur: negative sigma is a contract violation") {
    CHECK_THROWS_AS(gaussian_blur(test_chart(), -1.0, 9), contract_error);
    CHECK_THROWS_AS(gaussian_blur(test_chart(), 1.0, 8), contract_error);
}

TEST_CASE("resample: factor 1 is identity in shape and values") {
    auto x = test_chart();
    auto d = resample(x, 1.0, Resample::kDown);
    CHECK(d.v == x.v);
    auto u = resample(x, 1.0, Resample::kUp);
    CHECK(u.v == x.v);
}

TEST_CASE("resample: constant image stays constant at any factor") {
    Image x(16, 16, 1, 0.625f);
    for (double f : {1.3, 2.0, 3.7}) {
        auto d = resample(x, f, Resample::kDown);
        for (float v : d.v) CHECK(v == doctest::Approx(0.625f).epsilon(1e-6));
        auto u = resample(d, f, Resample::kUp, 16, 16);
        for (float v : u.v) CHECK(v == doctest::Approx(0.625f).epsilon(1e-6));
    }
}

TEST_CASE("resample: 2x2 checkerboard down by 2 then up by 2 is the mean") {
    Image x(2, 2, 1);
    x.at(0, 0) = 1.f;
    x.at(1, 1) = 1.f;
    auto d = resample(x, 2.0, Resample::kDown);
    REQUIRE(d.h == 1);
    REQUIRE(d.w == 1);
    // half-pixel-center bilinear at the middle of a 2x2 grid averages all four
    CHECK(d.at(0, 0) == doctest::Approx(0.5f).epsilon(1e-6));
    auto u = resample(d, 2.0, Resample::kUp, 2, 2);
    for (float v : u.v) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("resample: resulting dimension < 1 is a contract violation") {
    Image x(4, 4, 1);
    CHECK_THROWS_AS(resample(x, 8.0, Resample::kDown), contract_error);
}

TEST_CASE("add_noise: delta 0 identity; same seed identical") {
    auto x = test_chart();
    CHECK(add_noise(x, 0.0, 7).v == x.v);
    auto a = add_noise(x, 0.05, 7);
    auto b = add_noise(x, 0.05, 7);
    CHECK(a.v == b.v);
    auto c = add_noise(x, 0.05, 8);
    CHECK(a.v != c.v);
}

TEST_CASE("add_noise: sample std matches delta within 1% on 1e6 pixels") {
    Image x(1000, 1000, 1, 0.5f);
    auto y = add_noise(x, 0.05, 123);
    double mean = 0;
    for (size_t i = 0; i < y.v.size(); ++i) mean += y.v[i] - x.v[i];
    mean /= static_cast<double>(y.v.size());
    double var = 0;
    for (size_t i = 0; i < y.v.size(); ++i) {
        const double d = (y.v[i] - x.v[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(y.v.size());
    CHECK(std::sqrt(var) == doctest::Approx(0.05).epsilon(0.01));
}

TEST_CASE("dct_compress: step-1 quality on integer-grid intensities round-trips") {
    REQUIRE(quant_step(100) == 1);
    Image x(16, 16, 1);
    Rng rng(5);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform_int(0, 255)) / 255.f;
    auto y = dct_compress(x, 100);
    for (size_t i = 0; i < x.v.size(); ++i) CHECK(std::abs(y.v[i] - x.v[i]) < 1e-5);
}

TEST_CASE("dct_compress: constant image is exactly recovered for any q") {
    Image x(16, 16, 1, 0.43f);
    for (int q : {1, 10, 30, 50, 77, 100}) {
        auto y = dct_compress(x, q);
        for (float v : y.v) CHECK(v == doctest::Approx(0.43f).epsilon(1e-6));
    }
}

TEST_CASE("dct_compress: transform round trip without quantization is identity within 1e-6") {
    // q=100 gives step 1, which bypasses quantization entirely
    auto x = test_chart();
    auto y = dct_compress(x, 100);
    for (size_t i = 0; i < x.v.size(); ++i) CHECK(std::abs(y.v[i] - x.v[i]) < 1e-6);
}

TEST_CASE("dct_compress: q out of range is a contract violation") {
    CHECK_THROWS_AS(dct_compress(test_chart(), 0), contract_error);
    CHECK_THROWS_AS(dct_compress(test_chart(), 101), contract_error);
}

TEST_CASE("dct_compress: error non-increasing in q over a procedural corpus") {
    const std::vector<int> qs = {30, 40, 50, 60, 70, 80, 90, 100};
    for (int img = 0; img < 20; ++img) {
        const char* gens[3] = {"gaussian-blobs", "random-rectangles", "smooth-noise"};
        auto x = data::synth_image(gens[img % 3], 16, 1, 99, static_cast<uint64_t>(img));
        double prev = 1e100;
        for (int q : qs) {
            const double err = image_mse(x, dct_compress(x, q));
            CHECK(err <= prev + 1e-12);
            prev = err;
        }
    }
}

TEST_CASE("degrade: all-identity parameters reproduce the input within 1e-5") {
    auto x = test_chart();
    DegradationParams p;
    p.sigma = 0.0;
    p.r = 1.0;
    p.delta = 0.0;
    p.q = 100;
    p.kernel_size = 9;
    auto y = apply(x, p, 3);
    for (size_t i = 0; i < x.v.size(); ++i) CHECK(std::abs(y.v[i] - x.v[i]) < 1e-5);
}

TEST_CASE("degrade: fixed params and seed give bitwise equal output; bounds and shape hold") {
    auto x = test_chart();
    DegradationParams p;
    p.sigma = 1.5;
    p.r = 2.5;
    p.delta = 0.03;
    p.q = 40;
    p.kernel_size = 9;
    auto a = apply(x, p, 11);
    auto b = apply(x, p, 11);
    CHECK(a.v == b.v);
    CHECK(a.h == x.h);
    CHECK(a.w == x.w);
    for (float v : a.v) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("degrade: stronger downsampling strictly lowers PSNR on the chart") {
    auto x = test_chart();
    DegradationParams p;
    p.sigma = 2.0;
    p.delta = 0.02;
    p.q = 50;
    p.kernel_size = 9;
    p.r = 2.0;
    const double psnr_r2 = metrics::psnr(x, apply(x, p, 5));
    p.r = 4.0;
    const double psnr_r4 = metrics::psnr(x, apply(x, p, 5));
    CHECK(psnr_r4 < psnr_r2);
}

TEST_CASE("sample_params: degenerate ranges, determinism, uniform mean oracle") {
    ParamRanges r;
    r.sigma_lo = r.sigma_hi = 2.5;
    r.r_lo = r.r_hi = 1.5;
    r.delta_lo = r.delta_hi = 0.01;
    r.q_lo = r.q_hi = 42;
    auto p = sample_params(r, 9);
    CHECK(p.sigma == 2.5);
    CHECK(p.r == 1.5);
    CHECK(p.delta == 0.01);
    CHECK(p.q == 42);
    auto p2 = sample_params(r, 9);
    CHECK(p2.sigma == p.sigma);

    ParamRanges wide;
    wide.sigma_lo = 0.1;
    wide.sigma_hi = 15.0;
    double mean = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) mean += sample_params(wide, static_cast<uint64_t>(i)).sigma;
    mean /= n;
    CHECK(mean == doctest::Approx(7.55).epsilon(0.02));
}

TEST_CASE("ranges validation") {
    ParamRanges r;
    r.sigma_lo = 2.0;
    r.sigma_hi = 1.0;
    CHECK_THROWS_AS(r.validate(), contract_error);
    ParamRanges r2;
    r2.kernel_size = 10;
    CHECK_THROWS_AS(r2.validate(), contract_error);
}
