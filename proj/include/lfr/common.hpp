#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lfr {

#ifdef LFR_DOUBLE_PRECISION
using real_t = double;
#else
using real_t = float;
#endif

// Contract violations: a caller broke a documented precondition.
struct contract_error : std::logic_error {
    explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// Numeric failures: NaN/Inf loss, divergence, non-finite intermediates.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Config parse/validation failures (CLI exit code 2).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LFR_REQUIRE(cond, msg) \
    do { if (!(cond)) throw ::lfr::contract_error(msg); } while (0)

// Deterministic PRNG. std::normal_distribution is implementation-defined,
// so dataset/noise reproducibility across toolchains needs our own sampler.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    // splitmix64
    uint64_t next_u64() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform() * static_cast<double>(hi - lo + 1));
    }

    // Box-Muller, one value per two uniform draws; no cached spare so that
    // interleaved streams stay reproducible.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent stream seed from (seed, tag).
    static uint64_t derive(uint64_t seed, uint64_t tag) {
        Rng r(seed ^ (tag * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL));
        return r.next_u64();
    }
};

// FNV-1a 64-bit, used for stable dataset/content hashes.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace lfr
