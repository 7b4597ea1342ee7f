#pragma once

#include "lfr/model.hpp"

namespace lfr::restore {

struct RestoreConfig {
    int steps = 3;          // Euler step count M
    double sigma_s = -1.0;  // < 0: use the model's training value
    uint64_t seed = 0;
    bool use_ema = true;
    bool collapse = true;  // fold collapsible pairs before inference
};

// Forward Euler from t=0 to t=1 on the grid t_i = i/M.
template <typename T>
TensorT<T> euler_solve(const TensorT<T>& z0, const nn::VectorFieldT<T>& v, int M) {
    LFR_REQUIRE(M >= 1, "euler_solve: M must be >= 1");
    NoGradGuard ng;
    const auto n = static_cast<size_t>(z0.dim(0));
    auto z = VarT<T>::constant(z0);
    const T step = static_cast<T>(1.0 / M);
    for (int m = 0; m < M; ++m) {
        std::vector<T> t(n, static_cast<T>(static_cast<double>(m) / M));
        z = add(z, mul_scalar(v.eval(z, t), step));
        if (!z.value().all_finite())
            throw numeric_error("euler_solve: non-finite iterate at step " + std::to_string(m));
    }
    return z.value();
}

// Algorithm: initial point from the coarse estimate plus Gaussian noise,
// Euler solve to t=1, decode, clip to [0,1]. Noise for sample n is seeded by
// (seed, start_index + n), so results do not depend on batch splits.
template <typename T>
TensorT<T> restore_batch(const flow::ModelT<T>& m, const TensorT<T>& y, const RestoreConfig& cfg,
                         int64_t start_index = 0) {
    if (cfg.steps != m.cfg.flow.K)
        std::cerr << "[lfr] warning: Euler steps M=" << cfg.steps
                  << " differs from trained segment count K=" << m.cfg.flow.K << "\n";
    NoGradGuard ng;
    auto z = m.initial_latent(VarT<T>::constant(y));
    TensorT<T> z0 = z.value();
    const double sigma = cfg.sigma_s < 0.0 ? m.cfg.flow.sigma_s : cfg.sigma_s;
    if (sigma > 0.0) {
        const int64_t per = z0.numel() / z0.dim(0);
        for (int n = 0; n < z0.dim(0); ++n) {
            Rng rng(Rng::derive(cfg.seed, 0x7265ULL + static_cast<uint64_t>(start_index + n) * 2654435761ULL));
            for (int64_t i = 0; i < per; ++i)
                z0.data[static_cast<size_t>(n * per + i)] += static_cast<T>(sigma * rng.normal());
        }
    }

    TensorT<T> zhat;
    const nn::UNetField<T>& fld = cfg.use_ema ? m.ema_field : m.field;
    if (cfg.collapse) {
        nn::CollapsedField<T> cf(fld);
        zhat = euler_solve(z0, cf, cfg.steps);
    } else {
        zhat = euler_solve(z0, fld, cfg.steps);
    }

    auto xhat = m.ae.decode(VarT<T>::constant(zhat));
    TensorT<T> out = xhat.value();
    for (auto& v : out.data) v = std::min(T(1), std::max(T(0), v));
    return out;
}

}  // namespace lfr::restore
