#pragma once

#include <iostream>

#include "lfr/field.hpp"

namespace lfr::flow {

using nn::VectorFieldT;

struct FlowConfig {
    int K = 3;               // segment count
    double delta_t = 0.05;   // consistency time gap
    double alpha = 0.001;    // velocity-term weight
    double sigma_min = 1e-5; // trajectory floor
    double sigma_s = 0.1;    // source-noise std
    double beta = 0.001;     // distortion weight

    // When the two consistency times straddle a segment boundary, use the
    // segment endpoint of t for both terms (default) or each time's own.
    enum class SegmentMode { kSharedIndex, kOwnIndex };
    SegmentMode segment_mode = SegmentMode::kSharedIndex;

    void validate() const {
        LFR_REQUIRE(K >= 1, "flow: K must be >= 1");
        LFR_REQUIRE(delta_t > 0.0 && delta_t < 1.0, "flow: delta_t must be in (0, 1)");
        LFR_REQUIRE(alpha >= 0.0, "flow: alpha must be >= 0");
        LFR_REQUIRE(sigma_min >= 0.0 && sigma_min < 1.0, "flow: sigma_min must be in [0, 1)");
        LFR_REQUIRE(sigma_s >= 0.0, "flow: sigma_s must be >= 0");
        LFR_REQUIRE(beta >= 0.0 && beta <= 1.0, "flow: beta must be in [0, 1]");
        if (delta_t >= 1.0 / K)
            std::cerr << "[lfr] warning: delta_t " << delta_t << " >= segment width 1/" << K << "\n";
    }
};

// z_t = t*z1 + (1 - (1 - sigma_min)*t) * z0, per-sample t.
template <typename T>
VarT<T> trajectory_point(const VarT<T>& z0, const VarT<T>& z1, const std::vector<T>& t,
                         double sigma_min) {
    LFR_REQUIRE(z0.value().same_shape(z1.value()), "trajectory_point: z0/z1 shape mismatch");
    std::vector<T> a(t.size()), b(t.size());
    for (size_t n = 0; n < t.size(); ++n) {
        LFR_REQUIRE(t[n] >= T(0) && t[n] <= T(1), "trajectory_point: t must be in [0, 1]");
        a[n] = t[n];
        b[n] = static_cast<T>(1.0 - (1.0 - sigma_min) * static_cast<double>(t[n]));
    }
    return add(scale_per_sample(z1, std::move(a)), scale_per_sample(z0, std::move(b)));
}

template <typename T>
VarT<T> trajectory_point(const VarT<T>& z0, const VarT<T>& z1, T t, double sigma_min) {
    return trajectory_point(z0, z1, std::vector<T>(static_cast<size_t>(z0.value().dim(0)), t),
                            sigma_min);
}

inline int segment_index(double t, int K) {
    LFR_REQUIRE(t >= 0.0 && t <= 1.0, "segment_index: t must be in [0, 1]");
    return std::min(static_cast<int>(std::floor(t * K)), K - 1);
}

// f^(i)(z_t, t) = z_t + ((i+1)/K - t) * v(z_t, t)
template <typename T>
VarT<T> f_map(const VarT<T>& z_t, const std::vector<T>& t, const std::vector<int>& i, int K,
              const VectorFieldT<T>& v) {
    std::vector<T> coef(t.size());
    for (size_t n = 0; n < t.size(); ++n) {
        LFR_REQUIRE(i[n] == segment_index(static_cast<double>(t[n]), K),
                    "f_map: segment index does not match t");
        coef[n] = static_cast<T>(static_cast<double>(i[n] + 1) / K - static_cast<double>(t[n]));
    }
    return add(z_t, scale_per_sample(v.eval(z_t, t), std::move(coef)));
}

template <typename T>
VarT<T> f_map(const VarT<T>& z_t, T t, int i, int K, const VectorFieldT<T>& v) {
    const auto n = static_cast<size_t>(z_t.value().dim(0));
    return f_map(z_t, std::vector<T>(n, t), std::vector<int>(n, i), K, v);
}

// Continuation to t=1: f + (1 - (i+1)/K) * v(f, (i+1)/K).
template <typename T>
VarT<T> continue_to_one(const VarT<T>& f_val, const std::vector<int>& i, int K,
                        const VectorFieldT<T>& v) {
    std::vector<T> t_end(i.size()), coef(i.size());
    for (size_t n = 0; n < i.size(); ++n) {
        LFR_REQUIRE(i[n] >= 0 && i[n] < K, "continue_to_one: segment index out of range");
        t_end[n] = static_cast<T>(static_cast<double>(i[n] + 1) / K);
        coef[n] = static_cast<T>(1.0 - static_cast<double>(i[n] + 1) / K);
    }
    return add(f_val, scale_per_sample(v.eval(f_val, t_end), std::move(coef)));
}

template <typename T>
VarT<T> continue_to_one(const VarT<T>& f_val, int i, int K, const VectorFieldT<T>& v) {
    return continue_to_one(f_val, std::vector<int>(static_cast<size_t>(f_val.value().dim(0)), i), K, v);
}

template <typename T>
struct SegmentLossParts {
    VarT<T> loss;     // delta_f + alpha * delta_v
    VarT<T> delta_f;  // mean-square endpoint residual
    VarT<T> delta_v;  // mean-square velocity residual
    VarT<T> f_live;   // f at t through the live parameters
    std::vector<int> seg;
};

// Segment consistency loss. The second evaluation (at t + delta_t) runs
// without gradient, standing in for the detached parameter copy.
template <typename T>
SegmentLossParts<T> segment_loss_parts(const VarT<T>& z0, const VarT<T>& z1,
                                       const std::vector<T>& t, const FlowConfig& cfg,
                                       const VectorFieldT<T>& v) {
    const int K = cfg.K;
    std::vector<T> t2(t.size());
    std::vector<int> seg(t.size()), seg2(t.size());
    for (size_t n = 0; n < t.size(); ++n) {
        LFR_REQUIRE(static_cast<double>(t[n]) >= 0.0 &&
                        static_cast<double>(t[n]) <= 1.0 - cfg.delta_t + 1e-12,
                    "segment_loss: t must be in [0, 1 - delta_t]");
        t2[n] = static_cast<T>(static_cast<double>(t[n]) + cfg.delta_t);
        seg[n] = segment_index(static_cast<double>(t[n]), K);
        seg2[n] = cfg.segment_mode == FlowConfig::SegmentMode::kSharedIndex
                      ? seg[n]
                      : segment_index(std::min(1.0, static_cast<double>(t2[n])), K);
    }

    auto z_t = trajectory_point(z0, z1, t, cfg.sigma_min);
    auto v_live = v.eval(z_t, t);
    std::vector<T> coef(t.size());
    for (size_t n = 0; n < t.size(); ++n)
        coef[n] = static_cast<T>(static_cast<double>(seg[n] + 1) / K - static_cast<double>(t[n]));
    auto f_live = add(z_t, scale_per_sample(v_live, coef));

    VarT<T> f_tgt, v_tgt;
    {
        NoGradGuard ng;
        auto z_t2 = trajectory_point(z0, z1, t2, cfg.sigma_min);
        v_tgt = v.eval(z_t2, t2);
        std::vector<T> coef2(t.size());
        for (size_t n = 0; n < t.size(); ++n)
            coef2[n] =
                static_cast<T>(static_cast<double>(seg2[n] + 1) / K - static_cast<double>(t2[n]));
        f_tgt = add(z_t2, scale_per_sample(v_tgt, std::move(coef2)));
    }

    SegmentLossParts<T> out;
    out.delta_f = mean_sq_diff(f_live, f_tgt);
    out.delta_v = mean_sq_diff(v_live, v_tgt);
    out.loss = add(out.delta_f, mul_scalar(out.delta_v, static_cast<T>(cfg.alpha)));
    out.f_live = f_live;
    out.seg = std::move(seg);
    return out;
}

template <typename T>
VarT<T> segment_loss(const VarT<T>& z0, const VarT<T>& z1, const std::vector<T>& t,
                     const FlowConfig& cfg, const VectorFieldT<T>& v) {
    return segment_loss_parts(z0, z1, t, cfg, v).loss;
}

// Single-segment ("global") velocity consistency loss with endpoint t=1;
// the K=1 segment loss must coincide with this path exactly.
template <typename T>
VarT<T> global_consistency_loss(const VarT<T>& z0, const VarT<T>& z1, const std::vector<T>& t,
                                const FlowConfig& cfg, const VectorFieldT<T>& v) {
    auto z_t = trajectory_point(z0, z1, t, cfg.sigma_min);
    auto v_live = v.eval(z_t, t);
    std::vector<T> coef(t.size()), t2(t.size());
    for (size_t n = 0; n < t.size(); ++n) {
        coef[n] = static_cast<T>(1.0 - static_cast<double>(t[n]));
        t2[n] = static_cast<T>(static_cast<double>(t[n]) + cfg.delta_t);
    }
    auto f_live = add(z_t, scale_per_sample(v_live, coef));

    VarT<T> f_tgt, v_tgt;
    {
        NoGradGuard ng;
        auto z_t2 = trajectory_point(z0, z1, t2, cfg.sigma_min);
        v_tgt = v.eval(z_t2, t2);
        std::vector<T> coef2(t.size());
        for (size_t n = 0; n < t.size(); ++n)
            coef2[n] = static_cast<T>(1.0 - static_cast<double>(t2[n]));
        f_tgt = add(z_t2, scale_per_sample(v_tgt, std::move(coef2)));
    }
    auto df = mean_sq_diff(f_live, f_tgt);
    auto dv = mean_sq_diff(v_live, v_tgt);
    return add(df, mul_scalar(dv, static_cast<T>(cfg.alpha)));
}

}  // namespace lfr::flow
