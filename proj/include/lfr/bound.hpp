#pragma once

#include "lfr/field.hpp"
#include "lfr/metrics.hpp"
#include "lfr/nn.hpp"

namespace lfr::metrics {

// Norms in this report are Euclidean over the full image/latent vector
// (consistent with the W2 ground metric); means are over samples.
struct BoundReport {
    double delta_ed = 0.0;    // encoder-decoder error
    double delta_v = 0.0;     // Monte-Carlo velocity-field error
    double lip_decoder = 0.0; // sampled decoder Lipschitz estimate
    double lip_field = 0.0;   // sampled field Lipschitz estimate
    double constant_c = 0.0;  // lip_decoder * exp(0.5 + lip_field)
    double lhs = 0.0;         // empirical W2(restored, HQ)
    double rhs = 0.0;         // sqrt(delta_ed) + C * sqrt(delta_v)
    int n_pairs = 0;
    bool holds = false;       // lhs <= rhs (empirical, estimated constants)
};

struct VerifyBoundConfig {
    int euler_steps = 3;
    int t_draws = 4;        // time samples per pair for delta_v
    int lip_pairs = 10000;  // random pairs for the Lipschitz estimates
    int nearby_points = 64; // extra perturbation pairs (1e-3)
    double perturb = 1e-3;
    double sigma_min = 1e-5;
    uint64_t seed = 0;
};

// Empirical check of the W2(p_restored, p_HQ) <= sqrt(D_ed) + C sqrt(D_v)
// bound. z0 holds the already-noised initial latents, one per HQ image; the
// proxy true velocity is the straight path z1 - (1 - sigma_min) z0.
// Refuses to run on fewer than 200 pairs.
BoundReport verify_bound(const nn::AutoEncoderT<real_t>& ae, const nn::VectorFieldT<real_t>& field,
                         const std::vector<Image>& hq, const TensorT<real_t>& z0,
                         const VerifyBoundConfig& vc);

std::string bound_csv_header();
std::string bound_csv_row(const BoundReport& r);

}  // namespace lfr::metrics
