#pragma once

#include <vector>

#include "lfr/image.hpp"

namespace lfr::metrics {

using PointSet = std::vector<std::vector<double>>;

// 10*log10(max_val^2 / MSE); identical images report cap_db.
double psnr(const Image& x, const Image& xhat, double max_val = 1.0, double cap_db = 100.0);

// Single-scale SSIM, 11-tap Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
// unit dynamic range, valid-region mean; channels averaged.
double ssim(const Image& x, const Image& xhat);

// Exact discrete Wasserstein-2 between equal-size point multisets: minimum
// cost perfect matching on squared Euclidean costs, then sqrt of mean cost.
double w2_empirical(const PointSet& a, const PointSet& b);

// Closed form for Gaussians: sqrt(|m1-m2|^2 + tr(S1+S2-2(S2^1/2 S1 S2^1/2)^1/2)).
// Covariances are row-major dim x dim and must be symmetric PSD.
double w2_gaussian(const std::vector<double>& m1, const std::vector<double>& s1,
                   const std::vector<double>& m2, const std::vector<double>& s2, int dim);

struct GaussianFit {
    std::vector<double> mean;
    std::vector<double> cov;  // row-major dim x dim
    int dim = 0;
    bool regularized = false;
};

// Sample mean + unbiased covariance; shrinkage lambda*I applied when the
// sample count cannot support full rank.
GaussianFit fit_gaussian(const PointSet& pts, double shrinkage = 1e-6);

// Squared Gaussian W2 on fitted moments (feature-free Frechet surrogate).
double frechet(const PointSet& a, const PointSet& b);

struct MetricsReport {
    double mse = 0.0;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double w2 = 0.0;
    double frechet_val = 0.0;
    int n = 0;
};

// Aggregate over paired image lists; w2/frechet are set-level on flattened
// pixels.
MetricsReport evaluate_pairs(const std::vector<Image>& ref, const std::vector<Image>& out);

std::vector<double> flatten(const Image& im);
PointSet flatten_all(const std::vector<Image>& ims);

}  // namespace lfr::metrics
