#include "lfr/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "lfr/assignment.hpp"

namespace lfr::metrics {

double psnr(const Image& x, const Image& xhat, double max_val, double cap_db) {
    LFR_REQUIRE(x.same_shape(xhat), "psnr: shape mismatch");
    const double mse = image_mse(x, xhat);
    if (mse <= 0.0) return cap_db;
    return std::min(cap_db, 10.0 * std::log10(max_val * max_val / mse));
}

namespace {

std::vector<double> ssim_window() {
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double x = i - 5;
        w[static_cast<size_t>(i)] = std::exp(-0.5 * x * x / (1.5 * 1.5));
        sum += w[static_cast<size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

}  // namespace

double ssim(const Image& x, const Image& xhat) {
    LFR_REQUIRE(x.same_shape(xhat), "ssim: shape mismatch");
    LFR_REQUIRE(x.h >= 11 && x.w >= 11, "ssim: image smaller than the 11-tap window");
    static const std::vector<double> win = ssim_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0.0;
    int count = 0;
    for (int ch = 0; ch < x.c; ++ch)
        for (int y = 0; y <= x.h - 11; ++y)
            for (int xx = 0; xx <= x.w - 11; ++xx) {
                double mx = 0, my = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double w = win[static_cast<size_t>(i)] * win[static_cast<size_t>(j)];
                        mx += w * x.at(y + i, xx + j, ch);
                        my += w * xhat.at(y + i, xx + j, ch);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double w = win[static_cast<size_t>(i)] * win[static_cast<size_t>(j)];
                        const double dx = x.at(y + i, xx + j, ch) - mx;
                        const double dy = xhat.at(y + i, xx + j, ch) - my;
                        vx += w * dx * dx;
                        vy += w * dy * dy;
                        cov += w * dx * dy;
                    }
                const double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
                const double cs = (2 * cov + c2) / (vx + vy + c2);
                total += l * cs;
                ++count;
            }
    return total / count;
}

double w2_empirical(const PointSet& a, const PointSet& b) {
    LFR_REQUIRE(a.size() == b.size(), "w2_empirical: point sets must have equal size");
    LFR_REQUIRE(!a.empty() && a.size() <= 4096, "w2_empirical: need 1..4096 points");
    const int n = static_cast<int>(a.size());
    const size_t dim = a[0].size();
    std::vector<double> cost(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        LFR_REQUIRE(a[static_cast<size_t>(i)].size() == dim && b[static_cast<size_t>(i)].size() == dim,
                    "w2_empirical: inconsistent dimensions");
        for (int j = 0; j < n; ++j) {
            double d2 = 0.0;
            const auto& pa = a[static_cast<size_t>(i)];
            const auto& pb = b[static_cast<size_t>(j)];
            for (size_t k = 0; k < dim; ++k) {
                const double d = pa[k] - pb[k];
                d2 += d * d;
            }
            cost[static_cast<size_t>(i) * n + j] = d2;
        }
    }
    const auto match = solve_assignment(cost, n);
    double mean_cost = 0.0;
    for (int i = 0; i < n; ++i) mean_cost += cost[static_cast<size_t>(i) * n + match[static_cast<size_t>(i)]];
    mean_cost /= n;
    return std::sqrt(std::max(0.0, mean_cost));
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    LFR_REQUIRE(es.info() == Eigen::Success, std::string(what) + ": eigendecomposition failed");
    const double lmax = std::max(1.0, es.eigenvalues().maxCoeff());
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) {
        LFR_REQUIRE(lam[i] > -1e-8 * lmax, std::string(what) + ": covariance not PSD");
        lam[i] = std::sqrt(std::max(0.0, lam[i]));
    }
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double w2_gaussian(const std::vector<double>& m1, const std::vector<double>& s1,
                   const std::vector<double>& m2, const std::vector<double>& s2, int dim) {
    LFR_REQUIRE(dim >= 1 && static_cast<int>(m1.size()) == dim && static_cast<int>(m2.size()) == dim &&
                    static_cast<int>(s1.size()) == dim * dim && static_cast<int>(s2.size()) == dim * dim,
                "w2_gaussian: dimension mismatch");
    using Eigen::MatrixXd;
    MatrixXd a = Eigen::Map<const MatrixXd>(s1.data(), dim, dim);
    MatrixXd b = Eigen::Map<const MatrixXd>(s2.data(), dim, dim);
    LFR_REQUIRE((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, a.cwiseAbs().maxCoeff()),
                "w2_gaussian: S1 not symmetric");
    LFR_REQUIRE((b - b.transpose()).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, b.cwiseAbs().maxCoeff()),
                "w2_gaussian: S2 not symmetric");
    a = 0.5 * (a + a.transpose());
    b = 0.5 * (b + b.transpose());

    const MatrixXd sqrt_b = psd_sqrt(b, "w2_gaussian");
    const MatrixXd inner = sqrt_b * a * sqrt_b;
    const MatrixXd sqrt_inner = psd_sqrt(0.5 * (inner + inner.transpose()), "w2_gaussian");

    double mean_term = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = m1[static_cast<size_t>(i)] - m2[static_cast<size_t>(i)];
        mean_term += d * d;
    }
    const double trace_term = a.trace() + b.trace() - 2.0 * sqrt_inner.trace();
    return std::sqrt(std::max(0.0, mean_term + trace_term));
}

GaussianFit fit_gaussian(const PointSet& pts, double shrinkage) {
    LFR_REQUIRE(pts.size() >= 2, "fit_gaussian: need at least 2 points");
    const int n = static_cast<int>(pts.size());
    const int dim = static_cast<int>(pts[0].size());
    GaussianFit fit;
    fit.dim = dim;
    fit.mean.assign(static_cast<size_t>(dim), 0.0);
    for (const auto& p : pts) {
        LFR_REQUIRE(static_cast<int>(p.size()) == dim, "fit_gaussian: inconsistent dimensions");
        for (int k = 0; k < dim; ++k) fit.mean[static_cast<size_t>(k)] += p[static_cast<size_t>(k)];
    }
    for (auto& m : fit.mean) m /= n;
    fit.cov.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (const auto& p : pts)
        for (int i = 0; i < dim; ++i) {
            const double di = p[static_cast<size_t>(i)] - fit.mean[static_cast<size_t>(i)];
            for (int j = i; j < dim; ++j)
                fit.cov[static_cast<size_t>(i) * dim + j] +=
                    di * (p[static_cast<size_t>(j)] - fit.mean[static_cast<size_t>(j)]);
        }
    for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
            fit.cov[static_cast<size_t>(i) * dim + j] /= (n - 1);
            fit.cov[static_cast<size_t>(j) * dim + i] = fit.cov[static_cast<size_t>(i) * dim + j];
        }
    if (n < dim + 1) {
        for (int i = 0; i < dim; ++i) fit.cov[static_cast<size_t>(i) * dim + i] += shrinkage;
        fit.regularized = true;
    }
    return fit;
}

double frechet(const PointSet& a, const PointSet& b) {
    const auto fa = fit_gaussian(a);
    const auto fb = fit_gaussian(b);
    LFR_REQUIRE(fa.dim == fb.dim, "frechet: dimension mismatch");
    const double w2 = w2_gaussian(fa.mean, fa.cov, fb.mean, fb.cov, fa.dim);
    return w2 * w2;
}

std::vector<double> flatten(const Image& im) {
    std::vector<double> out(im.v.size());
    for (size_t i = 0; i < im.v.size(); ++i) out[i] = static_cast<double>(im.v[i]);
    return out;
}

PointSet flatten_all(const std::vector<Image>& ims) {
    PointSet out;
    out.reserve(ims.size());
    for (const auto& im : ims) out.push_back(flatten(im));
    return out;
}

MetricsReport evaluate_pairs(const std::vector<Image>& ref, const std::vector<Image>& out) {
    LFR_REQUIRE(ref.size() == out.size() && !ref.empty(), "evaluate_pairs: paired lists required");
    MetricsReport r;
    r.n = static_cast<int>(ref.size());
    for (size_t i = 0; i < ref.size(); ++i) {
        r.mse += image_mse(ref[i], out[i]);
        r.psnr_db += psnr(ref[i], out[i]);
        r.ssim_val += ssim(ref[i], out[i]);
    }
    r.mse /= r.n;
    r.psnr_db /= r.n;
    r.ssim_val /= r.n;
    r.w2 = w2_empirical(flatten_all(ref), flatten_all(out));
    r.frechet_val = frechet(flatten_all(ref), flatten_all(out));
    return r;
}

}  // namespace lfr::metrics
