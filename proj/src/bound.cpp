#include "lfr/bound.hpp"

#include <sstream>

#include "lfr/latent.hpp"
#include "lfr/restore.hpp"

namespace lfr::metrics {

namespace {

double sq_norm_diff(const std::vector<real_t>& a, const std::vector<real_t>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

TensorT<real_t> pick_sample(const TensorT<real_t>& batch, int n) {
    const int64_t per = batch.numel() / batch.dim(0);
    TensorT<real_t> out({1, batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy_n(batch.data.begin() + n * per, per, out.data.begin());
    return out;
}

}  // namespace

BoundReport verify_bound(const nn::AutoEncoderT<real_t>& ae, const nn::VectorFieldT<real_t>& field,
                         const std::vector<Image>& hq, const TensorT<real_t>& z0,
                         const VerifyBoundConfig& vc) {
    const int n = static_cast<int>(hq.size());
    LFR_REQUIRE(n >= 200, "verify_bound: refusing to run on fewer than 200 pairs");
    LFR_REQUIRE(n <= 4096, "verify_bound: at most 4096 pairs (exact matching)");
    LFR_REQUIRE(z0.rank() == 4 && z0.dim(0) == n, "verify_bound: one initial latent per pair");
    NoGradGuard ng;
    Rng rng(Rng::derive(vc.seed, 0xB0B0ULL));

    BoundReport rep;
    rep.n_pairs = n;

    // Latent targets z1 = E(x) and the encoder-decoder error.
    auto x_all = latent::to_batch<real_t>(hq);
    auto z1_all = ae.encode(VarT<real_t>::constant(x_all)).value();
    auto rec_all = ae.decode(VarT<real_t>::constant(z1_all)).value();
    const int64_t img_per = x_all.numel() / n;
    const int64_t lat_per = z1_all.numel() / n;
    double ed = 0.0;
    for (int i = 0; i < n; ++i) {
        double e = 0.0;
        for (int64_t k = 0; k < img_per; ++k) {
            const double d = static_cast<double>(rec_all.data[i * img_per + k]) -
                             static_cast<double>(x_all.data[i * img_per + k]);
            e += d * d;
        }
        ed += e;
    }
    rep.delta_ed = ed / n;

    // Monte-Carlo velocity residual against the straight-path proxy.
    double dv = 0.0;
    for (int i = 0; i < n; ++i) {
        auto zi0 = pick_sample(z0, i);
        auto zi1 = pick_sample(z1_all, i);
        TensorT<real_t> vstar(zi0.shape);
        for (int64_t k = 0; k < lat_per; ++k)
            vstar.data[static_cast<size_t>(k)] =
                zi1.data[static_cast<size_t>(k)] -
                static_cast<real_t>((1.0 - vc.sigma_min) * static_cast<double>(zi0.data[static_cast<size_t>(k)]));
        for (int d = 0; d < vc.t_draws; ++d) {
            const double t = rng.uniform();
            TensorT<real_t> zt(zi0.shape);
            for (int64_t k = 0; k < lat_per; ++k)
                zt.data[static_cast<size_t>(k)] = static_cast<real_t>(
                    t * zi1.data[static_cast<size_t>(k)] +
                    (1.0 - (1.0 - vc.sigma_min) * t) * zi0.data[static_cast<size_t>(k)]);
            auto vhat = field.eval(VarT<real_t>::constant(zt), {static_cast<real_t>(t)}).value();
            dv += sq_norm_diff(vhat.data, vstar.data);
        }
    }
    rep.delta_v = dv / (static_cast<double>(n) * vc.t_draws);

    // Sampled Lipschitz constants (lower bounds of the true ones).
    {
        std::vector<TensorT<real_t>> pool;
        std::vector<TensorT<real_t>> decoded;
        const int pool_n = std::min(n, 256);
        for (int i = 0; i < pool_n; ++i) {
            pool.push_back(pick_sample(i % 2 ? z0 : z1_all, i));
            decoded.push_back(ae.decode(VarT<real_t>::constant(pool.back())).value());
        }
        auto ratio_dec = [&](const TensorT<real_t>& za, const TensorT<real_t>& zb,
                             const TensorT<real_t>& da, const TensorT<real_t>& db) {
            const double dz = sq_norm_diff(za.data, zb.data);
            if (dz <= 0.0) return 0.0;
            return std::sqrt(sq_norm_diff(da.data, db.data) / dz);
        };
        for (int p = 0; p < vc.lip_pairs; ++p) {
            const int i = static_cast<int>(rng.uniform_int(0, pool_n - 1));
            const int j = static_cast<int>(rng.uniform_int(0, pool_n - 1));
            if (i == j) continue;
            rep.lip_decoder = std::max(rep.lip_decoder,
                                       ratio_dec(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)],
                                                 decoded[static_cast<size_t>(i)], decoded[static_cast<size_t>(j)]));
        }
        for (int p = 0; p < vc.nearby_points; ++p) {
            const int i = static_cast<int>(rng.uniform_int(0, pool_n - 1));
            auto zp = pool[static_cast<size_t>(i)];
            for (auto& v : zp.data) v += static_cast<real_t>(vc.perturb * rng.normal());
            auto dp = ae.decode(VarT<real_t>::constant(zp)).value();
            rep.lip_decoder = std::max(
                rep.lip_decoder, ratio_dec(pool[static_cast<size_t>(i)], zp, decoded[static_cast<size_t>(i)], dp));
        }

        std::vector<TensorT<real_t>> vfield;
        std::vector<real_t> tpool;
        for (int i = 0; i < pool_n; ++i) {
            const auto t = static_cast<real_t>(rng.uniform());
            tpool.push_back(t);
            vfield.push_back(field.eval(VarT<real_t>::constant(pool[static_cast<size_t>(i)]), {t}).value());
        }
        for (int p = 0; p < vc.lip_pairs; ++p) {
            const int i = static_cast<int>(rng.uniform_int(0, pool_n - 1));
            const int j = static_cast<int>(rng.uniform_int(0, pool_n - 1));
            if (i == j) continue;
            // same-t pairs only: Lipschitz constant is in z
            auto vj = field.eval(VarT<real_t>::constant(pool[static_cast<size_t>(j)]),
                                 {tpool[static_cast<size_t>(i)]})
                          .value();
            const double dz = sq_norm_diff(pool[static_cast<size_t>(i)].data, pool[static_cast<size_t>(j)].data);
            if (dz > 0.0)
                rep.lip_field = std::max(
                    rep.lip_field, std::sqrt(sq_norm_diff(vfield[static_cast<size_t>(i)].data, vj.data) / dz));
        }
        for (int p = 0; p < vc.nearby_points; ++p) {
            const int i = static_cast<int>(rng.uniform_int(0, pool_n - 1));
            auto zp = pool[static_cast<size_t>(i)];
            for (auto& v : zp.data) v += static_cast<real_t>(vc.perturb * rng.normal());
            auto vp = field.eval(VarT<real_t>::constant(zp), {tpool[static_cast<size_t>(i)]}).value();
            const double dz = sq_norm_diff(pool[static_cast<size_t>(i)].data, zp.data);
            if (dz > 0.0)
                rep.lip_field = std::max(
                    rep.lip_field, std::sqrt(sq_norm_diff(vfield[static_cast<size_t>(i)].data, vp.data) / dz));
        }
    }
    rep.constant_c = rep.lip_decoder * std::exp(0.5 + rep.lip_field);

    // lhs: exact W2 between decoded solved latents and the HQ images.
    auto zhat = restore::euler_solve(z0, field, vc.euler_steps);
    auto xhat = ae.decode(VarT<real_t>::constant(zhat)).value();
    PointSet restored, reference;
    for (int i = 0; i < n; ++i) {
        std::vector<double> ri(static_cast<size_t>(img_per)), hi(static_cast<size_t>(img_per));
        for (int64_t k = 0; k < img_per; ++k) {
            ri[static_cast<size_t>(k)] = static_cast<double>(xhat.data[i * img_per + k]);
            hi[static_cast<size_t>(k)] = static_cast<double>(x_all.data[i * img_per + k]);
        }
        restored.push_back(std::move(ri));
        reference.push_back(std::move(hi));
    }
    rep.lhs = w2_empirical(restored, reference);
    rep.rhs = std::sqrt(rep.delta_ed) + rep.constant_c * std::sqrt(rep.delta_v);
    rep.holds = rep.lhs <= rep.rhs;
    return rep;
}

std::string bound_csv_header() {
    return "n_pairs,delta_ed,delta_v,lip_decoder,lip_field,constant_c,lhs,rhs,holds";
}

std::string bound_csv_row(const BoundReport& r) {
    std::ostringstream os;
    os.precision(9);
    os << r.n_pairs << "," << r.delta_ed << "," << r.delta_v << "," << r.lip_decoder << ","
       << r.lip_field << "," << r.constant_c << "," << r.lhs << "," << r.rhs << ","
       << (r.holds ? 1 : 0);
    return os.str();
}

}  // namespace lfr::metrics
