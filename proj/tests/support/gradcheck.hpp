#pragma once

#include <functional>
#include <map>
#include <string>

#include "lfr/optim.hpp"

namespace lfr::testsupport {

// Central finite differences on the 64-bit engine. Independent oracle for
// every analytic gradient: perturbs each parameter element by +/-h and
// re-evaluates the loss.
template <typename LossFn>
std::map<std::string, TensorT<double>> fd_grad(LossFn&& loss_fn, ParamSetT<double>& params,
                                               double h = 1e-4) {
    std::map<std::string, TensorT<double>> out;
    for (auto& name : params.order) {
        auto& var = params.get(name);
        TensorT<double> g(var.value().shape);
        if (var.requires_grad()) {
            auto& w = var.mutable_value();
            for (size_t i = 0; i < w.data.size(); ++i) {
                const double orig = w.data[i];
                w.data[i] = orig + h;
                const double fp = loss_fn(params).value().data[0];
                w.data[i] = orig - h;
                const double fm = loss_fn(params).value().data[0];
                w.data[i] = orig;
                g.data[i] = (fp - fm) / (2.0 * h);
            }
        }
        out[name] = std::move(g);
    }
    return out;
}

// Relative error with a unit floor so that near-zero gradients compare
// absolutely.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;
    bool pass(double tol = 1e-4) const { return max_rel_err < tol; }
};

template <typename LossFn>
GradCheckResult gradcheck(LossFn&& loss_fn, ParamSetT<double>& params, double h = 1e-4) {
    auto analytic = lfr::grad(loss_fn, params);
    auto fd = fd_grad(loss_fn, params, h);
    GradCheckResult res;
    for (auto& [name, ga] : analytic) {
        const auto& gf = fd.at(name);
        for (size_t i = 0; i < ga.data.size(); ++i) {
            const double e = rel_err(ga.data[i], gf.data[i]);
            if (e > res.max_rel_err) {
                res.max_rel_err = e;
                res.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

inline TensorT<double> random_tensor(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
    TensorT<double> t(shape);
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

template <typename T>
TensorT<T> random_tensor_t(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
    TensorT<T> t(shape);
    for (auto& v : t.data) v = static_cast<T>(scale * rng.normal());
    return t;
}

}  // namespace lfr::testsupport
