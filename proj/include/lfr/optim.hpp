#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfr/autograd.hpp"

namespace lfr {

// Named parameter collection. Names are unique, shapes immutable after
// creation; frozen parameters keep their value but never receive gradient.
template <typename T>
struct ParamSetT {
    std::vector<std::string> order;
    std::unordered_map<std::string, VarT<T>> vars;
    int64_t step_count = 0;

    VarT<T>& add(const std::string& name, TensorT<T> init, bool trainable = true) {
        LFR_REQUIRE(!vars.count(name), "paramset: duplicate name '" + name + "'");
        order.push_back(name);
        auto [it, ok] = vars.emplace(name, VarT<T>::leaf(std::move(init), trainable));
        return it->second;
    }

    VarT<T>& get(const std::string& name) {
        auto it = vars.find(name);
        LFR_REQUIRE(it != vars.end(), "paramset: unknown name '" + name + "'");
        return it->second;
    }

    const VarT<T>& get(const std::string& name) const {
        auto it = vars.find(name);
        LFR_REQUIRE(it != vars.end(), "paramset: unknown name '" + name + "'");
        return it->second;
    }

    bool has(const std::string& name) const { return vars.count(name) > 0; }
    size_t size() const { return order.size(); }

    void zero_grads() {
        for (auto& name : order) vars.at(name).zero_grad();
    }

    void freeze_all() {
        for (auto& name : order) vars.at(name).node()->requires_grad = false;
    }

    // Deep copy (fresh leaves, same trainability).
    ParamSetT clone() const {
        ParamSetT out;
        out.step_count = step_count;
        for (auto& name : order) {
            const auto& v = vars.at(name);
            out.add(name, v.value(), v.requires_grad());
        }
        return out;
    }

    // Concatenated little-endian bytes of all parameter values, for
    // byte-identity checks on frozen nets.
    std::vector<unsigned char> raw_bytes() const {
        std::vector<unsigned char> out;
        for (auto& name : order) {
            const auto& d = vars.at(name).value().data;
            const auto* p = reinterpret_cast<const unsigned char*>(d.data());
            out.insert(out.end(), p, p + d.size() * sizeof(T));
        }
        return out;
    }
};

// Gradient of a scalar-valued function of the parameters. Frozen (stop-
// gradient) parameters report a zero tensor.
template <typename T, typename LossFn>
std::map<std::string, TensorT<T>> grad(LossFn&& loss_fn, ParamSetT<T>& params) {
    params.zero_grads();
    VarT<T> loss = loss_fn(params);
    LFR_REQUIRE(loss.value().numel() == 1, "grad: loss must be scalar");
    backward(loss);
    std::map<std::string, TensorT<T>> out;
    for (auto& name : params.order) {
        auto& v = params.get(name);
        out[name] = v.has_grad() ? v.grad() : TensorT<T>(v.value().shape);
    }
    return out;
}

// AdamW with bias correction; weight decay is decoupled (multiplicative
// shrink, independent of the moment update).
template <typename T>
struct AdamWT {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.02;

    std::unordered_map<std::string, TensorT<T>> m, v;
    int64_t t = 0;

    void step(ParamSetT<T>& params, const std::map<std::string, TensorT<T>>& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& name : params.order) {
            auto& var = params.get(name);
            if (!var.requires_grad()) continue;
            auto git = grads.find(name);
            LFR_REQUIRE(git != grads.end(), "adamw: missing gradient for '" + name + "'");
            const auto& g = git->second;
            LFR_REQUIRE(g.same_shape(var.value()), "adamw: gradient shape mismatch for '" + name + "'");
            auto& mm = m.try_emplace(name, TensorT<T>(g.shape)).first->second;
            auto& vv = v.try_emplace(name, TensorT<T>(g.shape)).first->second;
            auto& w = var.mutable_value();
            for (size_t i = 0; i < w.data.size(); ++i) {
                const double gi = static_cast<double>(g.data[i]);
                const double mi = beta1 * static_cast<double>(mm.data[i]) + (1.0 - beta1) * gi;
                const double vi = beta2 * static_cast<double>(vv.data[i]) + (1.0 - beta2) * gi * gi;
                mm.data[i] = static_cast<T>(mi);
                vv.data[i] = static_cast<T>(vi);
                double wi = static_cast<double>(w.data[i]);
                wi *= (1.0 - lr * weight_decay);
                wi -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
                w.data[i] = static_cast<T>(wi);
            }
        }
        params.step_count = t;
    }
};

// shadow' = decay * shadow + (1 - decay) * live, elementwise.
template <typename T>
void ema_update(ParamSetT<T>& shadow, const ParamSetT<T>& live, double decay) {
    LFR_REQUIRE(decay >= 0.0 && decay < 1.0, "ema: decay must be in [0, 1)");
    LFR_REQUIRE(shadow.order == live.order, "ema: name sets differ");
    for (auto& name : shadow.order) {
        auto& s = shadow.get(name).mutable_value();
        const auto& l = live.get(name).value();
        LFR_REQUIRE(s.same_shape(l), "ema: shape mismatch for '" + name + "'");
        for (size_t i = 0; i < s.data.size(); ++i)
            s.data[i] = static_cast<T>(decay * static_cast<double>(s.data[i]) +
                                       (1.0 - decay) * static_cast<double>(l.data[i]));
    }
}

}  // namespace lfr
