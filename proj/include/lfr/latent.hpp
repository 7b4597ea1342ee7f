#pragma once

#include "lfr/image.hpp"
#include "lfr/nn.hpp"

namespace lfr::latent {

// images (HWC) -> NCHW batch tensor
template <typename T>
TensorT<T> to_batch(const std::vector<Image>& imgs, const std::vector<int>& idx) {
    LFR_REQUIRE(!idx.empty(), "to_batch: empty index list");
    const Image& first = imgs[static_cast<size_t>(idx[0])];
    TensorT<T> t({static_cast<int>(idx.size()), first.c, first.h, first.w});
    for (size_t n = 0; n < idx.size(); ++n) {
        const Image& im = imgs[static_cast<size_t>(idx[n])];
        LFR_REQUIRE(im.same_shape(first), "to_batch: inhomogeneous image shapes");
        for (int c = 0; c < im.c; ++c)
            for (int y = 0; y < im.h; ++y)
                for (int x = 0; x < im.w; ++x)
                    t[t.at4(static_cast<int>(n), c, y, x)] = static_cast<T>(im.at(y, x, c));
    }
    return t;
}

template <typename T>
TensorT<T> to_batch(const std::vector<Image>& imgs) {
    std::vector<int> idx(imgs.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return to_batch<T>(imgs, idx);
}

template <typename T>
Image from_batch(const TensorT<T>& t, int n) {
    LFR_REQUIRE(t.rank() == 4 && n >= 0 && n < t.dim(0), "from_batch: bad index");
    Image im(t.dim(2), t.dim(3), t.dim(1));
    for (int c = 0; c < im.c; ++c)
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x)
                im.at(y, x, c) = static_cast<float>(t[t.at4(n, c, y, x)]);
    return im;
}

struct AeTrainConfig {
    nn::AeSpec spec;
    int epochs = 40;
    int batch = 64;
    double lr = 2e-3;
    double weight_decay = 0.0;
    double holdout_frac = 0.125;
    uint64_t seed = 0;
};

// Held-out reconstruction MSE (unclipped decode), the encoder-decoder error
// estimate.
template <typename T>
double evaluate_delta_ed(const nn::AutoEncoderT<T>& ae, const std::vector<Image>& imgs) {
    LFR_REQUIRE(!imgs.empty(), "evaluate_delta_ed: empty dataset");
    NoGradGuard ng;
    double acc = 0.0;
    for (size_t i = 0; i < imgs.size(); ++i) {
        auto x = VarT<T>::constant(to_batch<T>(imgs, {static_cast<int>(i)}));
        auto rec = ae.decode(ae.encode(x));
        const auto& a = x.value().data;
        const auto& b = rec.value().data;
        double e = 0.0;
        for (size_t k = 0; k < a.size(); ++k) {
            const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
            e += d * d;
        }
        acc += e / static_cast<double>(a.size());
    }
    return acc / static_cast<double>(imgs.size());
}

// Minimizes mean ||D(E(x)) - x||^2 with AdamW; returns the held-out error
// estimate. On divergence the last epoch-end parameters are restored before
// the numeric_error is thrown.
template <typename T>
double train_autoencoder(nn::AutoEncoderT<T>& ae, const std::vector<Image>& hq,
                         const AeTrainConfig& cfg) {
    LFR_REQUIRE(!hq.empty(), "train_autoencoder: empty dataset");
    LFR_REQUIRE(!ae.identity, "train_autoencoder: identity autoencoder has no parameters");
    const int n_hold = std::max(1, static_cast<int>(std::lround(cfg.holdout_frac * hq.size())));
    LFR_REQUIRE(static_cast<size_t>(n_hold) < hq.size(), "train_autoencoder: holdout swallows dataset");
    std::vector<Image> train(hq.begin(), hq.end() - n_hold);
    std::vector<Image> hold(hq.end() - n_hold, hq.end());

    AdamWT<T> opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    Rng rng(Rng::derive(cfg.seed, 0xAE77ULL));
    std::vector<int> idx(train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);

    auto snapshot = ae.params.clone();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with our deterministic rng
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
        for (size_t off = 0; off < idx.size(); off += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(idx.size(), off + static_cast<size_t>(cfg.batch));
            std::vector<int> bidx(idx.begin() + static_cast<std::ptrdiff_t>(off),
                                  idx.begin() + static_cast<std::ptrdiff_t>(end));
            auto x = VarT<T>::constant(to_batch<T>(train, bidx));
            auto loss = mean_sq_diff(ae.decode(ae.encode(x)), x);
            const double lv = static_cast<double>(loss.value().data[0]);
            if (!std::isfinite(lv)) {
                for (auto& name : ae.params.order)
                    ae.params.get(name).mutable_value() = snapshot.get(name).value();
                throw numeric_error("train_autoencoder: loss diverged at epoch " +
                                    std::to_string(epoch));
            }
            ae.params.zero_grads();
            backward(loss);
            std::map<std::string, TensorT<T>> grads;
            for (auto& name : ae.params.order) {
                auto& v = ae.params.get(name);
                grads[name] = v.has_grad() ? v.grad() : TensorT<T>(v.value().shape);
            }
            opt.step(ae.params, grads);
        }
        snapshot = ae.params.clone();
    }
    ae.delta_ed = evaluate_delta_ed(ae, hold);
    return ae.delta_ed;
}

}  // namespace lfr::latent
