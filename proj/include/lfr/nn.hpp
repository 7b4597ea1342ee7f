#pragma once

#include "lfr/checkpoint.hpp"
#include "lfr/optim.hpp"

namespace lfr::nn {

// Uniform init with torch-style bound 1/sqrt(fan_in).
template <typename T>
TensorT<T> uniform_init(const std::vector<int>& shape, int fan_in, Rng& rng) {
    TensorT<T> t(shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

// Conv layer whose weights live in a ParamSet. attach() binds to existing
// entries when present (checkpoint load) and initializes them otherwise.
template <typename T>
struct Conv2dLayer {
    VarT<T> w, b;
    int stride = 1, pad = 0;

    static Conv2dLayer attach(ParamSetT<T>& ps, const std::string& name, int in_ch, int out_ch,
                              int k, int stride, int pad, Rng& rng, bool zero_init = false) {
        Conv2dLayer l;
        l.stride = stride;
        l.pad = pad;
        const int fan_in = in_ch * k * k;
        if (ps.has(name + ".w")) {
            l.w = ps.get(name + ".w");
            l.b = ps.get(name + ".b");
        } else if (zero_init) {
            l.w = ps.add(name + ".w", TensorT<T>({out_ch, in_ch, k, k}));
            l.b = ps.add(name + ".b", TensorT<T>({out_ch}));
        } else {
            l.w = ps.add(name + ".w", uniform_init<T>({out_ch, in_ch, k, k}, fan_in, rng));
            l.b = ps.add(name + ".b", uniform_init<T>({out_ch}, fan_in, rng));
        }
        return l;
    }

    VarT<T> operator()(const VarT<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

// 3x3 conv followed by a 1x1 conv with no nonlinearity between, hidden width
// expanded 4x; foldable into a single 3x3 conv for inference.
template <typename T>
struct CollapsibleConv {
    VarT<T> w3, b3, w1, b1;
    int stride = 1, pad = 1;
    int expansion = 4;

    static CollapsibleConv attach(ParamSetT<T>& ps, const std::string& name, int in_ch, int out_ch,
                                  int stride, Rng& rng, bool zero_out = false, int expansion = 4) {
        CollapsibleConv l;
        l.stride = stride;
        l.expansion = expansion;
        const int hidden = out_ch * expansion;
        if (ps.has(name + ".w3")) {
            l.w3 = ps.get(name + ".w3");
            l.b3 = ps.get(name + ".b3");
            l.w1 = ps.get(name + ".w1");
            l.b1 = ps.get(name + ".b1");
            return l;
        }
        l.w3 = ps.add(name + ".w3", uniform_init<T>({hidden, in_ch, 3, 3}, in_ch * 9, rng));
        l.b3 = ps.add(name + ".b3", uniform_init<T>({hidden}, in_ch * 9, rng));
        if (zero_out) {
            l.w1 = ps.add(name + ".w1", TensorT<T>({out_ch, hidden, 1, 1}));
            l.b1 = ps.add(name + ".b1", TensorT<T>({out_ch}));
        } else {
            l.w1 = ps.add(name + ".w1", uniform_init<T>({out_ch, hidden, 1, 1}, hidden, rng));
            l.b1 = ps.add(name + ".b1", uniform_init<T>({out_ch}, hidden, rng));
        }
        return l;
    }

    VarT<T> operator()(const VarT<T>& x) const {
        return conv2d(conv2d(x, w3, b3, stride, pad), w1, b1, 1, 0);
    }
};

// Fold the pair into one 3x3 kernel + bias: W[o,i,.,.] = sum_h w1[o,h] *
// w3[h,i,.,.], b[o] = sum_h w1[o,h] * b3[h] + b1[o].
template <typename T>
std::pair<TensorT<T>, TensorT<T>> collapse(const CollapsibleConv<T>& blk) {
    const auto& w3 = blk.w3.value();
    const auto& w1 = blk.w1.value();
    const int hidden = w3.dim(0), in_ch = w3.dim(1), kh = w3.dim(2), kw = w3.dim(3);
    const int out_ch = w1.dim(0);
    LFR_REQUIRE(w1.dim(1) == hidden && w1.dim(2) == 1 && w1.dim(3) == 1,
                "collapse: incompatible block shapes");
    TensorT<T> w({out_ch, in_ch, kh, kw});
    TensorT<T> b({out_ch});
    for (int o = 0; o < out_ch; ++o) {
        for (int i = 0; i < in_ch; ++i)
            for (int y = 0; y < kh; ++y)
                for (int x = 0; x < kw; ++x) {
                    double acc = 0.0;
                    for (int h = 0; h < hidden; ++h)
                        acc += static_cast<double>(w1[w1.at4(o, h, 0, 0)]) *
                               static_cast<double>(w3[w3.at4(h, i, y, x)]);
                    w[w.at4(o, i, y, x)] = static_cast<T>(acc);
                }
        double acc = static_cast<double>(blk.b1.value()[o]);
        for (int h = 0; h < hidden; ++h)
            acc += static_cast<double>(w1[w1.at4(o, h, 0, 0)]) *
                   static_cast<double>(blk.b3.value()[h]);
        b[o] = static_cast<T>(acc);
    }
    return {std::move(w), std::move(b)};
}

// ---------------------------------------------------------------------------
// Autoencoder: 2 convs per side, stride-2 twice down, sub-pixel shuffle up.
// ---------------------------------------------------------------------------

struct AeSpec {
    int img_channels = 1;
    int width = 16;
    int latent_channels = 4;
    bool linear = false;  // drop activations (identity-capable configuration)
    static constexpr int spatial_factor = 4;
};

template <typename T>
struct EncoderNet {
    Conv2dLayer<T> c1, c2;
    bool linear = false;

    static EncoderNet attach(ParamSetT<T>& ps, const std::string& prefix, const AeSpec& spec,
                             Rng& rng) {
        EncoderNet e;
        e.linear = spec.linear;
        e.c1 = Conv2dLayer<T>::attach(ps, prefix + "c1", spec.img_channels, spec.width, 3, 2, 1, rng);
        e.c2 = Conv2dLayer<T>::attach(ps, prefix + "c2", spec.width, spec.latent_channels, 3, 2, 1, rng);
        return e;
    }

    VarT<T> operator()(const VarT<T>& x) const {
        auto h = c1(x);
        if (!linear) h = silu(h);
        return c2(h);
    }
};

template <typename T>
struct DecoderNet {
    Conv2dLayer<T> c1, c2;
    bool linear = false;

    static DecoderNet attach(ParamSetT<T>& ps, const std::string& prefix, const AeSpec& spec,
                             Rng& rng) {
        DecoderNet d;
        d.linear = spec.linear;
        d.c1 = Conv2dLayer<T>::attach(ps, prefix + "c1", spec.latent_channels, 4 * spec.width, 3, 1, 1, rng);
        d.c2 = Conv2dLayer<T>::attach(ps, prefix + "c2", spec.width, 4 * spec.img_channels, 3, 1, 1, rng);
        return d;
    }

    VarT<T> operator()(const VarT<T>& z) const {
        auto h = depth_to_space(c1(z), 2);
        if (!linear) h = silu(h);
        return depth_to_space(c2(h), 2);
    }
};

// Frozen latent space once trained. identity=true bypasses the nets entirely
// (pixel-space pipeline variant).
template <typename T>
struct AutoEncoderT {
    AeSpec spec;
    bool identity = false;
    ParamSetT<T> params;
    EncoderNet<T> enc;
    DecoderNet<T> dec;
    double delta_ed = -1.0;  // held-out reconstruction MSE, set by training

    static AutoEncoderT create(const AeSpec& spec, uint64_t seed) {
        AutoEncoderT ae;
        ae.spec = spec;
        Rng rng(Rng::derive(seed, 0xAE00ULL));
        ae.enc = EncoderNet<T>::attach(ae.params, "enc.", spec, rng);
        ae.dec = DecoderNet<T>::attach(ae.params, "dec.", spec, rng);
        return ae;
    }

    static AutoEncoderT make_identity(int img_channels) {
        AutoEncoderT ae;
        ae.identity = true;
        ae.spec.img_channels = img_channels;
        ae.spec.latent_channels = img_channels;
        ae.delta_ed = 0.0;
        return ae;
    }

    int latent_channels() const { return identity ? spec.img_channels : spec.latent_channels; }
    int spatial_factor() const { return identity ? 1 : AeSpec::spatial_factor; }

    VarT<T> encode(const VarT<T>& x) const { return identity ? x : enc(x); }
    VarT<T> decode(const VarT<T>& z) const { return identity ? z : dec(z); }

    void freeze() { params.freeze_all(); }

    void save(const std::string& path) const {
        auto ps = params.clone();
        ps.add("meta.img_channels", TensorT<T>::scalar(static_cast<T>(spec.img_channels)));
        ps.add("meta.width", TensorT<T>::scalar(static_cast<T>(spec.width)));
        ps.add("meta.latent_channels", TensorT<T>::scalar(static_cast<T>(spec.latent_channels)));
        ps.add("meta.linear", TensorT<T>::scalar(static_cast<T>(spec.linear ? 1 : 0)));
        ps.add("meta.spatial_factor", TensorT<T>::scalar(static_cast<T>(AeSpec::spatial_factor)));
        ps.add("meta.delta_ed", TensorT<T>::scalar(static_cast<T>(delta_ed)));
        save_params(ps, path);
    }

    static AutoEncoderT load(const std::string& path) {
        auto ps = load_params<T>(path);
        AutoEncoderT ae;
        ae.spec.img_channels = static_cast<int>(ps.get("meta.img_channels").value().data[0]);
        ae.spec.width = static_cast<int>(ps.get("meta.width").value().data[0]);
        ae.spec.latent_channels = static_cast<int>(ps.get("meta.latent_channels").value().data[0]);
        ae.spec.linear = ps.get("meta.linear").value().data[0] != T(0);
        ae.delta_ed = static_cast<double>(ps.get("meta.delta_ed").value().data[0]);
        for (auto& name : ps.order)
            if (name.rfind("meta.", 0) != 0) ae.params.add(name, ps.get(name).value());
        Rng rng(0);
        ae.enc = EncoderNet<T>::attach(ae.params, "enc.", ae.spec, rng);
        ae.dec = DecoderNet<T>::attach(ae.params, "dec.", ae.spec, rng);
        return ae;
    }
};

// ---------------------------------------------------------------------------
// Coarse estimator: trainable encoder copy (omega) + residual dense blocks
// with a cascade skip (phi).
// ---------------------------------------------------------------------------

template <typename T>
struct ResidualDenseBlock {
    Conv2dLayer<T> d1, d2, d3, fuse;

    static ResidualDenseBlock attach(ParamSetT<T>& ps, const std::string& prefix, int width,
                                     int growth, Rng& rng) {
        ResidualDenseBlock b;
        b.d1 = Conv2dLayer<T>::attach(ps, prefix + "d1", width, growth, 3, 1, 1, rng);
        b.d2 = Conv2dLayer<T>::attach(ps, prefix + "d2", width + growth, growth, 3, 1, 1, rng);
        b.d3 = Conv2dLayer<T>::attach(ps, prefix + "d3", width + 2 * growth, growth, 3, 1, 1, rng);
        b.fuse = Conv2dLayer<T>::attach(ps, prefix + "fuse", width + 3 * growth, width, 3, 1, 1, rng);
        return b;
    }

    VarT<T> operator()(const VarT<T>& x) const {
        auto h1 = silu(d1(x));
        auto cat1 = concat_channels(x, h1);
        auto h2 = silu(d2(cat1));
        auto cat2 = concat_channels(cat1, h2);
        auto h3 = silu(d3(cat2));
        auto f = fuse(concat_channels(cat2, h3));
        return add(x, mul_scalar(f, T(0.2)));
    }
};

struct CoarseSpec {
    int width = 24;
    int growth = 12;
    int blocks = 3;
};

template <typename T>
struct CoarseEstimatorT {
    bool has_encoder = false;  // pixel-space variant drops the encoder copy
    EncoderNet<T> enc_lq;      // omega
    Conv2dLayer<T> entry, exit;
    std::vector<ResidualDenseBlock<T>> rdb;  // phi

    // enc_lq ("omega.*") is initialized from the frozen encoder's weights.
    static CoarseEstimatorT attach(ParamSetT<T>& ps, const AutoEncoderT<T>& ae,
                                   const CoarseSpec& spec, uint64_t seed) {
        CoarseEstimatorT ce;
        Rng rng(Rng::derive(seed, 0xC0A53ULL));
        if (!ae.identity) {
            ce.has_encoder = true;
            if (!ps.has("omega.c1.w"))
                for (auto& name : ae.params.order)
                    if (name.rfind("enc.", 0) == 0)
                        ps.add("omega." + name.substr(4), ae.params.get(name).value());
            ce.enc_lq = EncoderNet<T>::attach(ps, "omega.", ae.spec, rng);
        }
        const int lc = ae.latent_channels();
        ce.entry = Conv2dLayer<T>::attach(ps, "phi.entry", lc, spec.width, 3, 1, 1, rng);
        ce.rdb.resize(static_cast<size_t>(spec.blocks));
        for (int i = 0; i < spec.blocks; ++i)
            ce.rdb[static_cast<size_t>(i)] = ResidualDenseBlock<T>::attach(
                ps, "phi.rdb" + std::to_string(i) + ".", spec.width, spec.growth, rng);
        ce.exit = Conv2dLayer<T>::attach(ps, "phi.exit", spec.width, lc, 3, 1, 1, rng, true);
        return ce;
    }

    // y (image tensor) -> coarse latent estimate
    VarT<T> operator()(const VarT<T>& y) const {
        VarT<T> z = has_encoder ? enc_lq(y) : y;
        auto h0 = entry(z);
        auto h = h0;
        for (const auto& b : rdb) h = b(h);
        auto fused = add(h0, h);  // cascade skip
        return add(z, exit(fused));
    }
};

}  // namespace lfr::nn
