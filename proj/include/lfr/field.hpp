#pragma once

#include "lfr/nn.hpp"

namespace lfr::nn {

// Velocity field v(z, t); t enters as one constant channel per sample.
template <typename T>
struct VectorFieldT {
    virtual ~VectorFieldT() = default;
    virtual VarT<T> eval(const VarT<T>& z, const std::vector<T>& t) const = 0;
};

struct UNetSpec {
    int channels = 4;
    int levels = 3;
    std::vector<int> widths = {16, 32, 64};
};

// Shared U-Net topology walk; `apply(i, x)` runs conv block i. Block order:
// in, (body_l, down_l)*, mid, (up_l, merge_l reversed)*, out.
template <typename T, typename Apply>
VarT<T> unet_run(const UNetSpec& spec, Apply&& apply, const VarT<T>& z, const std::vector<T>& t) {
    const int L = spec.levels;
    int i = 0;
    auto h = silu(apply(i++, concat_scalar_channel(z, t)));
    std::vector<VarT<T>> skips;
    for (int l = 0; l < L - 1; ++l) {
        h = silu(apply(i++, h));
        skips.push_back(h);
        h = silu(apply(i++, h));
    }
    h = silu(apply(i++, h));
    for (int l = L - 2; l >= 0; --l) {
        h = silu(apply(i++, resize_nearest(h, 2)));
        h = concat_channels(h, skips[static_cast<size_t>(l)]);
        h = silu(apply(i++, h));
    }
    return apply(i, h);
}

inline int unet_block_count(const UNetSpec& spec) { return 4 * (spec.levels - 1) + 3; }

// Conv-only U-Net built from collapsible 3x3 blocks (4x hidden expansion),
// final block zero-initialized so the field starts at zero.
template <typename T>
struct UNetField : VectorFieldT<T> {
    UNetSpec spec;
    std::vector<CollapsibleConv<T>> blocks;

    static UNetField attach(ParamSetT<T>& ps, const UNetSpec& spec, uint64_t seed) {
        LFR_REQUIRE(spec.levels >= 1 && static_cast<int>(spec.widths.size()) >= spec.levels,
                    "unet: need a width per level");
        UNetField f;
        f.spec = spec;
        Rng rng(Rng::derive(seed, 0xF1E1DULL));
        auto cc = [&](const std::string& name, int ic, int oc, int stride, bool zero = false) {
            f.blocks.push_back(CollapsibleConv<T>::attach(ps, "theta." + name, ic, oc, stride, rng, zero));
        };
        const auto& w = spec.widths;
        cc("in", spec.channels + 1, w[0], 1);
        for (int l = 0; l < spec.levels - 1; ++l) {
            cc("body" + std::to_string(l), w[l], w[l], 1);
            cc("down" + std::to_string(l), w[l], w[l + 1], 2);
        }
        cc("mid", w[spec.levels - 1], w[spec.levels - 1], 1);
        for (int l = spec.levels - 2; l >= 0; --l) {
            cc("up" + std::to_string(l), w[l + 1], w[l], 1);
            cc("merge" + std::to_string(l), 2 * w[l], w[l], 1);
        }
        cc("out", w[0], spec.channels, 1, /*zero=*/true);
        return f;
    }

    VarT<T> eval(const VarT<T>& z, const std::vector<T>& t) const override {
        return unet_run(
            spec, [this](int i, const VarT<T>& x) { return blocks[static_cast<size_t>(i)](x); }, z, t);
    }
};

// Inference form: every collapsible pair folded to a single 3x3 conv.
template <typename T>
struct CollapsedField : VectorFieldT<T> {
    UNetSpec spec;
    std::vector<int> strides;
    std::vector<std::pair<VarT<T>, VarT<T>>> wb;

    explicit CollapsedField(const UNetField<T>& src) {
        spec = src.spec;
        for (const auto& blk : src.blocks) {
            strides.push_back(blk.stride);
            auto [w, b] = collapse(blk);
            wb.emplace_back(VarT<T>::constant(std::move(w)), VarT<T>::constant(std::move(b)));
        }
    }

    VarT<T> eval(const VarT<T>& z, const std::vector<T>& t) const override {
        return unet_run(
            spec,
            [this](int i, const VarT<T>& x) {
                const auto& [w, b] = wb[static_cast<size_t>(i)];
                return conv2d(x, w, b, strides[static_cast<size_t>(i)], 1);
            },
            z, t);
    }
};

}  // namespace lfr::nn
