#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "lfr/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lfr {

// ---------------------------------------------------------------------------
// Graph node / variable handle
// ---------------------------------------------------------------------------

template <typename T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::function<void(NodeT<T>&)> backfn;

    void ensure_grad() {
        if (!grad_ready) {
            grad = TensorT<T>(value.shape);
            grad_ready = true;
        }
    }
};

template <typename T>
class VarT {
  public:
    VarT() = default;
    explicit VarT(std::shared_ptr<NodeT<T>> n) : node_(std::move(n)) {}

    static VarT constant(TensorT<T> t) {
        auto n = std::make_shared<NodeT<T>>();
        n->value = std::move(t);
        return VarT(n);
    }

    static VarT leaf(TensorT<T> t, bool trainable = true) {
        auto n = std::make_shared<NodeT<T>>();
        n->value = std::move(t);
        n->requires_grad = trainable;
        return VarT(n);
    }

    bool defined() const { return node_ != nullptr; }
    const TensorT<T>& value() const { return node_->value; }
    TensorT<T>& mutable_value() { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }
    const TensorT<T>& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad_ready; }
    void zero_grad() {
        node_->grad_ready = false;
        node_->grad = TensorT<T>();
    }
    std::shared_ptr<NodeT<T>> node() const { return node_; }

  private:
    std::shared_ptr<NodeT<T>> node_;
};

// ---------------------------------------------------------------------------
// Autograd mode + debug screening
// ---------------------------------------------------------------------------

inline thread_local bool g_autograd_enabled = true;
inline thread_local bool g_debug_checks = false;

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(g_autograd_enabled) { g_autograd_enabled = false; }
    ~NoGradGuard() { g_autograd_enabled = prev; }
};

inline void set_debug_checks(bool on) { g_debug_checks = on; }
inline bool debug_checks() { return g_debug_checks; }

namespace detail {

template <typename T>
VarT<T> make_op(const char* name, TensorT<T> value, std::vector<VarT<T>> inputs,
                std::function<void(NodeT<T>&)> backfn) {
    if (g_debug_checks && !value.all_finite())
        throw numeric_error(std::string(name) + ": non-finite output");
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    bool need = false;
    if (g_autograd_enabled)
        for (const auto& in : inputs) need = need || in.requires_grad();
    if (need) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node());
        n->backfn = std::move(backfn);
    }
    return VarT<T>(n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise + scalar primitives
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    LFR_REQUIRE(a.value().same_shape(b.value()), "add: shape mismatch");
    TensorT<T> out(a.value().shape);
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    for (size_t i = 0; i < av.size(); ++i) out.data[i] = av[i] + bv[i];
    return detail::make_op<T>("add", std::move(out), {a, b}, [](NodeT<T>& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *n.parents[k];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
        }
    });
}

template <typename T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
    LFR_REQUIRE(a.value().same_shape(b.value()), "sub: shape mismatch");
    TensorT<T> out(a.value().shape);
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    for (size_t i = 0; i < av.size(); ++i) out.data[i] = av[i] - bv[i];
    return detail::make_op<T>("sub", std::move(out), {a, b}, [](NodeT<T>& n) {
        if (n.parents[0]->requires_grad) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& p = *n.parents[1];
            p.ensure_grad();
            for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] -= n.grad.data[i];
        }
    });
}

template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    LFR_REQUIRE(a.value().same_shape(b.value()), "mul: shape mismatch");
    TensorT<T> out(a.value().shape);
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    for (size_t i = 0; i < av.size(); ++i) out.data[i] = av[i] * bv[i];
    return detail::make_op<T>("mul", std::move(out), {a, b}, [](NodeT<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < pa.grad.data.size(); ++i)
                pa.grad.data[i] += n.grad.data[i] * pb.value.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < pb.grad.data.size(); ++i)
                pb.grad.data[i] += n.grad.data[i] * pa.value.data[i];
        }
    });
}

template <typename T>
VarT<T> mul_scalar(const VarT<T>& a, T s) {
    TensorT<T> out(a.value().shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] * s;
    return detail::make_op<T>("mul_scalar", std::move(out), {a}, [s](NodeT<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i] * s;
    });
}

template <typename T>
VarT<T> add_scalar(const VarT<T>& a, T s) {
    TensorT<T> out(a.value().shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] + s;
    return detail::make_op<T>("add_scalar", std::move(out), {a}, [](NodeT<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
    });
}

// Multiply sample n of an NCHW (or N-first) tensor by coeff[n]. Coefficients
// are data, not differentiated.
template <typename T>
VarT<T> scale_per_sample(const VarT<T>& a, std::vector<T> coeff) {
    LFR_REQUIRE(a.value().rank() >= 1 &&
                    a.value().dim(0) == static_cast<int>(coeff.size()),
                "scale_per_sample: coeff count must equal dim 0");
    const int64_t per = a.value().numel() / a.value().dim(0);
    TensorT<T> out(a.value().shape);
    for (int n = 0; n < a.value().dim(0); ++n)
        for (int64_t i = 0; i < per; ++i)
            out.data[n * per + i] = a.value().data[n * per + i] * coeff[static_cast<size_t>(n)];
    return detail::make_op<T>("scale_per_sample", std::move(out), {a},
                              [coeff, per](NodeT<T>& n) {
                                  auto& p = *n.parents[0];
                                  p.ensure_grad();
                                  const int N = p.value.dim(0);
                                  for (int s = 0; s < N; ++s)
                                      for (int64_t i = 0; i < per; ++i)
                                          p.grad.data[s * per + i] +=
                                              n.grad.data[s * per + i] * coeff[static_cast<size_t>(s)];
                              });
}

template <typename T>
VarT<T> silu(const VarT<T>& a) {
    TensorT<T> out(a.value().shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        T x = a.value().data[i];
        T sig = T(1) / (T(1) + std::exp(-x));
        out.data[i] = x * sig;
    }
    return detail::make_op<T>("silu", std::move(out), {a}, [](NodeT<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.data.size(); ++i) {
            T x = p.value.data[i];
            T sig = T(1) / (T(1) + std::exp(-x));
            T d = sig * (T(1) + x * (T(1) - sig));
            p.grad.data[i] += n.grad.data[i] * d;
        }
    });
}

// Forward identity, backward barrier.
template <typename T>
VarT<T> stop_gradient(const VarT<T>& a) {
    return VarT<T>::constant(a.value());
}

// ---------------------------------------------------------------------------
// Reductions (64-bit accumulation, index order)
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> sum_all(const VarT<T>& a) {
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(a.value().sum64()));
    return detail::make_op<T>("sum_all", std::move(out), {a}, [](NodeT<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T g = n.grad.data[0];
        for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += g;
    });
}

template <typename T>
VarT<T> mean_all(const VarT<T>& a) {
    const double n = static_cast<double>(a.value().numel());
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(a.value().sum64() / n));
    return detail::make_op<T>("mean_all", std::move(out), {a}, [n](NodeT<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        const T g = static_cast<T>(static_cast<double>(nd.grad.data[0]) / n);
        for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += g;
    });
}

// mean of squared differences over all elements
template <typename T>
VarT<T> mean_sq_diff(const VarT<T>& a, const VarT<T>& b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

// ---------------------------------------------------------------------------
// Matrix primitives
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> matmul(const VarT<T>& a, const VarT<T>& b) {
    LFR_REQUIRE(a.value().rank() == 2 && b.value().rank() == 2 &&
                    a.value().dim(1) == b.value().dim(0),
                "matmul: incompatible shapes");
    const int M = a.value().dim(0), K = a.value().dim(1), N = b.value().dim(1);
    TensorT<T> out({M, N});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k)
                acc += static_cast<double>(a.value().data[i * K + k]) *
                       static_cast<double>(b.value().data[k * N + j]);
            out.data[i * N + j] = static_cast<T>(acc);
        }
    return detail::make_op<T>("matmul", std::move(out), {a, b}, [M, K, N](NodeT<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < K; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j < N; ++j)
                        acc += static_cast<double>(n.grad.data[i * N + j]) *
                               static_cast<double>(pb.value.data[k * N + j]);
                    pa.grad.data[i * K + k] += static_cast<T>(acc);
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int k = 0; k < K; ++k)
                for (int j = 0; j < N; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < M; ++i)
                        acc += static_cast<double>(pa.value.data[i * K + k]) *
                               static_cast<double>(n.grad.data[i * N + j]);
                    pb.grad.data[k * N + j] += static_cast<T>(acc);
                }
        }
    });
}

// Broadcast a row vector over the rows of a matrix.
template <typename T>
VarT<T> add_rowvec(const VarT<T>& a, const VarT<T>& b) {
    LFR_REQUIRE(a.value().rank() == 2 && b.value().rank() == 1 &&
                    a.value().dim(1) == b.value().dim(0),
                "add_rowvec: incompatible shapes");
    const int M = a.value().dim(0), N = a.value().dim(1);
    TensorT<T> out({M, N});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
            out.data[i * N + j] = a.value().data[i * N + j] + b.value().data[j];
    return detail::make_op<T>("add_rowvec", std::move(out), {a, b}, [M, N](NodeT<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < pa.grad.data.size(); ++i) pa.grad.data[i] += n.grad.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int j = 0; j < N; ++j) {
                double acc = 0.0;
                for (int i = 0; i < M; ++i) acc += static_cast<double>(n.grad.data[i * N + j]);
                pb.grad.data[j] += static_cast<T>(acc);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution and spatial primitives (NCHW)
// ---------------------------------------------------------------------------

namespace detail {

// dot product with four independent 64-bit accumulators (fixed order)
template <typename T>
double dot64(const T* a, const T* b, int n) {
    double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        a1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
        a2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
        a3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
    }
    for (; i < n; ++i) a0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return (a0 + a1) + (a2 + a3);
}

// transposed patch matrix for one sample: col_t[c*KH*KW + kh*KW + kw][p],
// p = ho*WO + wo; rows are contiguous over output pixels
template <typename T>
void im2col_t(const T* x, int C, int H, int W, int KH, int KW, int stride, int pad, int HO, int WO,
              T* col_t) {
    const int P = HO * WO;
    for (int c = 0; c < C; ++c)
        for (int kh = 0; kh < KH; ++kh)
            for (int kw = 0; kw < KW; ++kw) {
                T* row = col_t + (static_cast<int64_t>(c) * KH * KW + kh * KW + kw) * P;
                for (int ho = 0; ho < HO; ++ho) {
                    const int h = ho * stride - pad + kh;
                    T* dst = row + static_cast<int64_t>(ho) * WO;
                    if (h < 0 || h >= H) {
                        for (int wo = 0; wo < WO; ++wo) dst[wo] = T(0);
                        continue;
                    }
                    const T* src = x + (static_cast<int64_t>(c) * H + h) * W;
                    for (int wo = 0; wo < WO; ++wo) {
                        const int ww = wo * stride - pad + kw;
                        dst[wo] = (ww < 0 || ww >= W) ? T(0) : src[ww];
                    }
                }
            }
}

}  // namespace detail

template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& bias, int stride, int pad) {
    LFR_REQUIRE(x.value().rank() == 4 && w.value().rank() == 4, "conv2d: expects 4-D NCHW/OIHW");
    LFR_REQUIRE(x.value().dim(1) == w.value().dim(1), "conv2d: channel mismatch");
    LFR_REQUIRE(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int O = w.value().dim(0), KH = w.value().dim(2), KW = w.value().dim(3);
    const bool has_bias = bias.defined();
    if (has_bias)
        LFR_REQUIRE(bias.value().rank() == 1 && bias.value().dim(0) == O, "conv2d: bias shape");
    const int HO = (H + 2 * pad - KH) / stride + 1;
    const int WO = (W + 2 * pad - KW) / stride + 1;
    LFR_REQUIRE(HO >= 1 && WO >= 1, "conv2d: output dims must be >= 1");
    const int P = HO * WO;
    const int CK = C * KH * KW;
    const bool is_1x1 = KH == 1 && KW == 1 && stride == 1 && pad == 0;

    TensorT<T> out({N, O, HO, WO});
    {
        const T* xd = x.value().data.data();
        const T* wd = w.value().data.data();
        const T* bd = has_bias ? bias.value().data.data() : nullptr;
        T* od = out.data.data();
#ifdef _OPENMP
#pragma omp parallel if (N >= 2)
#endif
        {
            std::vector<T> col(is_1x1 ? 0 : static_cast<size_t>(P) * CK);
            std::vector<double> acc(static_cast<size_t>(P));
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
            for (int n = 0; n < N; ++n) {
                const T* xs = xd + static_cast<int64_t>(n) * C * H * W;
                T* os = od + static_cast<int64_t>(n) * O * P;
                // col_t rows are the input pixels themselves for 1x1
                const T* ct = xs;
                if (!is_1x1) {
                    detail::im2col_t(xs, C, H, W, KH, KW, stride, pad, HO, WO, col.data());
                    ct = col.data();
                }
                if (P == 1) {
                    // the patch is a single vector; one dot per output channel
                    for (int o = 0; o < O; ++o)
                        os[o] = static_cast<T>((bd ? static_cast<double>(bd[o]) : 0.0) +
                                               detail::dot64(wd + static_cast<int64_t>(o) * CK, ct, CK));
                } else {
                    // out[o][:] = b[o] + sum_ck w[o][ck] * col_t[ck][:]
                    for (int o = 0; o < O; ++o) {
                        const double b0 = bd ? static_cast<double>(bd[o]) : 0.0;
                        for (int p = 0; p < P; ++p) acc[static_cast<size_t>(p)] = b0;
                        const T* wo_row = wd + static_cast<int64_t>(o) * CK;
                        for (int k = 0; k < CK; ++k) {
                            const double wv = static_cast<double>(wo_row[k]);
                            if (wv == 0.0) continue;
                            const T* cr = ct + static_cast<int64_t>(k) * P;
                            for (int p = 0; p < P; ++p)
                                acc[static_cast<size_t>(p)] += wv * static_cast<double>(cr[p]);
                        }
                        T* orow = os + static_cast<int64_t>(o) * P;
                        for (int p = 0; p < P; ++p) orow[p] = static_cast<T>(acc[static_cast<size_t>(p)]);
                    }
                }
            }
        }
    }

    std::vector<VarT<T>> inputs = {x, w};
    if (has_bias) inputs.push_back(bias);
    auto back = [N, C, H, W, O, KH, KW, HO, WO, P, CK, stride, pad, has_bias, is_1x1](NodeT<T>& nd) {
        auto& px = *nd.parents[0];
        auto& pw = *nd.parents[1];
        const T* gd = nd.grad.data.data();
        const T* xd = px.value.data.data();
        const T* wd = pw.value.data.data();

        // transposed patch matrices for all samples (weight gradient input)
        std::vector<T> cols;
        if (pw.requires_grad && !is_1x1) {
            cols.resize(static_cast<size_t>(N) * P * CK);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (N >= 2)
#endif
            for (int n = 0; n < N; ++n)
                detail::im2col_t(xd + static_cast<int64_t>(n) * C * H * W, C, H, W, KH, KW, stride,
                                 pad, HO, WO, cols.data() + static_cast<int64_t>(n) * P * CK);
        }

        if (pw.requires_grad) {
            pw.ensure_grad();
            T* gw = pw.grad.data.data();
#ifdef _OPENMP
#pragma omp parallel if (O >= 2)
#endif
            {
                std::vector<double> acc(static_cast<size_t>(CK));
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
                for (int o = 0; o < O; ++o) {
                    if (P == 1) {
                        // dW[o][:] = sum_n g[n][o] * patch_n[:]
                        std::fill(acc.begin(), acc.end(), 0.0);
                        for (int n = 0; n < N; ++n) {
                            const double g = static_cast<double>(gd[static_cast<int64_t>(n) * O + o]);
                            if (g == 0.0) continue;
                            const T* cr = is_1x1 ? xd + static_cast<int64_t>(n) * CK
                                                 : cols.data() + static_cast<int64_t>(n) * CK;
                            for (int k = 0; k < CK; ++k) acc[static_cast<size_t>(k)] += g * static_cast<double>(cr[k]);
                        }
                        for (int k = 0; k < CK; ++k)
                            gw[static_cast<int64_t>(o) * CK + k] += static_cast<T>(acc[static_cast<size_t>(k)]);
                    } else {
                        // dW[o][ck] = sum_n dot(g[n][o][:], col_t[n][ck][:])
                        for (int k = 0; k < CK; ++k) {
                            double a = 0.0;
                            for (int n = 0; n < N; ++n) {
                                const T* gs = gd + (static_cast<int64_t>(n) * O + o) * P;
                                const T* cr = is_1x1 ? xd + (static_cast<int64_t>(n) * C + k) * P
                                                     : cols.data() + (static_cast<int64_t>(n) * CK + k) * P;
                                a += detail::dot64(gs, cr, P);
                            }
                            gw[static_cast<int64_t>(o) * CK + k] += static_cast<T>(a);
                        }
                    }
                }
            }
        }

        if (px.requires_grad) {
            px.ensure_grad();
            T* gx = px.grad.data.data();
#ifdef _OPENMP
#pragma omp parallel if (N >= 2)
#endif
            {
                std::vector<double> grow(static_cast<size_t>(P));
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
                for (int n = 0; n < N; ++n) {
                    T* gxs = gx + static_cast<int64_t>(n) * C * H * W;
                    const T* gs = gd + static_cast<int64_t>(n) * O * P;
                    if (P == 1) {
                        // gpatch[:] = sum_o g[o] * w[o][:], scattered back
                        grow.assign(static_cast<size_t>(CK), 0.0);
                        for (int o = 0; o < O; ++o) {
                            const double g = static_cast<double>(gs[o]);
                            if (g == 0.0) continue;
                            const T* wo_row = wd + static_cast<int64_t>(o) * CK;
                            for (int k = 0; k < CK; ++k)
                                grow[static_cast<size_t>(k)] += g * static_cast<double>(wo_row[k]);
                        }
                        for (int k = 0; k < CK; ++k) {
                            if (is_1x1) {
                                gxs[k] += static_cast<T>(grow[static_cast<size_t>(k)]);
                                continue;
                            }
                            const int c = k / (KH * KW), kh = (k / KW) % KH, kw = k % KW;
                            const int h = -pad + kh, ww = -pad + kw;
                            if (h < 0 || h >= H || ww < 0 || ww >= W) continue;
                            gxs[(static_cast<int64_t>(c) * H + h) * W + ww] +=
                                static_cast<T>(grow[static_cast<size_t>(k)]);
                        }
                        continue;
                    }
                    // gcol_t[ck][:] = sum_o w[o][ck] * g[o][:], scattered back
                    for (int k = 0; k < CK; ++k) {
                        std::fill(grow.begin(), grow.end(), 0.0);
                        for (int o = 0; o < O; ++o) {
                            const double wv = static_cast<double>(wd[static_cast<int64_t>(o) * CK + k]);
                            if (wv == 0.0) continue;
                            const T* go = gs + static_cast<int64_t>(o) * P;
                            for (int p = 0; p < P; ++p)
                                grow[static_cast<size_t>(p)] += wv * static_cast<double>(go[p]);
                        }
                        if (is_1x1) {
                            T* dst = gxs + static_cast<int64_t>(k) * P;
                            for (int p = 0; p < P; ++p) dst[p] += static_cast<T>(grow[static_cast<size_t>(p)]);
                        } else {
                            const int c = k / (KH * KW), kh = (k / KW) % KH, kw = k % KW;
                            for (int ho = 0; ho < HO; ++ho) {
                                const int h = ho * stride - pad + kh;
                                if (h < 0 || h >= H) continue;
                                T* dst = gxs + (static_cast<int64_t>(c) * H + h) * W;
                                const double* src = grow.data() + static_cast<int64_t>(ho) * WO;
                                for (int wo = 0; wo < WO; ++wo) {
                                    const int ww = wo * stride - pad + kw;
                                    if (ww < 0 || ww >= W) continue;
                                    dst[ww] += static_cast<T>(src[wo]);
                                }
                            }
                        }
                    }
                }
            }
        }

        if (has_bias && nd.parents[2]->requires_grad) {
            auto& pb = *nd.parents[2];
            pb.ensure_grad();
            for (int o = 0; o < O; ++o) {
                double acc = 0.0;
                for (int n = 0; n < N; ++n) {
                    const T* gs = gd + (static_cast<int64_t>(n) * O + o) * P;
                    for (int p = 0; p < P; ++p) acc += static_cast<double>(gs[p]);
                }
                pb.grad.data[o] += static_cast<T>(acc);
            }
        }
    };
    return detail::make_op<T>("conv2d", std::move(out), std::move(inputs), std::move(back));
}

template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, int stride, int pad) {
    return conv2d(x, w, VarT<T>(), stride, pad);
}

// Integer-factor nearest-neighbor upsampling.
template <typename T>
VarT<T> resize_nearest(const VarT<T>& x, int factor) {
    LFR_REQUIRE(x.value().rank() == 4 && factor >= 1, "resize_nearest: bad input");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int HO = H * factor, WO = W * factor;
    TensorT<T> out({N, C, HO, WO});
    for (int nc = 0; nc < N * C; ++nc)
        for (int ho = 0; ho < HO; ++ho) {
            const T* src = x.value().data.data() + (static_cast<int64_t>(nc) * H + ho / factor) * W;
            T* dst = out.data.data() + (static_cast<int64_t>(nc) * HO + ho) * WO;
            for (int wo = 0; wo < WO; ++wo) dst[wo] = src[wo / factor];
        }
    return detail::make_op<T>("resize_nearest", std::move(out), {x}, [factor, N, C, H, W](NodeT<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        const int HO = H * factor, WO = W * factor;
        for (int nc = 0; nc < N * C; ++nc)
            for (int h = 0; h < H; ++h)
                for (int w2 = 0; w2 < W; ++w2) {
                    double acc = 0.0;
                    for (int dh = 0; dh < factor; ++dh)
                        for (int dw = 0; dw < factor; ++dw)
                            acc += static_cast<double>(
                                nd.grad.data[(static_cast<int64_t>(nc) * HO + h * factor + dh) * WO +
                                             w2 * factor + dw]);
                    p.grad.data[(static_cast<int64_t>(nc) * H + h) * W + w2] += static_cast<T>(acc);
                }
    });
}

// Pixel-shuffle: [N, C*b*b, H, W] -> [N, C, H*b, W*b], channel-major blocks.
template <typename T>
VarT<T> depth_to_space(const VarT<T>& x, int block) {
    LFR_REQUIRE(x.value().rank() == 4 && block >= 1 && x.value().dim(1) % (block * block) == 0,
                "depth_to_space: channels must be divisible by block^2");
    const int N = x.value().dim(0), CI = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int C = CI / (block * block), HO = H * block, WO = W * block;
    TensorT<T> out({N, C, HO, WO});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int ho = 0; ho < HO; ++ho)
                for (int wo = 0; wo < WO; ++wo) {
                    const int ci = c * block * block + (ho % block) * block + (wo % block);
                    out.data[out.at4(n, c, ho, wo)] =
                        x.value().data[x.value().at4(n, ci, ho / block, wo / block)];
                }
    return detail::make_op<T>("depth_to_space", std::move(out), {x}, [block, N, C, H, W](NodeT<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        const int HO = H * block, WO = W * block;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int ho = 0; ho < HO; ++ho)
                    for (int wo = 0; wo < WO; ++wo) {
                        const int ci = c * block * block + (ho % block) * block + (wo % block);
                        p.grad.data[p.value.at4(n, ci, ho / block, wo / block)] +=
                            nd.grad.data[nd.grad.at4(n, c, ho, wo)];
                    }
    });
}

template <typename T>
VarT<T> concat_channels(const VarT<T>& a, const VarT<T>& b) {
    LFR_REQUIRE(a.value().rank() == 4 && b.value().rank() == 4 &&
                    a.value().dim(0) == b.value().dim(0) && a.value().dim(2) == b.value().dim(2) &&
                    a.value().dim(3) == b.value().dim(3),
                "concat_channels: incompatible shapes");
    const int N = a.value().dim(0), CA = a.value().dim(1), CB = b.value().dim(1);
    const int H = a.value().dim(2), W = a.value().dim(3);
    TensorT<T> out({N, CA + CB, H, W});
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.value().data.begin() + n * CA * hw, CA * hw,
                    out.data.begin() + static_cast<int64_t>(n) * (CA + CB) * hw);
        std::copy_n(b.value().data.begin() + n * CB * hw, CB * hw,
                    out.data.begin() + static_cast<int64_t>(n) * (CA + CB) * hw + CA * hw);
    }
    return detail::make_op<T>("concat_channels", std::move(out), {a, b}, [N, CA, CB, hw](NodeT<T>& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int64_t i = 0; i < CA * hw; ++i)
                    pa.grad.data[n * CA * hw + i] +=
                        nd.grad.data[static_cast<int64_t>(n) * (CA + CB) * hw + i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int64_t i = 0; i < CB * hw; ++i)
                    pb.grad.data[n * CB * hw + i] +=
                        nd.grad.data[static_cast<int64_t>(n) * (CA + CB) * hw + CA * hw + i];
        }
    });
}

// Channel slice [c0, c1).
template <typename T>
VarT<T> slice_channels(const VarT<T>& x, int c0, int c1) {
    LFR_REQUIRE(x.value().rank() == 4 && 0 <= c0 && c0 < c1 && c1 <= x.value().dim(1),
                "slice_channels: bad range");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int CS = c1 - c0;
    const int64_t hw = static_cast<int64_t>(H) * W;
    TensorT<T> out({N, CS, H, W});
    for (int n = 0; n < N; ++n)
        std::copy_n(x.value().data.begin() + (static_cast<int64_t>(n) * C + c0) * hw, CS * hw,
                    out.data.begin() + static_cast<int64_t>(n) * CS * hw);
    return detail::make_op<T>("slice_channels", std::move(out), {x}, [N, C, c0, CS, hw](NodeT<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int64_t i = 0; i < CS * hw; ++i)
                p.grad.data[(static_cast<int64_t>(n) * C + c0) * hw + i] +=
                    nd.grad.data[static_cast<int64_t>(n) * CS * hw + i];
    });
}

// Append one constant channel per sample (e.g. the flow time t).
template <typename T>
VarT<T> concat_scalar_channel(const VarT<T>& x, const std::vector<T>& vals) {
    LFR_REQUIRE(x.value().rank() == 4 && x.value().dim(0) == static_cast<int>(vals.size()),
                "concat_scalar_channel: one value per sample required");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    TensorT<T> out({N, C + 1, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(x.value().data.begin() + n * C * hw, C * hw,
                    out.data.begin() + static_cast<int64_t>(n) * (C + 1) * hw);
        std::fill_n(out.data.begin() + static_cast<int64_t>(n) * (C + 1) * hw + C * hw, hw,
                    vals[static_cast<size_t>(n)]);
    }
    return detail::make_op<T>("concat_scalar_channel", std::move(out), {x}, [N, C, hw](NodeT<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int64_t i = 0; i < C * hw; ++i)
                p.grad.data[n * C * hw + i] += nd.grad.data[static_cast<int64_t>(n) * (C + 1) * hw + i];
    });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

template <typename T>
void backward(const VarT<T>& loss) {
    LFR_REQUIRE(loss.value().numel() == 1, "backward: loss must be scalar");
    if (!std::isfinite(static_cast<double>(loss.value().data[0])))
        throw numeric_error("backward: non-finite loss");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS over parents with requires_grad.
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> visited;
    std::vector<std::pair<NodeT<T>*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            NodeT<T>* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad.data[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* node = *it;
        if (node->backfn && node->grad_ready) node->backfn(*node);
    }
}

}  // namespace lfr
