#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/checkpoint.hpp"
#include "lfr/optim.hpp"
#include "support/gradcheck.hpp"

#include <cstdio>

using namespace lfr;
using namespace lfr::testsupport;

TEST_CASE("tensor shape/data invariants") {
    TensorT<float> t({2, 3}, 1.f);
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(TensorT<float>({2, 3}, std::vector<float>(5, 0.f)), contract_error);
    CHECK_THROWS_AS(TensorT<float>({0, 3}), contract_error);
}

TEST_CASE("quadratic gradient: loss = ||w||^2, w=(1,2) -> grad=(2,4)") {
    ParamSetT<double> ps;
    ps.add("w", TensorT<double>({2}, {1.0, 2.0}));
    auto g = grad([](ParamSetT<double>& p) { return sum_all(mul(p.get("w"), p.get("w"))); }, ps);
    CHECK(g.at("w").data[0] == doctest::Approx(2.0));
    CHECK(g.at("w").data[1] == doctest::Approx(4.0));
}

TEST_CASE("stop_gradient: detached path yields zero gradient and identity value") {
    ParamSetT<double> ps;
    ps.add("w", TensorT<double>({3}, {1.0, -2.0, 0.5}));
    auto loss_fn = [](ParamSetT<double>& p) {
        auto s = stop_gradient(p.get("w"));
        return sum_all(mul(s, s));
    };
    auto v = stop_gradient(ps.get("w"));
    for (size_t i = 0; i < 3; ++i) CHECK(v.value().data[i] == ps.get("w").value().data[i]);
    auto g = grad(loss_fn, ps);
    for (double gi : g.at("w").data) CHECK(gi == 0.0);
}

TEST_CASE("two-layer net matches finite differences (17 params)") {
    Rng rng(42);
    ParamSetT<double> ps;
    ps.add("w1", random_tensor({2, 3}, rng));
    ps.add("b1", random_tensor({3}, rng));
    ps.add("w2", random_tensor({3, 2}, rng));
    ps.add("b2", random_tensor({2}, rng));
    REQUIRE(6 + 3 + 6 + 2 == 17);
    auto x = TensorT<double>({4, 2});
    for (auto& v : x.data) v = rng.normal();
    auto loss_fn = [&x](ParamSetT<double>& p) {
        auto h = silu(add_rowvec(matmul(VarT<double>::constant(x), p.get("w1")), p.get("b1")));
        auto o = add_rowvec(matmul(h, p.get("w2")), p.get("b2"));
        return mean_all(mul(o, o));
    };
    auto res = gradcheck(loss_fn, ps);
    INFO("worst: ", res.worst, " rel err ", res.max_rel_err);
    CHECK(res.pass(1e-4));
}

TEST_CASE("every primitive matches finite differences on random inputs") {
    Rng rng(7);
    int configs = 0;
    auto check = [&configs](auto&& loss_fn, ParamSetT<double>& ps) {
        auto res = gradcheck(loss_fn, ps);
        INFO("worst: ", res.worst, " rel err ", res.max_rel_err);
        CHECK(res.pass(1e-4));
        ++configs;
    };

    for (int rep = 0; rep < 3; ++rep) {
        ParamSetT<double> ps;
        ps.add("a", random_tensor({2, 3}, rng));
        ps.add("b", random_tensor({2, 3}, rng));
        check([](ParamSetT<double>& p) { return mean_all(mul(add(p.get("a"), p.get("b")), p.get("a"))); }, ps);
        check([](ParamSetT<double>& p) { return sum_all(mul(sub(p.get("a"), p.get("b")), p.get("b"))); }, ps);
        check([](ParamSetT<double>& p) { return mean_all(silu(mul_scalar(p.get("a"), 1.7))); }, ps);
        check([](ParamSetT<double>& p) { return mean_all(add_scalar(mul(p.get("a"), p.get("a")), 0.3)); }, ps);
        check([](ParamSetT<double>& p) {
            return mean_all(scale_per_sample(p.get("a"), {0.5, -1.25}));
        }, ps);
    }

    for (int rep = 0; rep < 3; ++rep) {
        ParamSetT<double> ps;
        ps.add("m1", random_tensor({3, 4}, rng));
        ps.add("m2", random_tensor({4, 2}, rng));
        ps.add("bias", random_tensor({2}, rng));
        check([](ParamSetT<double>& p) {
            return mean_all(add_rowvec(matmul(p.get("m1"), p.get("m2")), p.get("bias")));
        }, ps);
        check([](ParamSetT<double>& p) {
            auto mm = matmul(p.get("m1"), p.get("m2"));
            return mean_all(mul(mm, mm));
        }, ps);
    }

    // conv2d over stride/pad combinations, plus bias
    for (int stride = 1; stride <= 2; ++stride)
        for (int pad = 0; pad <= 1; ++pad) {
            ParamSetT<double> ps;
            ps.add("x", random_tensor({2, 2, 5, 5}, rng));
            ps.add("w", random_tensor({3, 2, 3, 3}, rng));
            ps.add("b", random_tensor({3}, rng));
            check([stride, pad](ParamSetT<double>& p) {
                auto y = conv2d(p.get("x"), p.get("w"), p.get("b"), stride, pad);
                return mean_all(mul(y, y));
            }, ps);
        }

    for (int rep = 0; rep < 2; ++rep) {
        ParamSetT<double> ps;
        ps.add("x", random_tensor({2, 4, 3, 3}, rng));
        ps.add("y", random_tensor({2, 2, 3, 3}, rng));
        check([](ParamSetT<double>& p) {
            return mean_all(mul(resize_nearest(p.get("y"), 2), resize_nearest(p.get("y"), 2)));
        }, ps);
        check([](ParamSetT<double>& p) {
            auto d = depth_to_space(p.get("x"), 2);
            return mean_all(mul(d, d));
        }, ps);
        check([](ParamSetT<double>& p) {
            auto c = concat_channels(p.get("x"), p.get("y"));
            return mean_all(mul(c, c));
        }, ps);
        check([](ParamSetT<double>& p) {
            auto s = slice_channels(p.get("x"), 1, 3);
            return mean_all(mul(s, s));
        }, ps);
        check([](ParamSetT<double>& p) {
            auto c = concat_scalar_channel(p.get("x"), {0.25, -0.75});
            return mean_all(mul(c, c));
        }, ps);
    }
    CHECK(configs >= 20);
}

TEST_CASE("mean/sum reductions and composite mse") {
    ParamSetT<double> ps;
    ps.add("a", TensorT<double>({4}, {1.0, 2.0, 3.0, 4.0}));
    ps.add("b", TensorT<double>({4}, {0.0, 0.0, 0.0, 0.0}));
    auto m = mean_sq_diff(ps.get("a"), ps.get("b"));
    CHECK(m.value().data[0] == doctest::Approx((1.0 + 4.0 + 9.0 + 16.0) / 4.0));
    CHECK(sum_all(ps.get("a")).value().data[0] == doctest::Approx(10.0));
    CHECK(mean_all(ps.get("a")).value().data[0] == doctest::Approx(2.5));
}

TEST_CASE("backward requires scalar finite loss") {
    auto v = VarT<double>::leaf(TensorT<double>({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(backward(v), contract_error);
    auto inf_loss = VarT<double>::leaf(TensorT<double>::scalar(std::numeric_limits<double>::infinity()));
    CHECK_THROWS_AS(backward(inf_loss), numeric_error);
}

TEST_CASE("debug NaN screening raises at op boundaries") {
    set_debug_checks(true);
    auto a = VarT<float>::leaf(TensorT<float>({2}, {1.f, std::numeric_limits<float>::quiet_NaN()}));
    auto b = VarT<float>::leaf(TensorT<float>({2}, {1.f, 1.f}));
    CHECK_THROWS_AS((void)add(a, b), numeric_error);
    set_debug_checks(false);
    CHECK_NOTHROW((void)add(a, b));
}

TEST_CASE("adamw: zero-gradient step is pure decoupled decay") {
    ParamSetT<float> ps;
    ps.add("w", TensorT<float>({2}, {1.f, -2.f}));
    AdamWT<float> opt;
    opt.lr = 0.1;
    opt.weight_decay = 0.02;
    std::map<std::string, TensorT<float>> g{{"w", TensorT<float>({2})}};
    opt.step(ps, g);
    CHECK(ps.get("w").value().data[0] == doctest::Approx(1.f * (1.f - 0.1f * 0.02f)));
    CHECK(ps.get("w").value().data[1] == doctest::Approx(-2.f * (1.f - 0.1f * 0.02f)));
}

TEST_CASE("adamw: first-step update is approximately -lr") {
    ParamSetT<double> ps;
    ps.add("w", TensorT<double>({1}, {0.0}));
    AdamWT<double> opt;
    opt.lr = 1e-3;
    opt.weight_decay = 0.0;
    std::map<std::string, TensorT<double>> g{{"w", TensorT<double>({1}, {1.0})}};
    opt.step(ps, g);
    CHECK(ps.get("w").value().data[0] == doctest::Approx(-1e-3).epsilon(1e-5));
}

TEST_CASE("adamw: update sign is invariant to gradient scale") {
    for (double scale : {1.0, 2.0}) {
        ParamSetT<double> ps;
        ps.add("w", TensorT<double>({1}, {0.5}));
        AdamWT<double> opt;
        opt.weight_decay = 0.0;
        std::map<std::string, TensorT<double>> g{{"w", TensorT<double>({1}, {0.3 * scale})}};
        opt.step(ps, g);
        CHECK(ps.get("w").value().data[0] < 0.5);  // moved against gradient sign
    }
}

TEST_CASE("adamw: missing gradient for trainable parameter is a contract violation") {
    ParamSetT<float> ps;
    ps.add("w", TensorT<float>({1}, {1.f}));
    AdamWT<float> opt;
    std::map<std::string, TensorT<float>> g;
    CHECK_THROWS_AS(opt.step(ps, g), contract_error);
}

TEST_CASE("ema: boundary values and geometric-series oracle") {
    ParamSetT<double> shadow, live;
    shadow.add("w", TensorT<double>({1}, {0.0}));
    live.add("w", TensorT<double>({1}, {1.0}));

    auto s0 = shadow.clone();
    ema_update(s0, live, 0.0);
    CHECK(s0.get("w").value().data[0] == 1.0);

    auto s1 = shadow.clone();
    ema_update(s1, live, 0.999);
    CHECK(s1.get("w").value().data[0] == doctest::Approx(0.001));

    // n repeated updates toward a constant: shadow -> v * (1 - 0.999^n)
    auto s2 = shadow.clone();
    const int n = 200;
    for (int i = 0; i < n; ++i) ema_update(s2, live, 0.999);
    const double expect = 1.0 * (1.0 - std::pow(0.999, n));
    CHECK(s2.get("w").value().data[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("ema is a contraction toward live") {
    Rng rng(3);
    ParamSetT<double> shadow, live;
    shadow.add("w", random_tensor({16}, rng));
    live.add("w", random_tensor({16}, rng));
    auto norm_diff = [&] {
        double acc = 0;
        for (size_t i = 0; i < 16; ++i) {
            const double d = shadow.get("w").value().data[i] - live.get("w").value().data[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    const double before = norm_diff();
    ema_update(shadow, live, 0.9);
    CHECK(norm_diff() <= 0.9 * before + 1e-12);
}

TEST_CASE("ema: shape mismatch and bad decay are contract violations") {
    ParamSetT<double> shadow, live;
    shadow.add("w", TensorT<double>({2}));
    live.add("w", TensorT<double>({3}));
    CHECK_THROWS_AS(ema_update(shadow, live, 0.9), contract_error);
    ParamSetT<double> l2;
    l2.add("w", TensorT<double>({2}));
    CHECK_THROWS_AS(ema_update(shadow, l2, 1.0), contract_error);
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    Rng rng(11);
    ParamSetT<real_t> ps;
    ps.add("layer1.weight", random_tensor_t<real_t>({3, 2, 3, 3}, rng));
    ps.add("layer1.bias", random_tensor_t<real_t>({3}, rng));
    ps.add("odd/name with spaces", random_tensor_t<real_t>({7}, rng, 1e-20));
    const std::string path = "ckpt_roundtrip.bin";
    save_params(ps, path);
    auto loaded = load_params<real_t>(path);
    REQUIRE(loaded.order == ps.order);
    CHECK(loaded.raw_bytes() == ps.raw_bytes());
    for (auto& name : ps.order) CHECK(loaded.get(name).value().shape == ps.get(name).value().shape);
    std::remove(path.c_str());
}

TEST_CASE("paramset: duplicate names rejected, frozen params get zero grads") {
    ParamSetT<double> ps;
    ps.add("w", TensorT<double>({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(ps.add("w", TensorT<double>({2})), contract_error);
    ps.add("frozen", TensorT<double>({2}, {3.0, 4.0}), /*trainable=*/false);
    auto g = grad([](ParamSetT<double>& p) {
        return sum_all(mul(add(p.get("w"), p.get("frozen")), p.get("w")));
    }, ps);
    CHECK(g.at("frozen").data[0] == 0.0);
    CHECK(g.at("frozen").data[1] == 0.0);
    CHECK(g.at("w").data[0] != 0.0);
}

TEST_CASE("training with fixed seed is bitwise reproducible") {
    auto run = [] {
        Rng rng(123);
        ParamSetT<real_t> ps;
        ps.add("w1", random_tensor_t<real_t>({3, 3}, rng));
        ps.add("b1", random_tensor_t<real_t>({3}, rng));
        AdamWT<real_t> opt;
        for (int step = 0; step < 20; ++step) {
            auto x = random_tensor_t<real_t>({4, 3}, rng);
            auto loss_fn = [&x](ParamSetT<real_t>& p) {
                auto h = silu(add_rowvec(matmul(VarT<real_t>::constant(x), p.get("w1")), p.get("b1")));
                return mean_all(mul(h, h));
            };
            auto g = grad(loss_fn, ps);
            opt.step(ps, g);
        }
        return ps.raw_bytes();
    };
    CHECK(run() == run());
}
