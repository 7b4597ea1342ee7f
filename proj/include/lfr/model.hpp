#pragma once

#include "lfr/flow.hpp"
#include "lfr/latent.hpp"

namespace lfr::flow {

struct ModelConfig {
    nn::UNetSpec unet;
    nn::CoarseSpec coarse;
    FlowConfig flow;
    bool pixel_space = false;  // flow directly on pixels (identity codec)
    bool use_coarse = true;    // drop the coarse branch entirely when false
    bool consistency = true;   // false: plain flow-matching regression for theta
    uint64_t seed = 0;
};

// The full restoration pipeline: frozen autoencoder, coarse estimator
// (omega/phi), vector field (theta) and its EMA shadow.
template <typename T>
struct ModelT {
    ModelConfig cfg;
    nn::AutoEncoderT<T> ae;
    ParamSetT<T> coarse_params;
    ParamSetT<T> field_params;
    ParamSetT<T> ema_params;
    nn::CoarseEstimatorT<T> coarse;
    nn::UNetField<T> field;
    nn::UNetField<T> ema_field;

    static ModelT build(nn::AutoEncoderT<T> ae_in, ModelConfig cfg) {
        cfg.flow.validate();
        ModelT m;
        m.ae = std::move(ae_in);
        m.ae.freeze();
        m.cfg = cfg;
        m.cfg.unet.channels = m.ae.latent_channels();
        if (m.cfg.use_coarse)
            m.coarse = nn::CoarseEstimatorT<T>::attach(m.coarse_params, m.ae, m.cfg.coarse, cfg.seed);
        m.field = nn::UNetField<T>::attach(m.field_params, m.cfg.unet, cfg.seed);
        m.ema_params = m.field_params.clone();
        m.ema_field = nn::UNetField<T>::attach(m.ema_params, m.cfg.unet, cfg.seed);
        return m;
    }

    // LQ image tensor -> initial latent (coarse estimate or plain encode)
    VarT<T> initial_latent(const VarT<T>& y) const {
        if (cfg.use_coarse) return coarse(y);
        return ae.encode(y);
    }

    void append_meta(ParamSetT<T>& ps) const {
        ps.add("meta.K", TensorT<T>::scalar(static_cast<T>(cfg.flow.K)));
        ps.add("meta.delta_t", TensorT<T>::scalar(static_cast<T>(cfg.flow.delta_t)));
        ps.add("meta.alpha", TensorT<T>::scalar(static_cast<T>(cfg.flow.alpha)));
        ps.add("meta.sigma_min", TensorT<T>::scalar(static_cast<T>(cfg.flow.sigma_min)));
        ps.add("meta.sigma_s", TensorT<T>::scalar(static_cast<T>(cfg.flow.sigma_s)));
        ps.add("meta.beta", TensorT<T>::scalar(static_cast<T>(cfg.flow.beta)));
        ps.add("meta.levels", TensorT<T>::scalar(static_cast<T>(cfg.unet.levels)));
        for (size_t i = 0; i < cfg.unet.widths.size(); ++i)
            ps.add("meta.width" + std::to_string(i),
                   TensorT<T>::scalar(static_cast<T>(cfg.unet.widths[i])));
        ps.add("meta.coarse_width", TensorT<T>::scalar(static_cast<T>(cfg.coarse.width)));
        ps.add("meta.coarse_growth", TensorT<T>::scalar(static_cast<T>(cfg.coarse.growth)));
        ps.add("meta.coarse_blocks", TensorT<T>::scalar(static_cast<T>(cfg.coarse.blocks)));
        ps.add("meta.pixel_space", TensorT<T>::scalar(static_cast<T>(cfg.pixel_space ? 1 : 0)));
        ps.add("meta.use_coarse", TensorT<T>::scalar(static_cast<T>(cfg.use_coarse ? 1 : 0)));
        ps.add("meta.consistency", TensorT<T>::scalar(static_cast<T>(cfg.consistency ? 1 : 0)));
    }

    void save(const std::string& path) const {
        ParamSetT<T> ps;
        for (auto& n : coarse_params.order) ps.add(n, coarse_params.get(n).value());
        for (auto& n : field_params.order) ps.add(n, field_params.get(n).value());
        append_meta(ps);
        save_params(ps, path);
    }

    void save_ema(const std::string& path) const {
        ParamSetT<T> ps;
        for (auto& n : ema_params.order) ps.add(n, ema_params.get(n).value());
        append_meta(ps);
        save_params(ps, path);
    }

    static ModelConfig meta_config(const ParamSetT<T>& ps) {
        ModelConfig cfg;
        auto geti = [&ps](const std::string& n) {
            return static_cast<int>(std::lround(static_cast<double>(ps.get(n).value().data[0])));
        };
        auto getd = [&ps](const std::string& n) {
            return static_cast<double>(ps.get(n).value().data[0]);
        };
        cfg.flow.K = geti("meta.K");
        cfg.flow.delta_t = getd("meta.delta_t");
        cfg.flow.alpha = getd("meta.alpha");
        cfg.flow.sigma_min = getd("meta.sigma_min");
        cfg.flow.sigma_s = getd("meta.sigma_s");
        cfg.flow.beta = getd("meta.beta");
        cfg.unet.levels = geti("meta.levels");
        cfg.unet.widths.clear();
        for (int i = 0; ps.has("meta.width" + std::to_string(i)); ++i)
            cfg.unet.widths.push_back(geti("meta.width" + std::to_string(i)));
        cfg.coarse.width = geti("meta.coarse_width");
        cfg.coarse.growth = geti("meta.coarse_growth");
        cfg.coarse.blocks = geti("meta.coarse_blocks");
        cfg.pixel_space = geti("meta.pixel_space") != 0;
        cfg.use_coarse = geti("meta.use_coarse") != 0;
        cfg.consistency = geti("meta.consistency") != 0;
        return cfg;
    }

    static ModelT load(const std::string& path, const std::string& ema_path,
                       nn::AutoEncoderT<T> ae_in) {
        auto ps = load_params<T>(path);
        ModelConfig cfg = meta_config(ps);
        ModelT m;
        m.ae = std::move(ae_in);
        m.ae.freeze();
        m.cfg = cfg;
        m.cfg.unet.channels = m.ae.latent_channels();
        for (auto& n : ps.order) {
            if (n.rfind("meta.", 0) == 0) continue;
            if (n.rfind("theta.", 0) == 0)
                m.field_params.add(n, ps.get(n).value());
            else
                m.coarse_params.add(n, ps.get(n).value());
        }
        if (m.cfg.use_coarse)
            m.coarse = nn::CoarseEstimatorT<T>::attach(m.coarse_params, m.ae, m.cfg.coarse, 0);
        m.field = nn::UNetField<T>::attach(m.field_params, m.cfg.unet, 0);
        auto es = load_params<T>(ema_path);
        for (auto& n : es.order)
            if (n.rfind("theta.", 0) == 0) m.ema_params.add(n, es.get(n).value());
        m.ema_field = nn::UNetField<T>::attach(m.ema_params, m.cfg.unet, 0);
        return m;
    }
};

struct StepReport {
    double l2 = 0, lcfm = 0, mse = 0, dp = 0, total = 0;
};

// One optimization step: AdamW on (omega, phi) from L2, AdamW on theta from
// the distortion-perception objective, then the EMA shadow update. The flow
// branch sees the coarse output detached; the noise draw is fresh.
template <typename T>
StepReport train_step(ModelT<T>& m, const TensorT<T>& x_batch, const TensorT<T>& y_batch,
                      AdamWT<T>& opt_coarse, AdamWT<T>& opt_field, double ema_decay, Rng& rng) {
    const FlowConfig& fc = m.cfg.flow;
    const int N = x_batch.dim(0);
    auto x = VarT<T>::constant(x_batch);
    auto y = VarT<T>::constant(y_batch);

    VarT<T> z1;
    {
        NoGradGuard ng;
        z1 = m.ae.encode(x);
    }

    VarT<T> l2, z_flow;
    if (m.cfg.use_coarse) {
        auto z = m.coarse(y);
        l2 = mean_sq_diff(z, z1);
        z_flow = stop_gradient(z);
    } else {
        NoGradGuard ng;
        l2 = VarT<T>::constant(TensorT<T>::scalar(T(0)));
        z_flow = m.ae.encode(y);
    }

    VarT<T> z0 = z_flow;
    if (fc.sigma_s > 0.0) {
        TensorT<T> eps(z_flow.value().shape);
        for (auto& e : eps.data) e = static_cast<T>(fc.sigma_s * rng.normal());
        z0 = add(z_flow, VarT<T>::constant(std::move(eps)));
    }

    StepReport rep;
    VarT<T> theta_loss;
    if (m.cfg.consistency) {
        std::vector<T> t(static_cast<size_t>(N));
        for (auto& ti : t) ti = static_cast<T>(rng.uniform(0.0, 1.0 - fc.delta_t));
        auto parts = segment_loss_parts(z0, z1, t, fc, m.field);
        auto zhat1 = continue_to_one(parts.f_live, parts.seg, fc.K, m.field);
        auto xhat = m.ae.decode(zhat1);
        auto mse = mean_sq_diff(x, xhat);
        theta_loss = add(mul_scalar(parts.loss, static_cast<T>(1.0 - fc.beta)),
                         mul_scalar(mse, static_cast<T>(fc.beta)));
        rep.lcfm = static_cast<double>(parts.loss.value().data[0]);
        rep.mse = static_cast<double>(mse.value().data[0]);
    } else {
        std::vector<T> t(static_cast<size_t>(N));
        for (auto& ti : t) ti = static_cast<T>(rng.uniform(0.0, 1.0));
        auto z_t = trajectory_point(z0, z1, t, fc.sigma_min);
        auto v_live = m.field.eval(z_t, t);
        VarT<T> v_star;
        {
            NoGradGuard ng;
            v_star = sub(z1, mul_scalar(z0, static_cast<T>(1.0 - fc.sigma_min)));
        }
        theta_loss = mean_sq_diff(v_live, v_star);
        rep.lcfm = static_cast<double>(theta_loss.value().data[0]);
    }

    auto total = add(l2, theta_loss);
    rep.l2 = static_cast<double>(l2.value().data[0]);
    rep.dp = static_cast<double>(theta_loss.value().data[0]);
    rep.total = static_cast<double>(total.value().data[0]);
    if (!std::isfinite(rep.total)) throw numeric_error("train_step: non-finite loss");

    m.coarse_params.zero_grads();
    m.field_params.zero_grads();
    backward(total);

    if (m.cfg.use_coarse) {
        std::map<std::string, TensorT<T>> gc;
        for (auto& n : m.coarse_params.order) {
            auto& v = m.coarse_params.get(n);
            gc[n] = v.has_grad() ? v.grad() : TensorT<T>(v.value().shape);
        }
        opt_coarse.step(m.coarse_params, gc);
    }
    std::map<std::string, TensorT<T>> gf;
    for (auto& n : m.field_params.order) {
        auto& v = m.field_params.get(n);
        gf[n] = v.has_grad() ? v.grad() : TensorT<T>(v.value().shape);
    }
    opt_field.step(m.field_params, gf);
    ema_update(m.ema_params, m.field_params, ema_decay);
    return rep;
}

}  // namespace lfr::flow
