#include "lfr/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lfr/restore.hpp"

namespace fs = std::filesystem;

namespace lfr::data {

double median(std::vector<double> v) {
    LFR_REQUIRE(!v.empty(), "median: empty");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << content;
}

std::string hex64(uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// data-only line chart: one polyline per series, y normalized per series
std::string curve_svg(const std::vector<EpochRow>& rows) {
    std::ostringstream os;
    const int w = 640, h = 360, pad = 40;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    if (rows.size() >= 2) {
        struct Series {
            const char* name;
            const char* color;
            std::vector<double> ys;
        };
        std::vector<Series> series{{"l2", "#1f77b4", {}}, {"dp", "#d62728", {}}, {"val_psnr", "#2ca02c", {}}};
        for (const auto& r : rows) {
            series[0].ys.push_back(r.l2);
            series[1].ys.push_back(r.dp);
            series[2].ys.push_back(r.val_psnr);
        }
        int legend_y = 16;
        for (const auto& s : series) {
            double lo = s.ys[0], hi = s.ys[0];
            for (double y : s.ys) {
                lo = std::min(lo, y);
                hi = std::max(hi, y);
            }
            if (hi - lo < 1e-12) hi = lo + 1.0;
            os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" points=\"";
            for (size_t i = 0; i < s.ys.size(); ++i) {
                const double px = pad + (w - 2.0 * pad) * static_cast<double>(i) / (s.ys.size() - 1);
                const double py = h - pad - (h - 2.0 * pad) * (s.ys[i] - lo) / (hi - lo);
                os << num(px) << "," << num(py) << " ";
            }
            os << "\"/>\n";
            os << "<text x=\"" << pad << "\" y=\"" << legend_y << "\" fill=\"" << s.color
               << "\" font-size=\"12\">" << s.name << "</text>\n";
            legend_y += 14;
        }
    }
    os << "</svg>\n";
    return os.str();
}

struct Stage {
    const char* name;
    explicit Stage(const char* n) : name(n) {}
    [[noreturn]] void fail(const std::exception& e) const {
        throw std::runtime_error("stage '" + std::string(name) + "' failed: " + e.what());
    }
};

std::string report_csv_row(const std::string& which, const metrics::MetricsReport& r, double med) {
    std::ostringstream os;
    os << which << "," << r.n << "," << num(r.mse) << "," << num(r.psnr_db) << "," << num(r.ssim_val)
       << "," << num(r.w2) << "," << num(r.frechet_val) << "," << num(med);
    return os.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, const std::string& out_root,
                                const std::string& ae_checkpoint) {
    ExperimentConfig cfg = cfg_in;
    cfg.validate();
    ExperimentResult res;

    const fs::path run_dir = fs::path(out_root) / cfg.name;
    fs::create_directories(run_dir);
    res.run_dir = run_dir.string();
    write_file((run_dir / "config.ini").string(), serialize_config(cfg));

    // --- dataset ---
    DatasetSpec spec = cfg.dataset;
    spec.count = cfg.count_train + cfg.count_val;
    spec.seed = cfg.seed;
    DatasetContainer ds;
    {
        Stage st("synth");
        try {
            ds = synth_dataset(spec);
        } catch (const std::exception& e) {
            st.fail(e);
        }
    }
    res.dataset_hash = ds.hash();
    write_file((run_dir / "dataset.hash").string(), hex64(res.dataset_hash) + "\n");

    const auto n_train = static_cast<size_t>(cfg.count_train);
    auto hq_train = ds.hq_images(0, n_train);
    auto lq_train = ds.lq_images(0, n_train);
    auto hq_val = ds.hq_images(n_train);
    auto lq_val = ds.lq_images(n_train);

    // --- autoencoder ---
    nn::AutoEncoderT<real_t> ae;
    {
        Stage st("train-ae");
        try {
            if (cfg.pixel_space) {
                ae = nn::AutoEncoderT<real_t>::make_identity(cfg.dataset.channels);
            } else if (!ae_checkpoint.empty()) {
                ae = nn::AutoEncoderT<real_t>::load(ae_checkpoint);
            } else {
                latent::AeTrainConfig ac = cfg.ae;
                ac.spec.img_channels = cfg.dataset.channels;
                ac.seed = cfg.seed;
                ae = nn::AutoEncoderT<real_t>::create(ac.spec, cfg.seed);
                if (ac.epochs > 0) latent::train_autoencoder(ae, hq_train, ac);
                else ae.delta_ed = latent::evaluate_delta_ed(ae, hq_val);
            }
            if (!ae.identity) ae.save((run_dir / "ae.ckpt").string());
        } catch (const std::exception& e) {
            st.fail(e);
        }
    }
    res.delta_ed = ae.delta_ed;

    // --- model ---
    flow::ModelConfig mc;
    mc.flow = cfg.flow;
    mc.pixel_space = cfg.pixel_space;
    mc.use_coarse = cfg.use_coarse;
    mc.consistency = cfg.consistency;
    mc.seed = cfg.seed;
    auto model = flow::ModelT<real_t>::build(std::move(ae), mc);

    AdamWT<real_t> opt_coarse, opt_field;
    for (auto* o : {&opt_coarse, &opt_field}) {
        o->lr = cfg.lr;
        o->beta1 = cfg.beta1;
        o->beta2 = cfg.beta2;
        o->eps = cfg.eps;
        o->weight_decay = cfg.weight_decay;
    }

    restore::RestoreConfig rc;
    rc.steps = cfg.restore_steps < 0 ? cfg.flow.K : cfg.restore_steps;
    rc.sigma_s = cfg.restore_sigma;
    rc.use_ema = cfg.restore_use_ema;
    rc.collapse = cfg.restore_collapse;
    rc.seed = Rng::derive(cfg.seed, 0x7657A1ULL);

    auto restore_val = [&](std::vector<Image>& out) {
        out.clear();
        const size_t bs = 64;
        for (size_t off = 0; off < lq_val.size(); off += bs) {
            const size_t end = std::min(lq_val.size(), off + bs);
            std::vector<int> idx;
            for (size_t i = off; i < end; ++i) idx.push_back(static_cast<int>(i));
            auto y = latent::to_batch<real_t>(lq_val, idx);
            auto xhat = restore::restore_batch(model, y, rc, static_cast<int64_t>(off));
            for (size_t i = off; i < end; ++i)
                out.push_back(latent::from_batch(xhat, static_cast<int>(i - off)));
        }
    };

    std::ostringstream csv;
    csv << "epoch,l2,lcfm,mse,dp,val_psnr,val_w2\n";

    // --- training ---
    {
        Stage st("train");
        try {
            Rng trng(Rng::derive(cfg.seed, 0x7261ULL));
            std::vector<int> idx(hq_train.size());
            for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
            for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
                for (size_t i = idx.size(); i > 1; --i)
                    std::swap(idx[i - 1],
                              idx[static_cast<size_t>(trng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
                EpochRow row;
                row.epoch = epoch;
                int steps = 0;
                for (size_t off = 0; off < idx.size(); off += static_cast<size_t>(cfg.batch)) {
                    const size_t end = std::min(idx.size(), off + static_cast<size_t>(cfg.batch));
                    std::vector<int> bidx(idx.begin() + static_cast<std::ptrdiff_t>(off),
                                          idx.begin() + static_cast<std::ptrdiff_t>(end));
                    auto x = latent::to_batch<real_t>(hq_train, bidx);
                    auto y = latent::to_batch<real_t>(lq_train, bidx);
                    auto rep = flow::train_step(model, x, y, opt_coarse, opt_field, cfg.ema_decay, trng);
                    row.l2 += rep.l2;
                    row.lcfm += rep.lcfm;
                    row.mse += rep.mse;
                    row.dp += rep.dp;
                    ++steps;
                }
                if (steps > 0) {
                    row.l2 /= steps;
                    row.lcfm /= steps;
                    row.mse /= steps;
                    row.dp /= steps;
                }
                std::vector<Image> restored;
                restore_val(restored);
                double psnr_sum = 0;
                for (size_t i = 0; i < restored.size(); ++i)
                    psnr_sum += metrics::psnr(hq_val[i], restored[i]);
                row.val_psnr = psnr_sum / static_cast<double>(restored.size());
                row.val_w2 = metrics::w2_empirical(metrics::flatten_all(hq_val),
                                                   metrics::flatten_all(restored));
                res.curve.push_back(row);
                csv << row.epoch << "," << num(row.l2) << "," << num(row.lcfm) << "," << num(row.mse)
                    << "," << num(row.dp) << "," << num(row.val_psnr) << "," << num(row.val_w2) << "\n";
            }
        } catch (const std::exception& e) {
            model.save((run_dir / "model_live.ckpt").string());
            model.save_ema((run_dir / "model_ema.ckpt").string());
            write_file((run_dir / "metrics.csv").string(), csv.str());
            st.fail(e);
        }
    }

    model.save((run_dir / "model_live.ckpt").string());
    model.save_ema((run_dir / "model_ema.ckpt").string());
    write_file((run_dir / "metrics.csv").string(), csv.str());
    write_file((run_dir / "curve.svg").string(), curve_svg(res.curve));

    // --- evaluate ---
    {
        Stage st("evaluate");
        try {
            std::vector<Image> restored;
            restore_val(restored);
            res.final_restored = metrics::evaluate_pairs(hq_val, restored);
            res.final_lq = metrics::evaluate_pairs(hq_val, lq_val);
            for (size_t i = 0; i < hq_val.size(); ++i) {
                res.psnr_restored.push_back(metrics::psnr(hq_val[i], restored[i]));
                res.psnr_lq.push_back(metrics::psnr(hq_val[i], lq_val[i]));
            }
            res.median_psnr_restored = median(res.psnr_restored);
            res.median_psnr_lq = median(res.psnr_lq);
            std::ostringstream fin;
            fin << "which,n,mse,psnr,ssim,w2,frechet,median_psnr\n";
            fin << report_csv_row("restored", res.final_restored, res.median_psnr_restored) << "\n";
            fin << report_csv_row("lq", res.final_lq, res.median_psnr_lq) << "\n";
            write_file((run_dir / "final.csv").string(), fin.str());
        } catch (const std::exception& e) {
            st.fail(e);
        }
    }

    // post-run manifest check
    {
        std::vector<std::string> required = {"config.ini", "dataset.hash", "model_live.ckpt",
                                             "model_ema.ckpt", "metrics.csv", "final.csv", "curve.svg"};
        if (!cfg.pixel_space) required.push_back("ae.ckpt");
        std::ostringstream man;
        for (const auto& f : required) {
            if (!fs::exists(run_dir / f))
                throw std::runtime_error("manifest check failed: missing " + f + " in " + res.run_dir);
            man << f << "\n";
        }
        write_file((run_dir / "manifest.txt").string(), man.str());
    }
    return res;
}

std::vector<AblateRow> run_ablation(const ExperimentConfig& base, const std::string& key,
                                    const std::vector<std::string>& values,
                                    const std::vector<uint64_t>& seeds, const std::string& out_root) {
    std::vector<AblateRow> rows;
    for (const auto& value : values) {
        AblateRow row;
        row.key = key;
        row.value = value;
        for (uint64_t seed : seeds) {
            ExperimentConfig cfg = base;
            set_config_key(cfg, key, value);
            cfg.seed = seed;
            std::string tag = value;
            for (auto& ch : tag)
                if (ch == '.' || ch == '/') ch = '_';
            cfg.name = base.name + "-" + key.substr(key.find('.') + 1) + "-" + tag + "-s" +
                       std::to_string(seed);
            auto res = run_experiment(cfg, out_root);
            row.mean_median_psnr += res.median_psnr_restored;
            row.mean_frechet += res.final_restored.frechet_val;
            row.mean_w2 += res.final_restored.w2;
            ++row.seeds;
        }
        row.mean_median_psnr /= row.seeds;
        row.mean_frechet /= row.seeds;
        row.mean_w2 /= row.seeds;
        rows.push_back(row);
    }
    return rows;
}

std::string ablate_csv(const std::vector<AblateRow>& rows) {
    std::ostringstream os;
    os << "key,value,seeds,median_psnr,frechet,w2\n";
    for (const auto& r : rows)
        os << r.key << "," << r.value << "," << r.seeds << "," << num(r.mean_median_psnr) << ","
           << num(r.mean_frechet) << "," << num(r.mean_w2) << "\n";
    return os.str();
}

metrics::BoundReport verify_bound_for_run(const ExperimentConfig& cfg_in, const std::string& run_dir,
                                          uint64_t seed) {
    ExperimentConfig cfg = cfg_in;
    cfg.validate();
    nn::AutoEncoderT<real_t> ae =
        cfg.pixel_space ? nn::AutoEncoderT<real_t>::make_identity(cfg.dataset.channels)
                        : nn::AutoEncoderT<real_t>::load((fs::path(run_dir) / "ae.ckpt").string());
    auto model = flow::ModelT<real_t>::load((fs::path(run_dir) / "model_live.ckpt").string(),
                                            (fs::path(run_dir) / "model_ema.ckpt").string(),
                                            std::move(ae));
    DatasetSpec spec = cfg.dataset;
    spec.count = cfg.count_train + cfg.count_val;
    spec.seed = cfg.seed;
    auto ds = synth_dataset(spec);
    auto hq_val = ds.hq_images(static_cast<size_t>(cfg.count_train));
    auto lq_val = ds.lq_images(static_cast<size_t>(cfg.count_train));

    NoGradGuard ng;
    auto y = latent::to_batch<real_t>(lq_val);
    auto z0 = model.initial_latent(VarT<real_t>::constant(y)).value();
    const double sigma = cfg.restore_sigma < 0 ? cfg.flow.sigma_s : cfg.restore_sigma;
    if (sigma > 0) {
        Rng rng(Rng::derive(seed, 0xB0ULL));
        for (auto& v : z0.data) v += static_cast<real_t>(sigma * rng.normal());
    }
    metrics::VerifyBoundConfig vc;
    vc.euler_steps = cfg.restore_steps < 0 ? cfg.flow.K : cfg.restore_steps;
    vc.sigma_min = cfg.flow.sigma_min;
    vc.seed = seed;
    return metrics::verify_bound(model.ae, model.ema_field, hq_val, z0, vc);
}

}  // namespace lfr::data
