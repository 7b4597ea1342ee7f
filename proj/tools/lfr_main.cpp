#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lfr/experiment.hpp"
#include "lfr/restore.hpp"

namespace fs = std::filesystem;
using namespace lfr;

namespace {

std::string output_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("LFR_OUTPUT_ROOT")) return env;
    return "runs";
}

data::ExperimentConfig load_cfg(const std::string& path) {
    if (path.empty()) return data::ExperimentConfig{};
    return data::parse_config(path);
}

// "sigma=0.1:3,r=1:4,delta=0:0.08,q=30:100,kernel=9"
degrade::ParamRanges parse_ranges(const std::string& text, degrade::ParamRanges base) {
    if (text.empty()) return base;
    std::istringstream is(text);
    std::string part;
    while (std::getline(is, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw config_error("bad --ranges entry: " + part);
        const std::string key = part.substr(0, eq);
        const std::string val = part.substr(eq + 1);
        const auto colon = val.find(':');
        auto lo_hi = [&]() -> std::pair<double, double> {
            if (colon == std::string::npos) {
                const double v = std::stod(val);
                return {v, v};
            }
            return {std::stod(val.substr(0, colon)), std::stod(val.substr(colon + 1))};
        };
        if (key == "sigma") std::tie(base.sigma_lo, base.sigma_hi) = lo_hi();
        else if (key == "r") std::tie(base.r_lo, base.r_hi) = lo_hi();
        else if (key == "delta") std::tie(base.delta_lo, base.delta_hi) = lo_hi();
        else if (key == "q") {
            auto [lo, hi] = lo_hi();
            base.q_lo = static_cast<int>(lo);
            base.q_hi = static_cast<int>(hi);
        } else if (key == "kernel") {
            base.kernel_size = static_cast<int>(std::stod(val));
        } else {
            throw config_error("unknown --ranges key: " + key);
        }
    }
    base.validate();
    return base;
}

std::vector<std::string> sorted_images(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw config_error("no .pgm/.ppm images in " + dir);
    return files;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string part;
    while (std::getline(is, part, ',')) out.push_back(part);
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"lfr: latent flow restoration on procedurally generated images"};
    app.require_subcommand(1);

    std::string cfg_path, out_root_flag, out_path, in_path, run_dir, ranges_text;
    std::string restored_dir, reference_dir, ae_path, key;
    std::string values_text, seeds_text = "0";
    uint64_t seed = 0;
    int steps = -1;
    bool no_ema = false, no_collapse = false;
    double sigma_s = -1.0;

    auto* synth = app.add_subcommand("synth", "synthesize an HQ/LQ dataset container");
    synth->add_option("--config", cfg_path, "experiment config (defaults if omitted)");
    synth->add_option("--out", out_path, "output container path")->required();
    synth->add_option("--seed", seed, "dataset seed");

    auto* degrade_cmd = app.add_subcommand("degrade", "re-degrade the HQ images of a container");
    degrade_cmd->add_option("--input", in_path, "input container")->required();
    degrade_cmd->add_option("--out", out_path, "output container")->required();
    degrade_cmd->add_option("--seed", seed, "degradation seed");
    degrade_cmd->add_option("--ranges", ranges_text,
                            "parameter ranges, e.g. sigma=0.1:3,r=1:4,delta=0:0.08,q=30:100,kernel=9");

    auto* train_ae = app.add_subcommand("train-ae", "train the autoencoder on synthesized HQ images");
    train_ae->add_option("--config", cfg_path, "experiment config");
    train_ae->add_option("--out", out_path, "checkpoint path")->required();
    train_ae->add_option("--seed", seed, "override run.seed");

    auto* train = app.add_subcommand("train", "run the full experiment pipeline");
    train->add_option("--config", cfg_path, "experiment config");
    train->add_option("--out-root", out_root_flag, "output root (or LFR_OUTPUT_ROOT)");
    train->add_option("--ae", ae_path, "reuse an autoencoder checkpoint");
    train->add_option("--seed", seed, "override run.seed");

    auto* restore_cmd = app.add_subcommand("restore", "restore a directory of PGM/PPM images");
    restore_cmd->add_option("--checkpoint", run_dir, "run directory with model/ae checkpoints")->required();
    restore_cmd->add_option("--input-dir", in_path, "degraded images")->required();
    restore_cmd->add_option("--output-dir", out_path, "restored images")->required();
    restore_cmd->add_option("--steps", steps, "Euler steps M (default: trained K)");
    restore_cmd->add_option("--seed", seed, "noise seed");
    restore_cmd->add_option("--sigma-s", sigma_s, "inference noise std (default: training value)");
    restore_cmd->add_flag("--no-ema", no_ema, "use live weights instead of EMA");
    restore_cmd->add_flag("--no-collapse", no_collapse, "skip collapsing linear blocks");

    auto* evaluate = app.add_subcommand("evaluate", "metrics between two image directories");
    evaluate->add_option("--restored-dir", restored_dir, "restored images")->required();
    evaluate->add_option("--reference-dir", reference_dir, "reference images")->required();
    evaluate->add_option("--out", out_path, "write CSV here (default stdout)");

    auto* ablate = app.add_subcommand("ablate", "sweep one config key over values and seeds");
    ablate->add_option("--config", cfg_path, "base experiment config");
    ablate->add_option("--key", key, "config key, e.g. flow.beta")->required();
    ablate->add_option("--values", values_text, "comma-separated values")->required();
    ablate->add_option("--seeds", seeds_text, "comma-separated seeds (default 0)");
    ablate->add_option("--out-root", out_root_flag, "output root (or LFR_OUTPUT_ROOT)");

    auto* verify = app.add_subcommand("verify-bound", "empirical Wasserstein-2 bound check for a run");
    verify->add_option("--config", cfg_path, "experiment config of the run");
    verify->add_option("--run-dir", run_dir, "finished run directory")->required();
    verify->add_option("--seed", seed, "verification seed");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        auto cfg = load_cfg(cfg_path);
        data::DatasetSpec spec = cfg.dataset;
        spec.count = cfg.count_train + cfg.count_val;
        spec.seed = synth->count("--seed") ? seed : cfg.seed;
        data::synth_dataset(spec).save(out_path);
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }
    if (degrade_cmd->parsed()) {
        auto ds = data::DatasetContainer::load(in_path);
        auto ranges = parse_ranges(ranges_text, degrade::ParamRanges{});
        for (size_t i = 0; i < ds.records.size(); ++i) {
            auto& rec = ds.records[i];
            rec.params = degrade::sample_params(ranges, Rng::derive(seed, 0xD39 + i));
            rec.lq = degrade::apply(rec.hq, rec.params, Rng::derive(seed, 0x105E + i));
        }
        ds.save(out_path);
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }
    if (train_ae->parsed()) {
        auto cfg = load_cfg(cfg_path);
        if (train_ae->count("--seed")) cfg.seed = seed;
        data::DatasetSpec spec = cfg.dataset;
        spec.count = cfg.count_train;
        spec.seed = cfg.seed;
        auto ds = data::synth_dataset(spec);
        auto hq = ds.hq_images();
        latent::AeTrainConfig ac = cfg.ae;
        ac.spec.img_channels = cfg.dataset.channels;
        ac.seed = cfg.seed;
        auto ae = nn::AutoEncoderT<real_t>::create(ac.spec, cfg.seed);
        const double delta = latent::train_autoencoder(ae, hq, ac);
        ae.save(out_path);
        std::cout << "delta_ed = " << delta << "\nwrote " << out_path << "\n";
        return 0;
    }
    if (train->parsed()) {
        auto cfg = load_cfg(cfg_path);
        if (train->count("--seed")) cfg.seed = seed;
        auto res = data::run_experiment(cfg, output_root(out_root_flag), ae_path);
        std::cout << "run dir: " << res.run_dir << "\n"
                  << "delta_ed: " << res.delta_ed << "\n"
                  << "median PSNR restored: " << res.median_psnr_restored
                  << " dB (LQ baseline " << res.median_psnr_lq << " dB)\n"
                  << "val W2: " << res.final_restored.w2
                  << "  pixel-frechet: " << res.final_restored.frechet_val << "\n";
        return 0;
    }
    if (restore_cmd->parsed()) {
        nn::AutoEncoderT<real_t> ae;
        {
            auto ps = load_params<real_t>((fs::path(run_dir) / "model_live.ckpt").string());
            auto mc = flow::ModelT<real_t>::meta_config(ps);
            if (mc.pixel_space) {
                Image probe = read_pnm(sorted_images(in_path).front());
                ae = nn::AutoEncoderT<real_t>::make_identity(probe.c);
            } else {
                ae = nn::AutoEncoderT<real_t>::load((fs::path(run_dir) / "ae.ckpt").string());
            }
        }
        auto model = flow::ModelT<real_t>::load((fs::path(run_dir) / "model_live.ckpt").string(),
                                                (fs::path(run_dir) / "model_ema.ckpt").string(),
                                                std::move(ae));
        restore::RestoreConfig rc;
        rc.steps = steps < 0 ? model.cfg.flow.K : steps;
        rc.sigma_s = sigma_s;
        rc.seed = seed;
        rc.use_ema = !no_ema;
        rc.collapse = !no_collapse;
        fs::create_directories(out_path);
        const auto files = sorted_images(in_path);
        for (size_t i = 0; i < files.size(); ++i) {
            Image y = read_pnm(files[i]);
            auto yb = latent::to_batch<real_t>({y});
            auto xhat = restore::restore_batch(model, yb, rc, static_cast<int64_t>(i));
            write_pnm(latent::from_batch(xhat, 0),
                      (fs::path(out_path) / fs::path(files[i]).filename()).string());
        }
        std::cout << "restored " << files.size() << " images to " << out_path << "\n";
        return 0;
    }
    if (evaluate->parsed()) {
        const auto ref_files = sorted_images(reference_dir);
        const auto out_files = sorted_images(restored_dir);
        if (ref_files.size() != out_files.size())
            throw config_error("evaluate: directory sizes differ");
        std::vector<Image> ref, out;
        for (const auto& f : ref_files) ref.push_back(read_pnm(f));
        for (const auto& f : out_files) out.push_back(read_pnm(f));
        auto rep = metrics::evaluate_pairs(ref, out);
        std::ostringstream csv;
        csv << "n,mse,psnr,ssim,w2,frechet\n"
            << rep.n << "," << rep.mse << "," << rep.psnr_db << "," << rep.ssim_val << "," << rep.w2
            << "," << rep.frechet_val << "\n";
        if (out_path.empty()) std::cout << csv.str();
        else {
            std::ofstream os(out_path);
            os << csv.str();
            std::cout << "wrote " << out_path << "\n";
        }
        return 0;
    }
    if (ablate->parsed()) {
        auto cfg = load_cfg(cfg_path);
        std::vector<uint64_t> seeds;
        for (const auto& s : split_list(seeds_text)) seeds.push_back(std::stoull(s));
        const auto rows =
            data::run_ablation(cfg, key, split_list(values_text), seeds, output_root(out_root_flag));
        const auto csv = data::ablate_csv(rows);
        const auto path = fs::path(output_root(out_root_flag)) / (cfg.name + "-ablate.csv");
        std::ofstream os(path);
        os << csv;
        std::cout << csv << "wrote " << path.string() << "\n";
        return 0;
    }
    if (verify->parsed()) {
        auto cfg = load_cfg(cfg_path);
        auto rep = data::verify_bound_for_run(cfg, run_dir, seed);
        std::cout << metrics::bound_csv_header() << "\n" << metrics::bound_csv_row(rep) << "\n";
        std::ofstream os(fs::path(run_dir) / "bound.csv");
        os << metrics::bound_csv_header() << "\n" << metrics::bound_csv_row(rep) << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const contract_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
