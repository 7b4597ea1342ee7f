#pragma once

#include "lfr/bound.hpp"
#include "lfr/config.hpp"
#include "lfr/metrics.hpp"
#include "lfr/model.hpp"

namespace lfr::data {

struct EpochRow {
    int epoch = 0;
    double l2 = 0, lcfm = 0, mse = 0, dp = 0;
    double val_psnr = 0, val_w2 = 0;
};

struct ExperimentResult {
    std::string run_dir;
    uint64_t dataset_hash = 0;
    double delta_ed = 0.0;
    std::vector<EpochRow> curve;
    metrics::MetricsReport final_restored;  // restored-vs-HQ on validation
    metrics::MetricsReport final_lq;        // LQ-vs-HQ baseline
    std::vector<double> psnr_restored;      // per validation image
    std::vector<double> psnr_lq;
    double median_psnr_restored = 0.0;
    double median_psnr_lq = 0.0;
};

// Full pipeline: synthesize data, train (or load) the autoencoder, train the
// coarse estimator + field, restore the validation split with EMA weights,
// write metrics CSV, checkpoints and curve data into <out_root>/<run.name>.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_root,
                                const std::string& ae_checkpoint = "");

struct AblateRow {
    std::string key;
    std::string value;
    int seeds = 0;
    double mean_median_psnr = 0.0;
    double mean_frechet = 0.0;
    double mean_w2 = 0.0;
};

// One experiment per (value, seed); per-value rows aggregate over seeds.
std::vector<AblateRow> run_ablation(const ExperimentConfig& base, const std::string& key,
                                    const std::vector<std::string>& values,
                                    const std::vector<uint64_t>& seeds, const std::string& out_root);

std::string ablate_csv(const std::vector<AblateRow>& rows);

// Rebuild the model + restore config of a finished run directory and verify
// the Wasserstein-2 bound on freshly synthesized validation pairs.
metrics::BoundReport verify_bound_for_run(const ExperimentConfig& cfg, const std::string& run_dir,
                                          uint64_t seed);

double median(std::vector<double> v);

}  // namespace lfr::data
