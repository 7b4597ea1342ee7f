#pragma once

#include <string>

#include "lfr/dataset.hpp"
#include "lfr/flow.hpp"
#include "lfr/latent.hpp"
#include "lfr/restore.hpp"

namespace lfr::data {

// One experiment: dataset synthesis, autoencoder training, flow training,
// restoration and evaluation. Defaults are the desk-scale configuration.
struct ExperimentConfig {
    // [run]
    std::string name = "run";
    uint64_t seed = 0;
    int epochs = 30;
    int batch = 64;

    // [dataset]
    DatasetSpec dataset;  // count is train+val
    int count_train = 2048;
    int count_val = 256;

    // [ae]
    latent::AeTrainConfig ae;

    // [flow]
    flow::FlowConfig flow;
    bool pixel_space = false;
    bool use_coarse = true;
    bool consistency = true;

    // [optim]
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.02;
    double ema_decay = 0.999;

    // [restore]
    int restore_steps = -1;       // -1: use K
    double restore_sigma = -1.0;  // -1: training sigma_s
    bool restore_use_ema = true;
    bool restore_collapse = true;

    void validate() const;
};

// key = value sections; '#' comments; unknown keys rejected by name, missing
// keys fall back to the defaults above.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");
ExperimentConfig parse_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Assign one "section.key" by its textual value; unknown keys throw.
void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

}  // namespace lfr::data
