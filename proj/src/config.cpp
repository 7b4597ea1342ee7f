#include "lfr/config.hpp"

#include <charconv>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace lfr::data {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: bad numeric value for '" + key + "': " + v);
    }
}

int64_t parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw config_error("config: bad integer value for '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("config: bad boolean value for '" + key + "': " + v);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << v;
    return os.str();
}

// One registry drives parsing and serialization so a config round-trips.
struct Field {
    std::string key;  // "section.key"
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::vector<Field> field_registry() {
    auto dbl = [](auto member_set, auto member_get) {
        return std::pair(member_set, member_get);
    };
    (void)dbl;
    std::vector<Field> f;
    auto add = [&f](const std::string& key, auto set, auto get) {
        f.push_back({key, set, get});
    };

    add("run.name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
        [](const ExperimentConfig& c) { return c.name; });
    add("run.seed",
        [](ExperimentConfig& c, const std::string& v) { c.seed = static_cast<uint64_t>(parse_int(v, "run.seed")); },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); });
    add("run.epochs",
        [](ExperimentConfig& c, const std::string& v) { c.epochs = static_cast<int>(parse_int(v, "run.epochs")); },
        [](const ExperimentConfig& c) { return std::to_string(c.epochs); });
    add("run.batch",
        [](ExperimentConfig& c, const std::string& v) { c.batch = static_cast<int>(parse_int(v, "run.batch")); },
        [](const ExperimentConfig& c) { return std::to_string(c.batch); });

    add("dataset.generator", [](ExperimentConfig& c, const std::string& v) { c.dataset.generator = v; },
        [](const ExperimentConfig& c) { return c.dataset.generator; });
    add("dataset.size",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.size = static_cast<int>(parse_int(v, "dataset.size")); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.size); });
    add("dataset.channels",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.channels = static_cast<int>(parse_int(v, "dataset.channels")); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.channels); });
    add("dataset.count_train",
        [](ExperimentConfig& c, const std::string& v) { c.count_train = static_cast<int>(parse_int(v, "dataset.count_train")); },
        [](const ExperimentConfig& c) { return std::to_string(c.count_train); });
    add("dataset.count_val",
        [](ExperimentConfig& c, const std::string& v) { c.count_val = static_cast<int>(parse_int(v, "dataset.count_val")); },
        [](const ExperimentConfig& c) { return std::to_string(c.count_val); });

    add("degrade.sigma_lo",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.sigma_lo = parse_double(v, "degrade.sigma_lo"); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.ranges.sigma_lo); });
    add("degrade.sigma_hi",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.sigma_hi = parse_double(v, "degrade.sigma_hi"); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.ranges.sigma_hi); });
    add("degrade.r_lo",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.r_lo = parse_double(v, "degrade.r_lo"); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.ranges.r_lo); });
    add("degrade.r_hi",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.r_hi = parse_double(v, "degrade.r_hi"); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.ranges.r_hi); });
    add("degrade.delta_lo",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.delta_lo = parse_double(v, "degrade.delta_lo"); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.ranges.delta_lo); });
    add("degrade.delta_hi",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.delta_hi = parse_double(v, "degrade.delta_hi"); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.ranges.delta_hi); });
    add("degrade.q_lo",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.q_lo = static_cast<int>(parse_int(v, "degrade.q_lo")); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.ranges.q_lo); });
    add("degrade.q_hi",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.q_hi = static_cast<int>(parse_int(v, "degrade.q_hi")); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.ranges.q_hi); });
    add("degrade.kernel_size",
        [](ExperimentConfig& c, const std::string& v) { c.dataset.ranges.kernel_size = static_cast<int>(parse_int(v, "degrade.kernel_size")); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.ranges.kernel_size); });

    add("ae.width",
        [](ExperimentConfig& c, const std::string& v) { c.ae.spec.width = static_cast<int>(parse_int(v, "ae.width")); },
        [](const ExperimentConfig& c) { return std::to_string(c.ae.spec.width); });
    add("ae.latent_channels",
        [](ExperimentConfig& c, const std::string& v) { c.ae.spec.latent_channels = static_cast<int>(parse_int(v, "ae.latent_channels")); },
        [](const ExperimentConfig& c) { return std::to_string(c.ae.spec.latent_channels); });
    add("ae.linear",
        [](ExperimentConfig& c, const std::string& v) { c.ae.spec.linear = parse_bool(v, "ae.linear"); },
        [](const ExperimentConfig& c) { return c.ae.spec.linear ? "true" : "false"; });
    add("ae.epochs",
        [](ExperimentConfig& c, const std::string& v) { c.ae.epochs = static_cast<int>(parse_int(v, "ae.epochs")); },
        [](const ExperimentConfig& c) { return std::to_string(c.ae.epochs); });
    add("ae.lr", [](ExperimentConfig& c, const std::string& v) { c.ae.lr = parse_double(v, "ae.lr"); },
        [](const ExperimentConfig& c) { return fmt(c.ae.lr); });
    add("ae.weight_decay",
        [](ExperimentConfig& c, const std::string& v) { c.ae.weight_decay = parse_double(v, "ae.weight_decay"); },
        [](const ExperimentConfig& c) { return fmt(c.ae.weight_decay); });
    add("ae.holdout_frac",
        [](ExperimentConfig& c, const std::string& v) { c.ae.holdout_frac = parse_double(v, "ae.holdout_frac"); },
        [](const ExperimentConfig& c) { return fmt(c.ae.holdout_frac); });

    add("flow.K",
        [](ExperimentConfig& c, const std::string& v) { c.flow.K = static_cast<int>(parse_int(v, "flow.K")); },
        [](const ExperimentConfig& c) { return std::to_string(c.flow.K); });
    add("flow.delta_t",
        [](ExperimentConfig& c, const std::string& v) { c.flow.delta_t = parse_double(v, "flow.delta_t"); },
        [](const ExperimentConfig& c) { return fmt(c.flow.delta_t); });
    add("flow.alpha",
        [](ExperimentConfig& c, const std::string& v) { c.flow.alpha = parse_double(v, "flow.alpha"); },
        [](const ExperimentConfig& c) { return fmt(c.flow.alpha); });
    add("flow.sigma_min",
        [](ExperimentConfig& c, const std::string& v) { c.flow.sigma_min = parse_double(v, "flow.sigma_min"); },
        [](const ExperimentConfig& c) { return fmt(c.flow.sigma_min); });
    add("flow.sigma_s",
        [](ExperimentConfig& c, const std::string& v) { c.flow.sigma_s = parse_double(v, "flow.sigma_s"); },
        [](const ExperimentConfig& c) { return fmt(c.flow.sigma_s); });
    add("flow.beta",
        [](ExperimentConfig& c, const std::string& v) { c.flow.beta = parse_double(v, "flow.beta"); },
        [](const ExperimentConfig& c) { return fmt(c.flow.beta); });
    add("flow.segment_mode",
        [](ExperimentConfig& c, const std::string& v) {
            if (v == "shared") c.flow.segment_mode = flow::FlowConfig::SegmentMode::kSharedIndex;
            else if (v == "own") c.flow.segment_mode = flow::FlowConfig::SegmentMode::kOwnIndex;
            else throw config_error("config: flow.segment_mode must be 'shared' or 'own'");
        },
        [](const ExperimentConfig& c) {
            return c.flow.segment_mode == flow::FlowConfig::SegmentMode::kSharedIndex ? "shared" : "own";
        });
    add("flow.pixel_space",
        [](ExperimentConfig& c, const std::string& v) { c.pixel_space = parse_bool(v, "flow.pixel_space"); },
        [](const ExperimentConfig& c) { return c.pixel_space ? "true" : "false"; });
    add("flow.use_coarse",
        [](ExperimentConfig& c, const std::string& v) { c.use_coarse = parse_bool(v, "flow.use_coarse"); },
        [](const ExperimentConfig& c) { return c.use_coarse ? "true" : "false"; });
    add("flow.consistency",
        [](ExperimentConfig& c, const std::string& v) { c.consistency = parse_bool(v, "flow.consistency"); },
        [](const ExperimentConfig& c) { return c.consistency ? "true" : "false"; });

    add("optim.lr", [](ExperimentConfig& c, const std::string& v) { c.lr = parse_double(v, "optim.lr"); },
        [](const ExperimentConfig& c) { return fmt(c.lr); });
    add("optim.beta1",
        [](ExperimentConfig& c, const std::string& v) { c.beta1 = parse_double(v, "optim.beta1"); },
        [](const ExperimentConfig& c) { return fmt(c.beta1); });
    add("optim.beta2",
        [](ExperimentConfig& c, const std::string& v) { c.beta2 = parse_double(v, "optim.beta2"); },
        [](const ExperimentConfig& c) { return fmt(c.beta2); });
    add("optim.eps", [](ExperimentConfig& c, const std::string& v) { c.eps = parse_double(v, "optim.eps"); },
        [](const ExperimentConfig& c) { return fmt(c.eps); });
    add("optim.weight_decay",
        [](ExperimentConfig& c, const std::string& v) { c.weight_decay = parse_double(v, "optim.weight_decay"); },
        [](const ExperimentConfig& c) { return fmt(c.weight_decay); });
    add("optim.ema_decay",
        [](ExperimentConfig& c, const std::string& v) { c.ema_decay = parse_double(v, "optim.ema_decay"); },
        [](const ExperimentConfig& c) { return fmt(c.ema_decay); });

    add("restore.steps",
        [](ExperimentConfig& c, const std::string& v) { c.restore_steps = static_cast<int>(parse_int(v, "restore.steps")); },
        [](const ExperimentConfig& c) { return std::to_string(c.restore_steps); });
    add("restore.sigma_s",
        [](ExperimentConfig& c, const std::string& v) { c.restore_sigma = parse_double(v, "restore.sigma_s"); },
        [](const ExperimentConfig& c) { return fmt(c.restore_sigma); });
    add("restore.use_ema",
        [](ExperimentConfig& c, const std::string& v) { c.restore_use_ema = parse_bool(v, "restore.use_ema"); },
        [](const ExperimentConfig& c) { return c.restore_use_ema ? "true" : "false"; });
    add("restore.collapse",
        [](ExperimentConfig& c, const std::string& v) { c.restore_collapse = parse_bool(v, "restore.collapse"); },
        [](const ExperimentConfig& c) { return c.restore_collapse ? "true" : "false"; });
    return f;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (epochs < 0) throw config_error("config: run.epochs must be >= 0");
    if (batch < 1) throw config_error("config: run.batch must be >= 1");
    if (count_train < 1 || count_val < 1)
        throw config_error("config: dataset.count_train/count_val must be >= 1");
    try {
        dataset.validate();
    } catch (const contract_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    if (flow.K < 1) throw config_error("config: validation failed for key 'K': must be >= 1");
    try {
        flow.validate();
    } catch (const contract_error& e) {
        throw config_error(std::string("config: flow: ") + e.what());
    }
    if (ae.spec.width < 1 || ae.spec.latent_channels < 1)
        throw config_error("config: ae.width/ae.latent_channels must be >= 1");
    if (ae.epochs < 0) throw config_error("config: ae.epochs must be >= 0");
    if (lr <= 0 || ae.lr <= 0) throw config_error("config: learning rates must be > 0");
    if (ema_decay < 0 || ema_decay >= 1) throw config_error("config: optim.ema_decay must be in [0, 1)");
    if (restore_steps == 0 || restore_steps < -1)
        throw config_error("config: restore.steps must be >= 1 (or -1 for K)");
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    static const auto fields = field_registry();
    std::map<std::string, const Field*> by_key;
    for (const auto& f : fields) by_key[f.key] = &f;

    std::istringstream is(text);
    std::string line, section;
    std::vector<std::string> unknown;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        auto it = by_key.find(full);
        if (it == by_key.end()) {
            unknown.push_back(full + " (line " + std::to_string(lineno) + ")");
            continue;
        }
        it->second->set(cfg, value);
    }
    if (!unknown.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& u : unknown) msg += " " + u + ";";
        throw config_error(msg);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    static const auto fields = field_registry();
    for (const auto& f : fields)
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    throw config_error("config: unknown key '" + key + "'");
}

std::string serialize_config(const ExperimentConfig& cfg) {
    static const auto fields = field_registry();
    std::ostringstream os;
    std::string section;
    for (const auto& f : fields) {
        const auto dot = f.key.find('.');
        const std::string sec = f.key.substr(0, dot);
        const std::string key = f.key.substr(dot + 1);
        if (sec != section) {
            if (!section.empty()) os << "\n";
            os << "[" << sec << "]\n";
            section = sec;
        }
        os << key << " = " << f.get(cfg) << "\n";
    }
    return os.str();
}

}  // namespace lfr::data
