#include "zfda/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "zfda/layers.hpp"

namespace zfda {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    const size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t x = std::stoull(v, &pos);
        if (pos != v.size() || v[0] == '-') throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected finite number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    const std::string last = trim(cur);
    if (!last.empty() || !out.empty()) out.push_back(last);
    out.erase(std::remove(out.begin(), out.end(), std::string{}), out.end());
    return out;
}

std::string fmt_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Key {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

using KeyMap = std::map<std::string, Key>;

void check_range_i(const std::string& key, int64_t v, int64_t lo) {
    if (v < lo) throw ConfigError(key + ": must be >= " + std::to_string(lo) + ", got " + std::to_string(v));
}

Key int_key(int64_t RunConfig::* field, int64_t lo) {
    return {
        [field, lo](RunConfig& c, const std::string& k, const std::string& v) {
            const int64_t x = to_i64(k, v);
            check_range_i(k, x, lo);
            c.*field = x;
        },
        [field](const RunConfig& c) { return std::to_string(c.*field); },
    };
}

Key double_key(double RunConfig::* field, double lo, double hi, bool lo_open, bool hi_open) {
    return {
        [field, lo, hi, lo_open, hi_open](RunConfig& c, const std::string& k, const std::string& v) {
            const double x = to_f64(k, v);
            const bool below = lo_open ? x <= lo : x < lo;
            const bool above = hi_open ? x >= hi : x > hi;
            if (below || above)
                throw ConfigError(k + ": out of range " + (lo_open ? "(" : "[") + fmt_f64(lo) + "," + fmt_f64(hi) +
                                  (hi_open ? ")" : "]") + ", got '" + v + "'");
            c.*field = x;
        },
        [field](const RunConfig& c) { return fmt_f64(c.*field); },
    };
}

Key bool_key(bool RunConfig::* field) {
    return {
        [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = to_bool(k, v); },
        [field](const RunConfig& c) { return c.*field ? "true" : "false"; },
    };
}

Key string_key(std::string RunConfig::* field,
               std::vector<std::string> allowed = {}) {
    return {
        [field, allowed](RunConfig& c, const std::string& k, const std::string& v) {
            if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
                std::string opts;
                for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
                throw ConfigError(k + ": expected one of " + opts + ", got '" + v + "'");
            }
            c.*field = v;
        },
        [field](const RunConfig& c) { return c.*field; },
    };
}

Key layer_list_key(std::string RunConfig::* field) {
    return {
        [field](RunConfig& c, const std::string& k, const std::string& v) {
            try {
                parse_layer_list(v);
            } catch (const ConfigError& e) {
                throw ConfigError(k + ": " + e.what());
            }
            c.*field = v;
        },
        [field](const RunConfig& c) { return c.*field; },
    };
}

Key int_list_key(std::vector<int64_t> RunConfig::* field) {
    return {
        [field](RunConfig& c, const std::string& k, const std::string& v) {
            std::vector<int64_t> out;
            for (const std::string& item : split_list(v)) out.push_back(to_i64(k, item));
            if (out.empty()) throw ConfigError(k + ": empty list");
            c.*field = std::move(out);
        },
        [field](const RunConfig& c) {
            std::string s;
            for (size_t i = 0; i < (c.*field).size(); ++i) s += (i ? "," : "") + std::to_string((c.*field)[i]);
            return s;
        },
    };
}

Key gamma_list_key(std::vector<double> RunConfig::* field) {
    return {
        [field](RunConfig& c, const std::string& k, const std::string& v) {
            std::vector<double> out;
            for (const std::string& item : split_list(v)) {
                const double x = to_f64(k, item);
                if (x <= 0.0 || x > 1.0) throw ConfigError(k + ": gamma values must be in (0,1], got '" + item + "'");
                out.push_back(x);
            }
            if (out.empty()) throw ConfigError(k + ": empty list");
            c.*field = std::move(out);
        },
        [field](const RunConfig& c) {
            std::string s;
            for (size_t i = 0; i < (c.*field).size(); ++i) s += (i ? "," : "") + fmt_f64((c.*field)[i]);
            return s;
        },
    };
}

const KeyMap& key_map() {
    static const KeyMap* map = [] {
        auto* m = new KeyMap;
        (*m)["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
                        [](const RunConfig& c) { return std::to_string(c.seed); }};
        (*m)["out"] = string_key(&RunConfig::out_dir);
        (*m)["dataset.kind"] = string_key(&RunConfig::dataset_kind, {"synthetic", "cifar10", "cifar100", "zft"});
        (*m)["dataset.path"] = string_key(&RunConfig::dataset_path);
        (*m)["dataset.labels_path"] = string_key(&RunConfig::dataset_labels_path);
        (*m)["dataset.n"] = int_key(&RunConfig::dataset_n, 1);
        (*m)["dataset.channels"] = int_key(&RunConfig::dataset_channels, 1);
        (*m)["dataset.height"] = int_key(&RunConfig::dataset_height, 1);
        (*m)["dataset.width"] = int_key(&RunConfig::dataset_width, 1);
        (*m)["dataset.downsample"] = bool_key(&RunConfig::dataset_downsample);
        (*m)["split.pretrain_classes"] = int_list_key(&RunConfig::pretrain_classes);
        (*m)["split.domain_classes"] = int_list_key(&RunConfig::domain_classes);
        (*m)["split.eval_fraction"] = double_key(&RunConfig::eval_fraction, 0.0, 1.0, true, true);
        (*m)["split.domain_test_fraction"] = double_key(&RunConfig::domain_test_fraction, 0.0, 1.0, true, true);
        (*m)["model.encoder"] = layer_list_key(&RunConfig::encoder_spec);
        (*m)["model.decoder"] = layer_list_key(&RunConfig::decoder_spec);
        (*m)["pristine.checkpoint"] = string_key(&RunConfig::pristine_checkpoint);
        (*m)["pristine.digest"] = string_key(&RunConfig::pristine_digest);
        (*m)["pretrain.epochs"] = int_key(&RunConfig::pretrain_epochs, 1);
        (*m)["pretrain.lr"] = double_key(&RunConfig::pretrain_lr, 0.0, 1e9, true, false);
        (*m)["pretrain.batch"] = int_key(&RunConfig::pretrain_batch, 1);
        (*m)["domain.transform"] = string_key(&RunConfig::domain_transform, {"none", "va", "vp", "vc", "vh"});
        (*m)["domain.va_angle"] = double_key(&RunConfig::va_angle, -360.0, 360.0, false, false);
        (*m)["domain.vp_shift"] = double_key(&RunConfig::vp_shift, 0.0, 0.5, false, true);
        (*m)["domain.vc_contrast"] = double_key(&RunConfig::vc_contrast, 0.0, 100.0, true, false);
        (*m)["domain.vh_angle"] = double_key(&RunConfig::vh_angle, -360.0, 360.0, false, false);
        (*m)["full.epochs"] = int_key(&RunConfig::full_epochs, 0);
        (*m)["full.lr"] = double_key(&RunConfig::full_lr, 0.0, 1e9, true, false);
        (*m)["zfda.gamma"] = double_key(&RunConfig::zfda_gamma, 0.0, 1.0, true, false);
        (*m)["zfda.epochs"] = int_key(&RunConfig::zfda_epochs, 0);
        (*m)["zfda.alpha_s"] = double_key(&RunConfig::zfda_alpha_s, 0.0, 1e9, false, false);
        (*m)["zfda.alpha_v"] = double_key(&RunConfig::zfda_alpha_v, 0.0, 1e9, false, false);
        (*m)["zfda.batch"] = int_key(&RunConfig::zfda_batch, 1);
        (*m)["zfda.v_grad_mode"] = string_key(&RunConfig::zfda_v_grad_mode, {"dense", "masked"});
        (*m)["zfda.allocation"] = string_key(&RunConfig::zfda_allocation, {"linear", "uniform"});
        (*m)["zfda.update_scores"] = bool_key(&RunConfig::zfda_update_scores);
        (*m)["tuning.iterations"] = int_key(&RunConfig::tuning_iterations, 0);
        (*m)["tuning.samples"] = int_key(&RunConfig::tuning_samples, 1);
        (*m)["tuning.lr"] = double_key(&RunConfig::tuning_lr, 0.0, 1e9, true, false);
        (*m)["equalizer.epochs"] = int_key(&RunConfig::equalizer_epochs, 0);
        (*m)["equalizer.samples"] = int_key(&RunConfig::equalizer_samples, 1);
        (*m)["equalizer.lr"] = double_key(&RunConfig::equalizer_lr, 0.0, 1e9, true, false);
        (*m)["experiment.gammas"] = gamma_list_key(&RunConfig::experiment_gammas);
        (*m)["experiment.seeds"] = int_key(&RunConfig::experiment_seeds, 1);
        (*m)["experiment.ablation_gamma"] = double_key(&RunConfig::ablation_gamma, 0.0, 1.0, true, false);
        return m;
    }();
    return *map;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeyMap& keys = key_map();
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

std::vector<std::pair<std::string, std::string>> parse_config_lines(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_config_lines(ss.str())) set(k, v);
}

void RunConfig::apply_overrides(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    for (const auto& [name, key] : key_map()) os << name << " = " << key.get(*this) << "\n";
    return os.str();
}

Transform RunConfig::transform() const { return transform_of(parse_transform_kind(domain_transform)); }

Transform RunConfig::transform_of(TransformKind kind) const {
    switch (kind) {
        case TransformKind::VariedAngle: return {kind, va_angle};
        case TransformKind::VariedPerspective: return {kind, vp_shift};
        case TransformKind::VariedContrast: return {kind, vc_contrast};
        case TransformKind::VariedHue: return {kind, vh_angle};
        case TransformKind::None: return {kind, 0.0};
    }
    return {TransformKind::None, 0.0};
}

SamOptions RunConfig::sam_options() const {
    SamOptions opt;
    opt.gamma = zfda_gamma;
    opt.epochs = zfda_epochs;
    opt.alpha_s = zfda_alpha_s;
    opt.alpha_v = zfda_alpha_v;
    opt.batch_size = zfda_batch;
    opt.seed = seed;
    opt.v_grad_mode = zfda_v_grad_mode == "dense" ? VGradMode::Dense : VGradMode::Masked;
    opt.allocation = zfda_allocation == "linear" ? Allocation::Linear : Allocation::Uniform;
    opt.update_scores = zfda_update_scores;
    return opt;
}

}  // namespace zfda
