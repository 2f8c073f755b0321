#pragma once

// Line-oriented `key = value` experiment files. `#` starts a comment.
// Unknown keys are rejected with their line number; every key has a
// default except `loss` and `seed`.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relgan/trainer.hpp"

namespace relgan {

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config line " + std::to_string(line) + ": bad boolean for " + key + ": '" + v + "'");
}

inline double parse_num(const std::string& v, const std::string& key, int line) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line) + ": bad number for " + key + ": '" + v + "'");
    }
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key, int line) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<int>(parse_num(item, key, line)));
    }
    return out;
}

}  // namespace detail

/// Parse experiment text into a TrainConfig. `origin` names the source for
/// error messages.
inline TrainConfig parse_experiment_text(const std::string& text, const std::string& origin) {
    TrainConfig cfg;
    bool has_loss = false, has_seed = false;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": expected 'key = value'");

        using detail::parse_bool;
        using detail::parse_int_list;
        using detail::parse_num;
        if (key == "loss") {
            cfg.loss = val;
            has_loss = true;
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_num(val, key, line_no));
            has_seed = true;
        } else if (key == "dataset") {
            cfg.dataset = val;
        } else if (key == "mode_std") {
            cfg.mode_std = parse_num(val, key, line_no);
        } else if (key == "batch_size") {
            cfg.batch_size = static_cast<int>(parse_num(val, key, line_no));
        } else if (key == "n_d") {
            cfg.n_d = static_cast<int>(parse_num(val, key, line_no));
        } else if (key == "lr") {
            cfg.lr = parse_num(val, key, line_no);
        } else if (key == "beta1") {
            cfg.beta1 = parse_num(val, key, line_no);
        } else if (key == "beta2") {
            cfg.beta2 = parse_num(val, key, line_no);
        } else if (key == "lambda") {
            cfg.gp_lambda = parse_num(val, key, line_no);
        } else if (key == "iterations") {
            cfg.iterations = static_cast<long>(parse_num(val, key, line_no));
        } else if (key == "metric_interval") {
            cfg.metric_interval = static_cast<long>(parse_num(val, key, line_no));
        } else if (key == "latent_dim") {
            cfg.latent_dim = static_cast<int>(parse_num(val, key, line_no));
        } else if (key == "g_hidden") {
            cfg.g_hidden = parse_int_list(val, key, line_no);
        } else if (key == "d_hidden") {
            cfg.d_hidden = parse_int_list(val, key, line_no);
        } else if (key == "spectral_norm_d") {
            cfg.spectral_norm_d = parse_bool(val, key, line_no);
        } else if (key == "batch_norm_g") {
            cfg.batch_norm_g = parse_bool(val, key, line_no);
        } else if (key == "pack") {
            cfg.pack = static_cast<int>(parse_num(val, key, line_no));
        } else if (key == "optimizer") {
            cfg.optimizer = val;
        } else if (key == "metric_samples") {
            cfg.metric_samples = static_cast<int>(parse_num(val, key, line_no));
        } else if (key == "sample_dump") {
            cfg.sample_dump = static_cast<int>(parse_num(val, key, line_no));
        } else if (key == "out_dir") {
            cfg.out_dir = val;
        } else {
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (!has_loss) throw ConfigError(origin + ": missing required key 'loss'");
    if (!has_seed) throw ConfigError(origin + ": missing required key 'seed'");
    named_loss(cfg.loss);  // reject unknown losses with the full name list
    cfg.validate();
    return cfg;
}

inline TrainConfig parse_experiment_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_experiment_text(ss.str(), path);
}

}  // namespace relgan
