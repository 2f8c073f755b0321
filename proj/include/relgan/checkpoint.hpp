#pragma once

// Parameter checkpoint file: versioned plain text, one named array per
// entry. Doubles are written with %.17g so a load reproduces the saved
// state bit-exactly.
//
//   relgan-checkpoint v1
//   <entry count>
//   <name> <ndims> <dim0> <dim1> ...
//   <values, space separated, one line>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relgan/nn.hpp"
#include "relgan/tensor.hpp"

namespace relgan {

struct ParamEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Full state of a network: trainable parameters plus batch-norm running
/// statistics and spectral-norm power vectors, so a run can resume exactly.
inline std::vector<ParamEntry> collect_state(const Network& net, const std::string& prefix) {
    std::vector<ParamEntry> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        const std::string p = prefix + ".layer" + std::to_string(i) + ".";
        out.push_back({p + "weight", Shape{l.out, l.in}, l.weight});
        out.push_back({p + "bias", Shape{l.out}, l.bias});
        if (l.batch_norm) {
            const auto& bn = *l.batch_norm;
            out.push_back({p + "bn_gamma", Shape{l.out}, bn.gamma});
            out.push_back({p + "bn_beta", Shape{l.out}, bn.beta});
            out.push_back({p + "bn_running_mean", Shape{l.out}, bn.running_mean});
            out.push_back({p + "bn_running_var", Shape{l.out}, bn.running_var});
        }
        if (l.spectral_norm) out.push_back({p + "sn_u", Shape{l.out}, l.sn_u});
    }
    return out;
}

inline void apply_state(Network& net, const std::vector<ParamEntry>& entries, const std::string& prefix) {
    auto find = [&](const std::string& name) -> const ParamEntry* {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& l = net.layers[i];
        const std::string p = prefix + ".layer" + std::to_string(i) + ".";
        auto take = [&](const std::string& suffix, std::vector<double>& dst, std::int64_t want) {
            const ParamEntry* e = find(p + suffix);
            if (!e) throw ConfigError("checkpoint: missing entry " + p + suffix);
            if (static_cast<std::int64_t>(e->values.size()) != want)
                throw ConfigError("checkpoint: size mismatch for " + p + suffix);
            dst = e->values;
        };
        take("weight", l.weight, static_cast<std::int64_t>(l.in) * l.out);
        take("bias", l.bias, l.out);
        if (l.batch_norm) {
            take("bn_gamma", l.batch_norm->gamma, l.out);
            take("bn_beta", l.batch_norm->beta, l.out);
            take("bn_running_mean", l.batch_norm->running_mean, l.out);
            take("bn_running_var", l.batch_norm->running_var, l.out);
        }
        if (l.spectral_norm) take("sn_u", l.sn_u, l.out);
    }
}

inline void save_checkpoint(const std::string& path, const std::vector<ParamEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw ConfigError("checkpoint: cannot open " + path + " for writing");
    f << "relgan-checkpoint v1\n" << entries.size() << "\n";
    for (const auto& e : entries) {
        f << e.name << ' ' << e.shape.size();
        for (int d : e.shape) f << ' ' << d;
        f << '\n';
        for (std::size_t i = 0; i < e.values.size(); ++i) {
            if (i) f << ' ';
            f << format_double(e.values[i]);
        }
        f << '\n';
    }
}

inline std::vector<ParamEntry> load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("checkpoint: cannot open " + path);
    std::string magic, version;
    f >> magic >> version;
    if (magic != "relgan-checkpoint" || version != "v1")
        throw ConfigError("checkpoint: unrecognized header in " + path);
    std::size_t count = 0;
    f >> count;
    std::vector<ParamEntry> entries(count);
    for (auto& e : entries) {
        std::size_t ndims = 0;
        f >> e.name >> ndims;
        e.shape.resize(ndims);
        for (auto& d : e.shape) f >> d;
        const auto n = shape_size(e.shape);
        e.values.resize(static_cast<std::size_t>(n));
        for (auto& v : e.values) f >> v;
        if (!f) throw ConfigError("checkpoint: truncated file " + path);
    }
    return entries;
}

}  // namespace relgan
