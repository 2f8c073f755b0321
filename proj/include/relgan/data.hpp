#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "relgan/checkpoint.hpp"
#include "relgan/rng.hpp"
#include "relgan/tensor.hpp"

namespace relgan {

/// 2-D Gaussian mixture: uniform mode choice, isotropic noise at the chosen
/// center.
struct MixtureSpec {
    std::vector<std::array<double, 2>> centers;
    double std_dev = 0.02;
    std::string name;

    MixtureSpec(std::vector<std::array<double, 2>> c, double sd, std::string n)
        : centers(std::move(c)), std_dev(sd), name(std::move(n)) {
        if (centers.empty()) throw DomainError("MixtureSpec: need at least one mode");
        if (std_dev <= 0) throw DomainError("MixtureSpec: mode std must be positive");
    }

    int modes() const { return static_cast<int>(centers.size()); }

    /// Eight modes on a circle of radius 2 at angles 2 pi k / 8.
    static MixtureSpec ring8(double radius = 2.0, double sd = 0.02) {
        std::vector<std::array<double, 2>> c;
        for (int k = 0; k < 8; ++k) {
            const double a = 2.0 * M_PI * k / 8.0;
            c.push_back({radius * std::cos(a), radius * std::sin(a)});
        }
        return MixtureSpec(std::move(c), sd, "ring8");
    }

    /// 5x5 lattice on [-2,2]^2, unit spacing.
    static MixtureSpec grid25(double spacing = 1.0, double sd = 0.05) {
        std::vector<std::array<double, 2>> c;
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j) c.push_back({spacing * i, spacing * j});
        return MixtureSpec(std::move(c), sd, "grid25");
    }

    /// Two interleaved arcs, 12 mixture centers per moon, scaled to sit
    /// inside the [-3,3]^2 viewport.
    static MixtureSpec two_moons(double sd = 0.05) {
        std::vector<std::array<double, 2>> c;
        const int per_moon = 12;
        for (int k = 0; k < per_moon; ++k) {
            const double t = M_PI * k / (per_moon - 1);
            c.push_back({1.5 * std::cos(t) - 0.75, 1.5 * std::sin(t) - 0.375});
        }
        for (int k = 0; k < per_moon; ++k) {
            const double t = M_PI * k / (per_moon - 1);
            c.push_back({1.5 * (1.0 - std::cos(t)) - 0.75, 1.5 * (0.25 - std::sin(t)) - 0.375});
        }
        return MixtureSpec(std::move(c), sd, "two_moons");
    }

    static MixtureSpec by_name(const std::string& name, double std_override = -1) {
        MixtureSpec s = name == "ring8"       ? ring8()
                        : name == "grid25"    ? grid25()
                        : name == "two_moons" ? two_moons()
                                              : MixtureSpec({{0, 0}}, 1.0, "");
        if (s.name.empty()) throw ConfigError("unknown dataset '" + name + "' (ring8, grid25, two_moons)");
        if (std_override > 0) s.std_dev = std_override;
        return s;
    }
};

/// Mini-batch of mixture samples, [m x 2]. One uniform draw picks the mode,
/// two normals place the point.
inline Tensor sample_real(const MixtureSpec& spec, int m, Rng& rng) {
    if (m < 1) throw DomainError("sample_real: m must be positive");
    std::vector<double> data(static_cast<std::size_t>(m) * 2);
    for (int i = 0; i < m; ++i) {
        const auto& c = spec.centers[rng.uniform_int(static_cast<std::uint64_t>(spec.centers.size()))];
        data[static_cast<std::size_t>(i) * 2] = c[0] + spec.std_dev * rng.normal();
        data[static_cast<std::size_t>(i) * 2 + 1] = c[1] + spec.std_dev * rng.normal();
    }
    return Tensor({m, 2}, std::move(data));
}

/// Standard normal latent prior.
struct LatentPrior {
    int dim = 8;
};

inline Tensor sample_latent(const LatentPrior& prior, int m, Rng& rng) {
    if (m < 1) throw DomainError("sample_latent: m must be positive");
    std::vector<double> data(static_cast<std::size_t>(m) * prior.dim);
    for (auto& v : data) v = rng.normal();
    return Tensor({m, prior.dim}, std::move(data));
}

/// CSV dump of a sample matrix, `x,y` header for 2-D data.
inline void dump_samples_csv(const std::string& path, const Tensor& samples) {
    std::ofstream f(path);
    if (!f) throw ConfigError("dump_samples_csv: cannot open " + path);
    if (samples.rank() != 2) throw ShapeError("dump_samples_csv: samples must be rank-2");
    const int m = samples.dim(0), d = samples.dim(1);
    if (d == 2) {
        f << "x,y\n";
    } else {
        for (int j = 0; j < d; ++j) f << (j ? "," : "") << "c" << j;
        f << '\n';
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) f << (j ? "," : "") << format_double(samples.at(i, j));
        f << '\n';
    }
}

inline Tensor load_samples_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("load_samples_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("load_samples_csv: empty file " + path);
    std::vector<double> data;
    int cols = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        int c = 0;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            auto comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            data.push_back(std::stod(line.substr(pos, comma - pos)));
            ++c;
            pos = comma + 1;
        }
        if (cols == 0)
            cols = c;
        else if (c != cols)
            throw ConfigError("load_samples_csv: ragged row in " + path);
    }
    if (cols == 0) throw ConfigError("load_samples_csv: no data rows in " + path);
    const int rows = static_cast<int>(data.size()) / cols;
    return Tensor({rows, cols}, std::move(data));
}

}  // namespace relgan
