#pragma once

// The four subcommands as library functions, so the binary stays a thin
// wrapper and the test suite can drive them directly.
//
// Exit codes: 0 success, 1 config error, 2 numeric failure / NaN abort,
// 3 check failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "relgan/config.hpp"
#include "relgan/data.hpp"
#include "relgan/gradcheck.hpp"
#include "relgan/losses.hpp"
#include "relgan/metrics.hpp"
#include "relgan/svg.hpp"
#include "relgan/trainer.hpp"

namespace relgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitCheckFailed = 3;

namespace detail {

inline std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string five_decimals(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.5f", v);
    return buf;
}

inline std::string config_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

inline std::string output_root() {
    if (const char* env = std::getenv("RELGAN_OUT"); env && *env) return env;
    return "runs";
}

}  // namespace detail

/// Run one or more experiment files, `jobs` of them concurrently. Each run
/// owns its output directory; on completion a final scatter SVG of real
/// versus generated points is written there.
inline int cmd_train(const std::vector<std::string>& config_paths, const std::string& out_override, int jobs,
                     std::optional<std::uint64_t> seed_override, std::ostream& out, std::ostream& err) {
    if (config_paths.empty()) {
        err << "train: no config files given\n";
        return kExitConfig;
    }
    if (jobs < 1) jobs = 1;

    std::vector<TrainConfig> cfgs;
    for (const auto& path : config_paths) {
        try {
            TrainConfig cfg = parse_experiment_file(path);
            if (seed_override) cfg.seed = *seed_override;
            if (cfg.out_dir.empty())
                cfg.out_dir = detail::output_root() + "/" + detail::config_stem(path);
            if (!out_override.empty())
                cfg.out_dir = config_paths.size() == 1 ? out_override
                                                       : out_override + "/" + detail::config_stem(path);
            cfgs.push_back(std::move(cfg));
        } catch (const ConfigError& e) {
            err << "train: " << e.what() << "\n";
            return kExitConfig;
        }
    }

    struct Slot {
        int code = kExitOk;
        std::string message;
        bool aborted = false;
        long records = 0;
        double best_jsd = 0;
        int best_modes = 0;
    };
    std::vector<Slot> slots(cfgs.size());

    auto run_one = [&](std::size_t idx) {
        const auto& cfg = cfgs[idx];
        auto& slot = slots[idx];
        try {
            RunResult res = train(cfg);
            slot.aborted = res.log.aborted;
            slot.records = static_cast<long>(res.log.records.size());
            slot.best_jsd = res.best_jsd;
            slot.best_modes = res.best_modes;
            // final scatter: the dumped real reference against fresh
            // generator output
            Rng svg_rng(cfg.seed, 7);
            auto gen_pts = forward_eval(res.gen, sample_latent(LatentPrior{cfg.latent_dim},
                                                               cfg.sample_dump, svg_rng));
            Rng real_rng(cfg.seed, 6);
            auto real_pts = sample_real(MixtureSpec::by_name(cfg.dataset, cfg.mode_std),
                                        cfg.sample_dump, real_rng);
            write_scatter_svg(cfg.out_dir + "/scatter.svg", real_pts, gen_pts);
            if (slot.aborted) {
                slot.code = kExitNumeric;
                slot.message = "aborted at iteration " + std::to_string(res.log.abort_iter) +
                               " (non-finite loss); last good checkpoint retained";
            }
        } catch (const ConfigError& e) {
            slot.code = kExitConfig;
            slot.message = e.what();
        } catch (const NumericError& e) {
            slot.code = kExitNumeric;
            slot.message = e.what();
        } catch (const std::exception& e) {
            slot.code = kExitConfig;
            slot.message = e.what();
        }
    };

    for (std::size_t base = 0; base < cfgs.size(); base += static_cast<std::size_t>(jobs)) {
        std::vector<std::thread> pool;
        for (std::size_t i = base; i < std::min(cfgs.size(), base + static_cast<std::size_t>(jobs)); ++i)
            pool.emplace_back(run_one, i);
        for (auto& th : pool) th.join();
    }

    int worst = kExitOk;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const auto& s = slots[i];
        if (s.code == kExitOk) {
            out << config_paths[i] << ": ok, " << s.records << " metric records, best jsd "
                << detail::five_decimals(s.best_jsd) << ", modes " << s.best_modes << ", output "
                << cfgs[i].out_dir << "\n";
        } else {
            err << config_paths[i] << ": " << s.message << "\n";
        }
        worst = std::max(worst, s.code);
    }
    return worst;
}

/// Oracle-vs-autodiff and finite-difference suites with per-loss maxima.
inline int cmd_gradcheck(std::ostream& out, const GradcheckOptions& opt = {}) {
    const auto report = run_gradcheck(opt);
    out << "closed-form gradient oracles vs autodiff (tolerance " << report.oracle_tolerance << "):\n";
    for (const auto& r : report.oracle)
        out << "  " << r.name << ": max rel err " << r.max_err_d << (r.pass ? "  ok" : "  FAIL") << "\n";
    out << "finite-difference checks, all named losses (tolerance " << report.fd_tolerance << "):\n";
    for (const auto& r : report.losses)
        out << "  " << r.name << ": D " << r.max_err_d << ", G " << r.max_err_g
            << (r.pass ? "  ok" : "  FAIL") << "\n";
    out << (report.all_pass() ? "gradcheck: all checks passed\n" : "gradcheck: FAILURES detected\n");
    return report.all_pass() ? kExitOk : kExitCheckFailed;
}

/// Absolute and relativistic-average probabilities for the given critic
/// values, plus every named loss evaluated on the batch. Without arguments,
/// prints the three worked single-critic scenarios.
inline int cmd_losstable(std::vector<double> reals, std::vector<double> fakes, std::ostream& out) {
    if (reals.empty() != fakes.empty()) {
        out << "losstable: provide both --real and --fake, or neither\n";
        return kExitConfig;
    }
    if (reals.empty()) {
        out << "scenario  C(x_r)  mean C(x_f)  abs P(real)  rel P(real)\n";
        const double scenarios[3][2] = {{8, -5}, {8, 7}, {-3, -5}};
        for (int i = 0; i < 3; ++i) {
            const double cr = scenarios[i][0], mf = scenarios[i][1];
            out << (i + 1) << "         " << cr << "       " << mf << "           "
                << detail::two_decimals(stable_sigmoid(cr)) << "         "
                << detail::two_decimals(stable_sigmoid(cr - mf)) << "\n";
        }
        return kExitOk;
    }

    double mean_r = 0, mean_f = 0;
    for (double v : reals) mean_r += v;
    for (double v : fakes) mean_f += v;
    mean_r /= static_cast<double>(reals.size());
    mean_f /= static_cast<double>(fakes.size());

    out << "mean C(x_r) = " << mean_r << ", mean C(x_f) = " << mean_f << "\n";
    out << "real critics: C, abs sigma(C), rel sigma(C - mean C(x_f))\n";
    for (double v : reals)
        out << "  " << v << "  " << detail::two_decimals(stable_sigmoid(v)) << "  "
            << detail::two_decimals(stable_sigmoid(v - mean_f)) << "\n";
    out << "fake critics: C, abs sigma(C), rel sigma(C - mean C(x_r))\n";
    for (double v : fakes)
        out << "  " << v << "  " << detail::two_decimals(stable_sigmoid(v)) << "  "
            << detail::two_decimals(stable_sigmoid(v - mean_r)) << "\n";

    if (reals.size() == fakes.size()) {
        auto cb = CriticBatch::from(reals, fakes);
        out << "named losses on this batch (gradient-penalty terms excluded; "
               "they depend on critic weights, not critic values):\n";
        for (const auto& name : loss_names()) {
            auto nl = named_loss(name);
            out << "  " << name << ": L_D = " << detail::five_decimals(nl.d_value(cb))
                << ", L_G = " << detail::five_decimals(nl.g_value(cb)) << "\n";
        }
    } else {
        out << "(real/fake lists differ in length; pairwise loss table skipped)\n";
    }
    return kExitOk;
}

/// Recompute the metric set from a samples CSV against a dataset's
/// reference distribution.
inline int cmd_metrics(const std::string& samples_csv, const std::string& dataset, std::uint64_t seed,
                       std::ostream& out) {
    try {
        auto samples = load_samples_csv(samples_csv);
        if (samples.rank() != 2 || samples.dim(1) != 2) {
            out << "metrics: " << samples_csv << " must hold 2-D points\n";
            return kExitConfig;
        }
        auto spec = MixtureSpec::by_name(dataset);
        Rng ref_rng(seed, 5);  // the trainer's reference stream
        auto ref = sample_real(spec, 10000, ref_rng);
        const double j = jsd(GridHistogram::from_samples(ref), GridHistogram::from_samples(samples));
        auto ms = mode_stats(samples, spec);
        const double fd = frechet_distance(FrechetStats::fit(ref), FrechetStats::fit(samples));
        out << "jsd=" << j << " modes=" << ms.covered << " hq_frac=" << ms.hq_fraction << " frechet=" << fd
            << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        out << "metrics: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        out << "metrics: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace relgan::cli
