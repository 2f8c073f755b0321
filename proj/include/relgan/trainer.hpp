#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "relgan/checkpoint.hpp"
#include "relgan/data.hpp"
#include "relgan/losses.hpp"
#include "relgan/metrics.hpp"
#include "relgan/nn.hpp"
#include "relgan/optim.hpp"
#include "relgan/rng.hpp"

namespace relgan {

struct TrainConfig {
    std::string loss = "RaSGAN";
    std::string dataset = "ring8";
    double mode_std = -1;  // <= 0 keeps the dataset default
    std::uint64_t seed = 1;
    int batch_size = 64;
    int n_d = 1;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double gp_lambda = 10.0;
    long iterations = 20000;
    long metric_interval = 500;
    int latent_dim = 8;
    std::vector<int> g_hidden = {64, 64};
    std::vector<int> d_hidden = {64, 64};
    bool spectral_norm_d = true;
    bool batch_norm_g = true;
    int pack = 1;
    std::string optimizer = "adam";  // adam | sgd
    int metric_samples = 10000;
    int sample_dump = 2048;
    std::string out_dir;  // empty: keep everything in memory

    void validate() const {
        if (n_d < 1) throw ConfigError("config: n_d must be >= 1");
        if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
        if (iterations < 1) throw ConfigError("config: iterations must be >= 1");
        if (metric_interval < 1) throw ConfigError("config: metric_interval must be >= 1");
        if (pack < 1 || batch_size % pack != 0)
            throw ConfigError("config: pack must be >= 1 and divide batch_size");
        if (latent_dim < 1) throw ConfigError("config: latent_dim must be >= 1");
        if (optimizer != "adam" && optimizer != "sgd")
            throw ConfigError("config: optimizer must be adam or sgd");
        if (gp_lambda < 0) throw ConfigError("config: gp_lambda must be >= 0");
        if (metric_samples < 2) throw ConfigError("config: metric_samples must be >= 2");
    }
};

struct MetricRecord {
    long iter = 0;
    double loss_d = 0, loss_g = 0;
    double mean_c_real = 0, mean_c_fake = 0;
    double jsd_value = 0;
    int modes = 0;
    double hq_frac = 0;
    double frechet = 0;
    long wall_ms = 0;
};

struct RunLog {
    std::vector<MetricRecord> records;
    bool aborted = false;
    long abort_iter = -1;
};

struct RunResult {
    RunLog log;
    Network gen, critic;
    long d_steps = 0, g_steps = 0;
    double best_jsd = std::numeric_limits<double>::infinity();
    long best_iter = -1;
    int best_modes = 0;
    double best_hq = 0;
    double best_frechet = std::numeric_limits<double>::infinity();
    std::vector<ParamEntry> best_state;
};

/// RunLog CSV, schema pinned:
/// iter,loss_d,loss_g,mean_c_real,mean_c_fake,jsd,modes,hq_frac,frechet,wall_ms
inline void write_runlog_csv(const std::string& path, const RunLog& log) {
    std::ofstream f(path);
    if (!f) throw ConfigError("write_runlog_csv: cannot open " + path);
    f << "iter,loss_d,loss_g,mean_c_real,mean_c_fake,jsd,modes,hq_frac,frechet,wall_ms\n";
    for (const auto& r : log.records) {
        f << r.iter << ',' << format_double(r.loss_d) << ',' << format_double(r.loss_g) << ','
          << format_double(r.mean_c_real) << ',' << format_double(r.mean_c_fake) << ','
          << format_double(r.jsd_value) << ',' << r.modes << ',' << format_double(r.hq_frac) << ','
          << format_double(r.frechet) << ',' << r.wall_ms << '\n';
    }
}

namespace detail {

struct TrainState {
    const TrainConfig* cfg;
    NamedLoss loss;
    MixtureSpec data_spec;
    LatentPrior prior;
    Rng data_rng, latent_rng, gp_rng, eval_rng;
    GridHistogram ref_hist;
    FrechetStats ref_stats;

    TrainState(const TrainConfig& c, NamedLoss nl)
        : cfg(&c),
          loss(std::move(nl)),
          data_spec(MixtureSpec::by_name(c.dataset, c.mode_std)),
          prior{c.latent_dim},
          data_rng(c.seed, 1),
          latent_rng(c.seed, 2),
          gp_rng(c.seed, 3),
          eval_rng(c.seed, 4) {
        Rng ref_rng(c.seed, 5);
        auto ref = sample_real(data_spec, c.metric_samples, ref_rng);
        ref_hist = GridHistogram::from_samples(ref);
        ref_stats = FrechetStats::fit(ref);
    }
};

inline Tensor generator_samples(Network& gen, const LatentPrior& prior, int count, Rng& rng) {
    auto z = sample_latent(prior, count, rng);
    return forward_eval(gen, z);
}

}  // namespace detail

/// The shared alternating loop behind the three training operations:
/// n_D discriminator updates on fresh samples, then one generator update on
/// fresh samples, exactly in the listed statement order. Deterministic from
/// (config, seed); wall_ms in the log is the only measured quantity.
inline RunResult run_training(const TrainConfig& cfg) {
    cfg.validate();
    detail::TrainState st(cfg, named_loss(cfg.loss));
    const int m = cfg.batch_size;
    const int k = cfg.pack;

    RunResult res;
    res.gen = make_mlp(cfg.latent_dim, cfg.g_hidden, 2, Activation::relu, Activation::identity);
    if (cfg.batch_norm_g) enable_batch_norm_hidden(res.gen);
    res.critic = make_mlp(2 * k, cfg.d_hidden, 1, Activation::leaky_relu, Activation::identity, 0.2);
    if (cfg.spectral_norm_d) enable_spectral_norm(res.critic);
    init_params(res.gen, cfg.seed);
    init_params(res.critic, cfg.seed ^ 0xD15EA5EULL);

    const AdamConfig acfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
    Adam adam_g(acfg, res.gen.parameters());
    Adam adam_d(acfg, res.critic.parameters());

    const bool to_disk = !cfg.out_dir.empty();
    if (to_disk) {
        std::filesystem::create_directories(cfg.out_dir);
        Rng dump_rng(cfg.seed, 6);
        dump_samples_csv(cfg.out_dir + "/real_samples.csv",
                         sample_real(st.data_spec, cfg.sample_dump, dump_rng));
    }

    auto snapshot = [&]() {
        auto s = collect_state(res.gen, "g");
        auto d = collect_state(res.critic, "d");
        s.insert(s.end(), d.begin(), d.end());
        return s;
    };
    std::vector<ParamEntry> last_good = snapshot();

    const auto t0 = std::chrono::steady_clock::now();
    double last_ld = 0, last_lg = 0, last_cr = 0, last_cf = 0;

    auto grads_of = [](Tape& t, const Tensor& loss, const std::vector<Tensor>& leaves) {
        auto gm = t.backward(loss, std::span<const Tensor>(leaves));
        std::vector<std::vector<double>> gs;
        gs.reserve(leaves.size());
        for (const auto& lf : leaves) gs.push_back(gm.at(lf).to_vector());
        return gs;
    };

    for (long iter = 1; iter <= cfg.iterations; ++iter) {
        try {
            for (int dstep = 0; dstep < cfg.n_d; ++dstep) {
                auto xr = sample_real(st.data_spec, m, st.data_rng);
                auto z = sample_latent(st.prior, m, st.latent_rng);
                Tape tape;
                BoundNetwork bg(tape, res.gen, /*requires_grad=*/false, NetMode::train);
                BoundNetwork bd(tape, res.critic, /*requires_grad=*/true, NetMode::train);
                auto xf = bg.forward(tape.leaf(z, false));
                auto xr_in = pack(tape, tape.leaf(xr, false), k);
                auto xf_in = pack(tape, xf, k);
                auto cr = tape.reshape(bd.forward(xr_in), Shape{m / k});
                auto cf = tape.reshape(bd.forward(xf_in), Shape{m / k});
                auto ld = st.loss.d_loss(tape, cr, cf);
                if (st.loss.with_gp) {
                    CriticFn critic_fn = [&](Tape& tp, const Tensor& x) { return bd.forward(x); };
                    auto pen = gradient_penalty(tape, critic_fn, xr_in.detached(), xf_in.detached(),
                                                GpConfig(cfg.gp_lambda), st.gp_rng);
                    ld = tape.add(ld, pen);
                }
                auto leaves = bd.param_leaves();
                auto gs = grads_of(tape, ld, leaves);
                if (cfg.optimizer == "adam")
                    adam_d.step(res.critic.parameters(), gs);
                else
                    sgd_step(res.critic.parameters(), gs, cfg.lr);
                ++res.d_steps;
                last_ld = ld.item();
                last_cr = tape.mean(cr).item();
                last_cf = tape.mean(cf).item();
            }

            // Generator phase: fresh real and latent batches.
            auto xr = sample_real(st.data_spec, m, st.data_rng);
            auto z = sample_latent(st.prior, m, st.latent_rng);
            Tape tape;
            BoundNetwork bg(tape, res.gen, /*requires_grad=*/true, NetMode::train);
            BoundNetwork bd(tape, res.critic, /*requires_grad=*/false, NetMode::train);
            auto xf = bg.forward(tape.leaf(z, false));
            auto xr_in = pack(tape, tape.leaf(xr, false), k);
            auto xf_in = pack(tape, xf, k);
            auto cr = tape.reshape(bd.forward(xr_in), Shape{m / k});
            auto cf = tape.reshape(bd.forward(xf_in), Shape{m / k});
            auto lg = st.loss.g_loss(tape, cr, cf);
            auto leaves = bg.param_leaves();
            auto gs = grads_of(tape, lg, leaves);
            if (cfg.optimizer == "adam")
                adam_g.step(res.gen.parameters(), gs);
            else
                sgd_step(res.gen.parameters(), gs, cfg.lr);
            ++res.g_steps;
            last_lg = lg.item();
        } catch (const NumericError&) {
            res.log.aborted = true;
            res.log.abort_iter = iter;
            if (to_disk) save_checkpoint(cfg.out_dir + "/checkpoint_last_good.txt", last_good);
            break;
        }

        if (iter % cfg.metric_interval == 0) {
            auto gen_samples = detail::generator_samples(res.gen, st.prior, cfg.metric_samples, st.eval_rng);
            auto gh = GridHistogram::from_samples(gen_samples);
            auto ms = mode_stats(gen_samples, st.data_spec);
            auto fs = FrechetStats::fit(gen_samples);

            MetricRecord rec;
            rec.iter = iter;
            rec.loss_d = last_ld;
            rec.loss_g = last_lg;
            rec.mean_c_real = last_cr;
            rec.mean_c_fake = last_cf;
            rec.jsd_value = jsd(st.ref_hist, gh);
            rec.modes = ms.covered;
            rec.hq_frac = ms.hq_fraction;
            rec.frechet = frechet_distance(st.ref_stats, fs);
            rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            res.log.records.push_back(rec);

            last_good = snapshot();
            if (rec.jsd_value < res.best_jsd) {
                res.best_jsd = rec.jsd_value;
                res.best_iter = iter;
                res.best_modes = rec.modes;
                res.best_hq = rec.hq_frac;
                res.best_frechet = rec.frechet;
                res.best_state = last_good;
            }
            if (to_disk) {
                save_checkpoint(cfg.out_dir + "/checkpoint_latest.txt", last_good);
                Tensor head = gen_samples;
                if (gen_samples.dim(0) > cfg.sample_dump) {
                    Tape t;
                    head = t.slice(t.leaf(gen_samples, false), 0, 0, cfg.sample_dump).detached();
                }
                dump_samples_csv(cfg.out_dir + "/samples_" + std::to_string(iter) + ".csv", head);
            }
        }
    }

    if (to_disk) {
        write_runlog_csv(cfg.out_dir + "/runlog.csv", res.log);
        save_checkpoint(cfg.out_dir + "/checkpoint_final.txt", snapshot());
        if (!res.best_state.empty())
            save_checkpoint(cfg.out_dir + "/checkpoint_best.txt", res.best_state);
    }
    return res;
}

/// Algorithm for non-saturating RGANs with symmetric loss functions.
inline RunResult train_rgan(const TrainConfig& cfg) {
    auto nl = named_loss(cfg.loss);
    if (nl.family != LossFamily::relativistic)
        throw ConfigError("train_rgan: '" + cfg.loss + "' is not a relativistic (paired) loss");
    if (!nl.spec.symmetric || nl.spec.mode != SaturatingMode::non_saturating)
        throw ConfigError("train_rgan: requires a symmetric non-saturating spec");
    return run_training(cfg);
}

/// Algorithm for non-saturating RaGANs (batch-mean critic comparisons).
inline RunResult train_ragan(const TrainConfig& cfg) {
    auto nl = named_loss(cfg.loss);
    if (nl.family != LossFamily::relativistic_average)
        throw ConfigError("train_ragan: '" + cfg.loss + "' is not a relativistic-average loss");
    return run_training(cfg);
}

/// Baseline non-relativistic loop (standard losses, including the
/// gradient-penalty variants on the discriminator side).
inline RunResult train_standard(const TrainConfig& cfg) {
    auto nl = named_loss(cfg.loss);
    if (nl.family != LossFamily::standard)
        throw ConfigError("train_standard: '" + cfg.loss + "' is not a standard loss");
    return run_training(cfg);
}

/// Dispatch on the loss family.
inline RunResult train(const TrainConfig& cfg) {
    auto nl = named_loss(cfg.loss);
    switch (nl.family) {
        case LossFamily::standard: return train_standard(cfg);
        case LossFamily::relativistic: return train_rgan(cfg);
        case LossFamily::relativistic_average: return train_ragan(cfg);
    }
    throw ConfigError("train: bad loss family");
}

}  // namespace relgan
