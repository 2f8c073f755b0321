#pragma once

// Verification suites behind `relgan gradcheck` and the acceptance tests:
// the closed-form discriminator/generator gradients against autodiff on
// random two-layer networks, and finite-difference checks of all named
// losses through small critics and generators (gradient penalties
// included, with the interpolation point pinned so the perturbed
// evaluations see the same objective).

#include <cmath>
#include <string>
#include <vector>

#include "relgan/losses.hpp"
#include "relgan/nn.hpp"
#include "relgan/rng.hpp"

namespace relgan {

struct GradcheckOptions {
    std::uint64_t seed = 1;
    double oracle_tolerance = 1e-8;
    double fd_tolerance = 1e-4;
    // Test fixture: deliberately flip the sign of the RSGAN discriminator
    // gradient before comparison, to prove the check catches a defect.
    bool inject_rsgan_sign_flip = false;
};

struct GradcheckRow {
    std::string name;
    double max_err_d = 0;
    double max_err_g = 0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckRow> oracle;  // closed-form vs autodiff
    std::vector<GradcheckRow> losses;  // autodiff vs finite differences
    double oracle_tolerance = 1e-8;
    double fd_tolerance = 1e-4;

    bool all_pass() const {
        for (const auto& r : oracle)
            if (!r.pass) return false;
        for (const auto& r : losses)
            if (!r.pass) return false;
        return true;
    }
};

namespace detail {

inline double rel_err(double got, double want, double abs_floor = 1e-6) {
    const double diff = std::abs(got - want);
    const double mag = std::abs(want);
    return mag < abs_floor ? diff : diff / mag;
}

inline double max_rel_err(const std::vector<std::vector<double>>& got,
                          const std::vector<std::vector<double>>& want) {
    double worst = 0;
    for (std::size_t p = 0; p < got.size(); ++p)
        for (std::size_t i = 0; i < got[p].size(); ++i)
            worst = std::max(worst, rel_err(got[p][i], want[p][i]));
    return worst;
}

inline std::vector<std::vector<double>> flat_grads(Tape& t, const Tensor& loss,
                                                   const std::vector<Tensor>& leaves) {
    auto gm = t.backward(loss, std::span<const Tensor>(leaves));
    std::vector<std::vector<double>> gs;
    gs.reserve(leaves.size());
    for (const auto& lf : leaves) gs.push_back(gm.at(lf).to_vector());
    return gs;
}

}  // namespace detail

/// Run every check; pure function of the options.
inline GradcheckReport run_gradcheck(const GradcheckOptions& opt = {}) {
    GradcheckReport report;
    report.oracle_tolerance = opt.oracle_tolerance;
    report.fd_tolerance = opt.fd_tolerance;
    Rng rng(opt.seed, 0xC6EC);
    const int m = 6;

    // --- closed-form oracle section -------------------------------------
    {
        Network critic = make_mlp(2, {8}, 1, Activation::tanh);
        Network gen = make_mlp(3, {8}, 2, Activation::tanh);
        init_params(critic, opt.seed + 100);
        init_params(gen, opt.seed + 101);
        std::vector<double> xr(m * 2), xf(m * 2), zs(m * 3);
        for (auto& v : xr) v = rng.uniform(-2, 2);
        for (auto& v : xf) v = rng.uniform(-2, 2);
        for (auto& v : zs) v = rng.uniform(-2, 2);
        const Tensor txr({m, 2}, xr), txf({m, 2}, xf), tz({m, 3}, zs);

        auto autodiff_d = [&](const LossSpec& spec) {
            Tape t;
            BoundNetwork bc(t, critic, true, NetMode::eval);
            auto cr = t.reshape(bc.forward(t.leaf(txr, false)), Shape{m});
            auto cf = t.reshape(bc.forward(t.leaf(txf, false)), Shape{m});
            return detail::flat_grads(t, losses::standard_d(t, spec, cr, cf), bc.param_leaves());
        };
        auto autodiff_g = [&](const ScalarMap& g2) {
            Tape t;
            BoundNetwork bg(t, gen, true, NetMode::eval);
            BoundNetwork bc(t, critic, false, NetMode::eval);
            auto cf = t.reshape(bc.forward(bg.forward(t.leaf(tz, false))), Shape{m});
            return detail::flat_grads(t, t.mean(g2.apply(t, cf)), bg.param_leaves());
        };

        auto add_row = [&](const std::string& name, double err) {
            report.oracle.push_back({name, err, 0.0, err < opt.oracle_tolerance});
        };
        add_row("SGAN_D", detail::max_rel_err(
                              autodiff_d(named_loss("SGAN").spec),
                              closed_form_gradients_oracle(GradOracleKind::sgan_d, critic, nullptr, txr, txf)));
        add_row("IPM_D", detail::max_rel_err(
                             autodiff_d(ipm_spec()),
                             closed_form_gradients_oracle(GradOracleKind::ipm_d, critic, nullptr, txr, txf)));
        add_row("SGAN_G", detail::max_rel_err(
                              autodiff_g(named_loss("SGAN").spec.g2),
                              closed_form_gradients_oracle(GradOracleKind::sgan_g, critic, &gen, tz)));
        add_row("IPM_G", detail::max_rel_err(
                             autodiff_g(ipm_spec().g2),
                             closed_form_gradients_oracle(GradOracleKind::ipm_g, critic, &gen, tz)));
    }

    // --- finite-difference section: all named losses --------------------
    Network critic0 = make_mlp(2, {6}, 1, Activation::tanh);
    Network gen0 = make_mlp(4, {6}, 2, Activation::tanh);
    init_params(critic0, opt.seed + 200);
    init_params(gen0, opt.seed + 201);
    std::vector<double> xr(m * 2), zs(m * 4);
    for (auto& v : xr) v = rng.uniform(-2, 2);
    for (auto& v : zs) v = rng.uniform(-2, 2);
    const Tensor txr({m, 2}, xr), tz({m, 4}, zs);

    GpConfig gp(10.0);
    gp.fixed_epsilon = 0.37;  // the perturbed evaluations must share the interpolates

    for (const auto& name : loss_names()) {
        auto nl = named_loss(name);
        Rng unused(0);

        // The discriminator objective as a function of critic parameters
        // (fake batch fixed by the base generator). `want_grads` additionally
        // runs the autodiff backward over the same tape.
        auto d_side = [&](Network& critic, std::vector<std::vector<double>>* want_grads) {
            Tape t;
            BoundNetwork bc(t, critic, want_grads != nullptr, NetMode::eval);
            BoundNetwork bg(t, gen0, false, NetMode::eval);
            auto xf = bg.forward(t.leaf(tz, false));
            auto cr = t.reshape(bc.forward(t.leaf(txr, false)), Shape{m});
            auto cf = t.reshape(bc.forward(xf), Shape{m});
            auto ld = nl.d_loss(t, cr, cf);
            if (nl.with_gp) {
                CriticFn fn = [&](Tape&, const Tensor& x) { return bc.forward(x); };
                ld = t.add(ld, gradient_penalty(t, fn, txr, xf.detached(), gp, unused));
            }
            if (want_grads) *want_grads = detail::flat_grads(t, ld, bc.param_leaves());
            return ld.item();
        };

        auto g_side = [&](Network& gen, std::vector<std::vector<double>>* want_grads) {
            Tape t;
            BoundNetwork bg(t, gen, want_grads != nullptr, NetMode::eval);
            BoundNetwork bc(t, critic0, false, NetMode::eval);
            auto cr = t.reshape(bc.forward(t.leaf(txr, false)), Shape{m});
            auto cf = t.reshape(bc.forward(bg.forward(t.leaf(tz, false))), Shape{m});
            auto lg = nl.g_loss(t, cr, cf);
            if (want_grads) *want_grads = detail::flat_grads(t, lg, bg.param_leaves());
            return lg.item();
        };

        auto fd_against = [&](Network& base, auto&& value_of, const std::vector<std::vector<double>>& got) {
            const double h = 1e-4;
            double worst = 0;
            auto params = base.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                for (std::size_t i = 0; i < params[p]->size(); ++i) {
                    const double orig = (*params[p])[i];
                    (*params[p])[i] = orig + h;
                    const double fp = value_of(base);
                    (*params[p])[i] = orig - h;
                    const double fm = value_of(base);
                    (*params[p])[i] = orig;
                    worst = std::max(worst, detail::rel_err(got[p][i], (fp - fm) / (2 * h)));
                }
            }
            return worst;
        };

        GradcheckRow row;
        row.name = name;
        std::vector<std::vector<double>> gd, gg;
        d_side(critic0, &gd);
        if (opt.inject_rsgan_sign_flip && name == "RSGAN")
            for (auto& v : gd)
                for (auto& x : v) x = -x;
        row.max_err_d = fd_against(critic0, [&](Network& c) { return d_side(c, nullptr); }, gd);
        g_side(gen0, &gg);
        row.max_err_g = fd_against(gen0, [&](Network& g) { return g_side(g, nullptr); }, gg);
        row.pass = row.max_err_d < opt.fd_tolerance && row.max_err_g < opt.fd_tolerance;
        report.losses.push_back(std::move(row));
    }
    return report;
}

}  // namespace relgan
