#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relgan/nn.hpp"
#include "relgan/rng.hpp"
#include "relgan/tape.hpp"
#include "relgan/tensor.hpp"

namespace relgan {

/// One scalar-to-scalar map from the loss zoo's closed set. `negated` wraps
/// the map in an outer minus, which is how saturating generator maps (-f)
/// are expressed.
struct ScalarMap {
    enum class Kind {
        neg_log_sigmoid,      // -log sigma(y)
        neg_log_sigmoid_neg,  // -log sigma(-y) == -log(1 - sigma(y))
        square_shift,         // (y - shift)^2
        hinge_one_minus,      // max(0, 1 - y)
        hinge_one_plus,       // max(0, 1 + y)
        identity,             // y
        negation,             // -y
    };

    Kind kind = Kind::identity;
    double shift = 0.0;
    bool negated = false;

    double eval(double y) const {
        double v = 0.0;
        switch (kind) {
            case Kind::neg_log_sigmoid: v = -stable_log_sigmoid(y); break;
            case Kind::neg_log_sigmoid_neg: v = -stable_log_sigmoid(-y); break;
            case Kind::square_shift: v = (y - shift) * (y - shift); break;
            case Kind::hinge_one_minus: v = std::max(0.0, 1.0 - y); break;
            case Kind::hinge_one_plus: v = std::max(0.0, 1.0 + y); break;
            case Kind::identity: v = y; break;
            case Kind::negation: v = -y; break;
        }
        return negated ? -v : v;
    }

    Tensor apply(Tape& t, const Tensor& y) const {
        Tensor v;
        switch (kind) {
            case Kind::neg_log_sigmoid: v = t.neg(t.log_sigmoid(y)); break;
            case Kind::neg_log_sigmoid_neg: v = t.neg(t.log_sigmoid(t.neg(y))); break;
            case Kind::square_shift: v = t.square(t.add_scalar(y, -shift)); break;
            case Kind::hinge_one_minus: v = t.max0(t.add_scalar(t.neg(y), 1.0)); break;
            case Kind::hinge_one_plus: v = t.max0(t.add_scalar(y, 1.0)); break;
            case Kind::identity: v = y; break;
            case Kind::negation: v = t.neg(y); break;
        }
        return negated ? t.neg(v) : v;
    }

    ScalarMap negate() const {
        ScalarMap m = *this;
        m.negated = !m.negated;
        return m;
    }
};

enum class SaturatingMode { saturating, non_saturating, custom };

/// The quadruple (f1, f2, g1, g2) defining a GAN objective over critic
/// values: L_D pairs f1 with real and f2 with fake critics, L_G does the
/// same with g1, g2 (either directly, or after the relativistic /
/// relativistic-average transform of the arguments).
struct LossSpec {
    ScalarMap f1, f2, g1, g2;
    std::string name;
    bool symmetric = false;  // asserts f2(-y) == f1(y)
    SaturatingMode mode = SaturatingMode::custom;
};

/// Check the spec's declared flags on sampled arguments to 1e-12:
/// symmetric means f2(-y) = f1(y); non_saturating means g1 = f2, g2 = f1;
/// saturating means g1 = -f1, g2 = -f2.
inline void validate(const LossSpec& spec) {
    Rng rng(0xBEEF);
    for (int i = 0; i < 256; ++i) {
        const double y = rng.uniform(-10, 10);
        if (spec.symmetric && std::abs(spec.f2.eval(-y) - spec.f1.eval(y)) > 1e-12)
            throw DomainError("loss spec " + spec.name + ": symmetric flag violated at y=" + std::to_string(y));
        if (spec.mode == SaturatingMode::non_saturating) {
            if (std::abs(spec.g1.eval(y) - spec.f2.eval(y)) > 1e-12 ||
                std::abs(spec.g2.eval(y) - spec.f1.eval(y)) > 1e-12)
                throw DomainError("loss spec " + spec.name + ": non-saturating mode violated");
        }
        if (spec.mode == SaturatingMode::saturating) {
            if (std::abs(spec.g1.eval(y) + spec.f1.eval(y)) > 1e-12 ||
                std::abs(spec.g2.eval(y) + spec.f2.eval(y)) > 1e-12)
                throw DomainError("loss spec " + spec.name + ": saturating mode violated");
        }
    }
}

/// Paired critic outputs on real and fake mini-batches.
struct CriticBatch {
    Tensor c_real, c_fake;  // [m] each, detached

    CriticBatch(Tensor real, Tensor fake) : c_real(std::move(real)), c_fake(std::move(fake)) {
        if (c_real.rank() != 1 || c_fake.rank() != 1 || c_real.size() != c_fake.size())
            throw ShapeError("CriticBatch: c_real and c_fake must be equal-length vectors");
        check_finite(c_real.data(), "CriticBatch");
        check_finite(c_fake.data(), "CriticBatch");
    }

    static CriticBatch from(std::vector<double> real, std::vector<double> fake) {
        const int m = static_cast<int>(real.size());
        const int mf = static_cast<int>(fake.size());
        return CriticBatch(Tensor({m}, std::move(real)), Tensor({mf}, std::move(fake)));
    }

    int m() const { return c_real.dim(0); }
};

// ---------------------------------------------------------------------------
// Loss assembly on a tape (used by training) and as direct values (used by
// analysis and tests; an independent evaluation route).
// ---------------------------------------------------------------------------

namespace losses {

/// L_D of the generic objective: E[f1(C(x_r))] + E[f2(C(x_f))].
inline Tensor standard_d(Tape& t, const LossSpec& s, const Tensor& cr, const Tensor& cf) {
    return t.add(t.mean(s.f1.apply(t, cr)), t.mean(s.f2.apply(t, cf)));
}

/// L_G of the generic objective: E[g1(C(x_r))] + E[g2(C(x_f))].
inline Tensor standard_g(Tape& t, const LossSpec& s, const Tensor& cr, const Tensor& cf) {
    return t.add(t.mean(s.g1.apply(t, cr)), t.mean(s.g2.apply(t, cf)));
}

/// Relativistic transform: both losses over per-pair critic differences,
/// paired index-wise within the batch.
inline std::pair<Tensor, Tensor> relativistic(Tape& t, const LossSpec& s, const Tensor& cr, const Tensor& cf) {
    auto diff = t.sub(cr, cf);
    auto rdiff = t.sub(cf, cr);
    auto ld = t.add(t.mean(s.f1.apply(t, diff)), t.mean(s.f2.apply(t, rdiff)));
    auto lg = t.add(t.mean(s.g1.apply(t, diff)), t.mean(s.g2.apply(t, rdiff)));
    return {ld, lg};
}

enum class Side { discriminator, generator };

/// Single-term form valid for symmetric, non-saturating specs:
/// E[f1(C_r - C_f)] for the discriminator, E[f1(C_f - C_r)] for the generator.
inline Tensor relativistic_simplified(Tape& t, const LossSpec& s, const Tensor& cr, const Tensor& cf, Side side) {
    if (!s.symmetric)
        throw DomainError("relativistic_simplified: spec " + s.name + " is not flagged symmetric");
    auto diff = side == Side::discriminator ? t.sub(cr, cf) : t.sub(cf, cr);
    return t.mean(s.f1.apply(t, diff));
}

/// Relativistic-average transform: each critic value is compared to the
/// batch mean critic of the opposite type. The means stay on the tape, so
/// generator gradients flow through them.
inline std::pair<Tensor, Tensor> relativistic_average(Tape& t, const LossSpec& s, const Tensor& cr,
                                                      const Tensor& cf) {
    auto r_minus_mf = t.sub(cr, t.expand_scalar(t.mean(cf), cr.shape()));
    auto f_minus_mr = t.sub(cf, t.expand_scalar(t.mean(cr), cf.shape()));
    auto ld = t.add(t.mean(s.f1.apply(t, r_minus_mf)), t.mean(s.f2.apply(t, f_minus_mr)));
    auto lg = t.add(t.mean(s.g1.apply(t, r_minus_mf)), t.mean(s.g2.apply(t, f_minus_mr)));
    return {ld, lg};
}

}  // namespace losses

// Value-level forms of the operations above, computed by direct scalar
// evaluation (no tape): a second, independent route used by tests.

inline double loss_standard_d(const LossSpec& s, const CriticBatch& cb) {
    double a = 0, b = 0;
    for (std::int64_t i = 0; i < cb.c_real.size(); ++i) a += s.f1.eval(cb.c_real[i]);
    for (std::int64_t i = 0; i < cb.c_fake.size(); ++i) b += s.f2.eval(cb.c_fake[i]);
    return a / static_cast<double>(cb.m()) + b / static_cast<double>(cb.m());
}

inline double loss_standard_g(const LossSpec& s, const CriticBatch& cb) {
    double a = 0, b = 0;
    for (std::int64_t i = 0; i < cb.c_real.size(); ++i) a += s.g1.eval(cb.c_real[i]);
    for (std::int64_t i = 0; i < cb.c_fake.size(); ++i) b += s.g2.eval(cb.c_fake[i]);
    return a / static_cast<double>(cb.m()) + b / static_cast<double>(cb.m());
}

inline std::pair<double, double> loss_relativistic(const LossSpec& s, const CriticBatch& cb) {
    double ld = 0, lg = 0;
    for (std::int64_t i = 0; i < cb.c_real.size(); ++i) {
        const double d = cb.c_real[i] - cb.c_fake[i];
        ld += s.f1.eval(d) + s.f2.eval(-d);
        lg += s.g1.eval(d) + s.g2.eval(-d);
    }
    return {ld / cb.m(), lg / cb.m()};
}

inline double loss_relativistic_simplified(const LossSpec& s, const CriticBatch& cb, losses::Side side) {
    if (!s.symmetric)
        throw DomainError("loss_relativistic_simplified: spec " + s.name + " is not flagged symmetric");
    double acc = 0;
    for (std::int64_t i = 0; i < cb.c_real.size(); ++i) {
        const double d = cb.c_real[i] - cb.c_fake[i];
        acc += s.f1.eval(side == losses::Side::discriminator ? d : -d);
    }
    return acc / cb.m();
}

inline std::pair<double, double> loss_relativistic_average(const LossSpec& s, const CriticBatch& cb) {
    double mr = 0, mf = 0;
    for (std::int64_t i = 0; i < cb.c_real.size(); ++i) mr += cb.c_real[i];
    for (std::int64_t i = 0; i < cb.c_fake.size(); ++i) mf += cb.c_fake[i];
    mr /= cb.m();
    mf /= cb.m();
    double ld = 0, lg = 0;
    for (std::int64_t i = 0; i < cb.c_real.size(); ++i) {
        ld += s.f1.eval(cb.c_real[i] - mf) + s.f2.eval(cb.c_fake[i] - mr);
        lg += s.g1.eval(cb.c_real[i] - mf) + s.g2.eval(cb.c_fake[i] - mr);
    }
    return {ld / cb.m(), lg / cb.m()};
}

/// The O(m^2) pairwise relativistic-average discriminator loss:
/// -E_r[log(mean_f sigma(C_r - C_f))] - E_f[log(1 - mean_r sigma(C_f - C_r))].
/// Test oracle only; the batch-size cap guards accidental production use.
inline double loss_rad_pairwise_oracle(const CriticBatch& cb) {
    const int m = cb.m();
    if (m > 64) throw ShapeError("loss_rad_pairwise_oracle: batch too large for the O(m^2) oracle (m <= 64)");
    double term_r = 0;
    for (int i = 0; i < m; ++i) {
        double inner = 0;
        for (int j = 0; j < m; ++j) inner += stable_sigmoid(cb.c_real[i] - cb.c_fake[j]);
        term_r += std::log(inner / m);
    }
    double term_f = 0;
    for (int j = 0; j < m; ++j) {
        double inner = 0;
        for (int i = 0; i < m; ++i) inner += stable_sigmoid(cb.c_fake[j] - cb.c_real[i]);
        term_f += std::log1p(-inner / m);
    }
    return -term_r / m - term_f / m;
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

struct GpConfig {
    double lambda = 10.0;
    // Tests can pin the interpolation point; training draws eps ~ U[0,1]
    // per sample.
    std::optional<double> fixed_epsilon;

    GpConfig() = default;
    explicit GpConfig(double l) : lambda(l) {
        if (l < 0) throw DomainError("GpConfig: lambda must be non-negative");
    }
};

using CriticFn = std::function<Tensor(Tape&, const Tensor&)>;

/// lambda * E_i[(||grad_{x_hat_i} C(x_hat_i)||_2 - 1)^2] on per-sample
/// interpolates x_hat_i = eps_i x_r_i + (1 - eps_i) x_f_i. The result is a
/// tape scalar whose gradients reach the critic weights through the
/// recorded first-order input gradient (double backprop).
inline Tensor gradient_penalty(Tape& t, const CriticFn& critic, const Tensor& x_real, const Tensor& x_fake,
                               const GpConfig& gp, Rng& rng) {
    if (x_real.shape() != x_fake.shape() || x_real.rank() != 2)
        throw ShapeError("gradient_penalty: real/fake batches must share an [m x d] shape");
    const int m = x_real.dim(0), d = x_real.dim(1);
    std::vector<double> xhat(static_cast<std::size_t>(m) * d);
    for (int i = 0; i < m; ++i) {
        const double eps = gp.fixed_epsilon ? *gp.fixed_epsilon : rng.uniform();
        for (int j = 0; j < d; ++j)
            xhat[static_cast<std::size_t>(i) * d + j] = eps * x_real.at(i, j) + (1.0 - eps) * x_fake.at(i, j);
    }
    auto xh = t.leaf(Tensor(Shape{m, d}, std::move(xhat)), /*requires_grad=*/true);
    Tensor c = critic(t, xh);
    if (c.rank() == 2) c = t.reshape(c, Shape{c.dim(0)});
    auto total = t.sum(c);
    const Tensor leaves[1] = {xh};
    auto grads = t.backward(total, std::span<const Tensor>(leaves));
    auto norms = t.l2_norm_rows(grads.at(xh));
    return t.scale(t.mean(t.square(t.add_scalar(norms, -1.0))), gp.lambda);
}

// ---------------------------------------------------------------------------
// The loss zoo: the ten named objectives, exactly as printed.
// ---------------------------------------------------------------------------

enum class LossFamily { standard, relativistic, relativistic_average };

/// A named objective plus its assembly rule. The generator side of the
/// plain (non-average) losses omits the real-data term, whose gradient the
/// generator cannot influence; the relativistic-average forms keep both
/// terms.
struct NamedLoss {
    std::string name;
    LossFamily family = LossFamily::standard;
    LossSpec spec;
    bool with_gp = false;
    bool g_uses_real_term = false;

    Tensor d_loss(Tape& t, const Tensor& cr, const Tensor& cf) const {
        switch (family) {
            case LossFamily::standard: return losses::standard_d(t, spec, cr, cf);
            case LossFamily::relativistic:
                return losses::relativistic_simplified(t, spec, cr, cf, losses::Side::discriminator);
            case LossFamily::relativistic_average: return losses::relativistic_average(t, spec, cr, cf).first;
        }
        throw DomainError("NamedLoss: bad family");
    }

    Tensor g_loss(Tape& t, const Tensor& cr, const Tensor& cf) const {
        switch (family) {
            case LossFamily::standard:
                if (g_uses_real_term) return losses::standard_g(t, spec, cr, cf);
                return t.mean(spec.g2.apply(t, cf));
            case LossFamily::relativistic:
                return losses::relativistic_simplified(t, spec, cr, cf, losses::Side::generator);
            case LossFamily::relativistic_average: return losses::relativistic_average(t, spec, cr, cf).second;
        }
        throw DomainError("NamedLoss: bad family");
    }

    double d_value(const CriticBatch& cb) const {
        Tape t;
        return d_loss(t, t.leaf(cb.c_real, false), t.leaf(cb.c_fake, false)).item();
    }

    double g_value(const CriticBatch& cb) const {
        Tape t;
        return g_loss(t, t.leaf(cb.c_real, false), t.leaf(cb.c_fake, false)).item();
    }
};

namespace detail {
inline ScalarMap map_nls() { return {ScalarMap::Kind::neg_log_sigmoid, 0.0, false}; }
inline ScalarMap map_nls_neg() { return {ScalarMap::Kind::neg_log_sigmoid_neg, 0.0, false}; }
inline ScalarMap map_sq(double c) { return {ScalarMap::Kind::square_shift, c, false}; }
inline ScalarMap map_hinge_minus() { return {ScalarMap::Kind::hinge_one_minus, 0.0, false}; }
inline ScalarMap map_hinge_plus() { return {ScalarMap::Kind::hinge_one_plus, 0.0, false}; }
inline ScalarMap map_id() { return {ScalarMap::Kind::identity, 0.0, false}; }
inline ScalarMap map_negation() { return {ScalarMap::Kind::negation, 0.0, false}; }

inline LossSpec non_saturating(std::string name, ScalarMap f1, ScalarMap f2, bool symmetric) {
    LossSpec s;
    s.name = std::move(name);
    s.f1 = f1;
    s.f2 = f2;
    s.g1 = f2;
    s.g2 = f1;
    s.symmetric = symmetric;
    s.mode = SaturatingMode::non_saturating;
    return s;
}
}  // namespace detail

/// Saturating counterpart of a spec: g = -f. Constructed for completeness
/// and identity tests; training always uses the non-saturating forms.
inline LossSpec saturating_variant(const LossSpec& s) {
    LossSpec out = s;
    out.name = s.name + "-saturating";
    out.g1 = s.f1.negate();
    out.g2 = s.f2.negate();
    out.mode = SaturatingMode::saturating;
    return out;
}

/// IPM objective (identity f-maps): the special case in which the
/// relativistic transform changes nothing but the pairing.
inline LossSpec ipm_spec() {
    return detail::non_saturating("IPM", detail::map_negation(), detail::map_id(), /*symmetric=*/true);
}

inline const std::vector<std::string>& loss_names() {
    static const std::vector<std::string> names = {"SGAN",     "RSGAN",      "RaSGAN",   "LSGAN",
                                                   "RaLSGAN",  "HingeGAN",   "RaHingeGAN", "WGAN-GP",
                                                   "RSGAN-GP", "RaSGAN-GP"};
    return names;
}

inline NamedLoss named_loss(const std::string& name) {
    using namespace detail;
    NamedLoss nl;
    nl.name = name;
    if (name == "SGAN") {
        nl.family = LossFamily::standard;
        nl.spec = non_saturating("SGAN", map_nls(), map_nls_neg(), true);
    } else if (name == "RSGAN" || name == "RSGAN-GP") {
        nl.family = LossFamily::relativistic;
        nl.spec = non_saturating(name, map_nls(), map_nls_neg(), true);
        nl.with_gp = name == "RSGAN-GP";
    } else if (name == "RaSGAN" || name == "RaSGAN-GP") {
        nl.family = LossFamily::relativistic_average;
        nl.spec = non_saturating(name, map_nls(), map_nls_neg(), true);
        nl.with_gp = name == "RaSGAN-GP";
        nl.g_uses_real_term = true;
    } else if (name == "LSGAN") {
        // labels exactly as printed: real -> 0 and fake -> 1 in L_D
        nl.family = LossFamily::standard;
        nl.spec = non_saturating("LSGAN", map_sq(0.0), map_sq(1.0), false);
    } else if (name == "RaLSGAN") {
        nl.family = LossFamily::relativistic_average;
        nl.spec = non_saturating("RaLSGAN", map_sq(1.0), map_sq(-1.0), true);
        nl.g_uses_real_term = true;
    } else if (name == "HingeGAN") {
        nl.family = LossFamily::standard;
        LossSpec s;
        s.name = "HingeGAN";
        s.f1 = map_hinge_minus();
        s.f2 = map_hinge_plus();
        s.g1 = map_id();         // unused: the printed generator is fake-only
        s.g2 = map_negation();   // L_G = -E[C(x_f)]
        s.symmetric = true;
        s.mode = SaturatingMode::custom;
        nl.spec = s;
    } else if (name == "RaHingeGAN") {
        nl.family = LossFamily::relativistic_average;
        nl.spec = non_saturating("RaHingeGAN", map_hinge_minus(), map_hinge_plus(), true);
        nl.g_uses_real_term = true;
    } else if (name == "WGAN-GP") {
        nl.family = LossFamily::standard;
        nl.spec = non_saturating("WGAN-GP", map_negation(), map_id(), true);
        nl.with_gp = true;
    } else {
        std::string known;
        for (const auto& n : loss_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown loss '" + name + "'; valid names: " + known);
    }
    validate(nl.spec);
    return nl;
}

// ---------------------------------------------------------------------------
// Closed-form gradient oracles: per-sample critic gradients assembled into
// the analytic discriminator/generator gradients, an independent route
// against which the autodiff of the assembled losses is tested.
// ---------------------------------------------------------------------------

enum class GradOracleKind { sgan_d, sgan_g, ipm_d, ipm_g };

namespace detail {

/// Per-sample gradients of C(row) w.r.t. a network's parameters, computed
/// one row at a time on its own tape.
inline std::vector<std::vector<std::vector<double>>> per_sample_critic_grads(Network& critic, Network* gen,
                                                                             const Tensor& rows) {
    const int m = rows.dim(0), d = rows.dim(1);
    std::vector<std::vector<std::vector<double>>> out;
    for (int i = 0; i < m; ++i) {
        std::vector<double> row(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = rows.at(i, j);
        Tape t;
        Tensor x = t.leaf(Tensor(Shape{1, d}, row), false);
        std::vector<Tensor> leaves;
        Tensor c;
        if (gen) {
            BoundNetwork bg(t, *gen, true, NetMode::eval);
            BoundNetwork bc(t, critic, false, NetMode::eval);
            c = t.sum(bc.forward(bg.forward(x)));
            leaves = bg.param_leaves();
        } else {
            BoundNetwork bc(t, critic, true, NetMode::eval);
            c = t.sum(bc.forward(x));
            leaves = bc.param_leaves();
        }
        auto gm = t.backward(c, std::span<const Tensor>(leaves));
        std::vector<std::vector<double>> gs;
        for (const auto& lf : leaves) gs.push_back(gm.at(lf).to_vector());
        out.push_back(std::move(gs));
    }
    return out;
}

inline double critic_value(Network& critic, Network* gen, const Tensor& rows, int i) {
    const int d = rows.dim(1);
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = rows.at(i, j);
    Tensor x(Shape{1, d}, row);
    Tensor h = gen ? forward_eval(*gen, x) : x;
    return forward_eval(critic, h)[0];
}

}  // namespace detail

/// Assembles the analytic gradients:
///   sgan_d:  -E[(1 - D(x_r)) grad_w C(x_r)] + E[D(x_f) grad_w C(x_f)]
///   sgan_g:  -E[(1 - D(G(z))) grad_theta C(G(z))]
///   ipm_d:   -E[grad_w C(x_r)] + E[grad_w C(x_f)]
///   ipm_g:   -E[grad_theta C(G(z))]
/// where D = sigmoid(C). For the _d kinds, pass the real and fake data
/// batches; for the _g kinds, pass the latent batch as `a` (gen required).
inline std::vector<std::vector<double>> closed_form_gradients_oracle(GradOracleKind kind, Network& critic,
                                                                     Network* gen, const Tensor& a,
                                                                     const Tensor& b = Tensor()) {
    const bool is_g = kind == GradOracleKind::sgan_g || kind == GradOracleKind::ipm_g;
    if (is_g && !gen) throw DomainError("closed_form_gradients_oracle: generator kinds need a generator");

    auto zero_like = [&](Network& net) {
        std::vector<std::vector<double>> zs;
        for (auto* p : net.parameters()) zs.emplace_back(p->size(), 0.0);
        return zs;
    };

    if (is_g) {
        const int m = a.dim(0);
        auto grads = detail::per_sample_critic_grads(critic, gen, a);
        auto acc = zero_like(*gen);
        for (int i = 0; i < m; ++i) {
            double w = -1.0;
            if (kind == GradOracleKind::sgan_g)
                w = -(1.0 - stable_sigmoid(detail::critic_value(critic, gen, a, i)));
            for (std::size_t p = 0; p < acc.size(); ++p)
                for (std::size_t j = 0; j < acc[p].size(); ++j) acc[p][j] += w * grads[static_cast<std::size_t>(i)][p][j] / m;
        }
        return acc;
    }

    const int m = a.dim(0);
    auto gr = detail::per_sample_critic_grads(critic, nullptr, a);
    auto gf = detail::per_sample_critic_grads(critic, nullptr, b);
    auto acc = zero_like(critic);
    for (int i = 0; i < m; ++i) {
        double wr = -1.0, wf = 1.0;
        if (kind == GradOracleKind::sgan_d) {
            wr = -(1.0 - stable_sigmoid(detail::critic_value(critic, nullptr, a, i)));
            wf = stable_sigmoid(detail::critic_value(critic, nullptr, b, i));
        }
        for (std::size_t p = 0; p < acc.size(); ++p)
            for (std::size_t j = 0; j < acc[p].size(); ++j)
                acc[p][j] += (wr * gr[static_cast<std::size_t>(i)][p][j] + wf * gf[static_cast<std::size_t>(i)][p][j]) / m;
    }
    return acc;
}

}  // namespace relgan
