#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "relgan/data.hpp"
#include "relgan/tensor.hpp"

namespace relgan {

/// Discretized 2-D distribution: counts on a res x res grid over
/// [lo,hi]^2, additive smoothing, normalized to a probability vector.
/// Samples outside the bounds land in the nearest edge bin so no mass is
/// dropped.
struct GridHistogram {
    int res = 60;
    double lo = -3.0, hi = 3.0;
    double alpha = 1e-9;
    std::vector<double> p;

    static GridHistogram from_samples(const Tensor& samples, int res = 60, double lo = -3.0, double hi = 3.0,
                                      double alpha = 1e-9) {
        if (samples.rank() != 2 || samples.dim(1) != 2)
            throw ShapeError("GridHistogram: samples must be [m x 2]");
        GridHistogram h;
        h.res = res;
        h.lo = lo;
        h.hi = hi;
        h.alpha = alpha;
        std::vector<double> counts(static_cast<std::size_t>(res) * res, 0.0);
        const double cell = (hi - lo) / res;
        const int m = samples.dim(0);
        for (int i = 0; i < m; ++i) {
            const int bx = std::clamp(static_cast<int>(std::floor((samples.at(i, 0) - lo) / cell)), 0, res - 1);
            const int by = std::clamp(static_cast<int>(std::floor((samples.at(i, 1) - lo) / cell)), 0, res - 1);
            counts[static_cast<std::size_t>(by) * res + bx] += 1.0;
        }
        const double total = static_cast<double>(m) + alpha * res * res;
        h.p.resize(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) h.p[i] = (counts[i] + alpha) / total;
        return h;
    }

    bool same_grid(const GridHistogram& o) const {
        return res == o.res && lo == o.lo && hi == o.hi;
    }
};

/// Jensen-Shannon divergence in nats: 1/2 KL(p||m) + 1/2 KL(q||m) with
/// m = (p + q)/2. Zero for identical inputs, log 2 for disjoint supports.
inline double jsd(const GridHistogram& ph, const GridHistogram& qh) {
    if (!ph.same_grid(qh)) throw ShapeError("jsd: histograms use different grids");
    double acc = 0.0;
    for (std::size_t i = 0; i < ph.p.size(); ++i) {
        const double p = ph.p[i], q = qh.p[i];
        const double m = 0.5 * (p + q);
        if (p > 0) acc += 0.5 * p * std::log(p / m);
        if (q > 0) acc += 0.5 * q * std::log(q / m);
    }
    return acc;
}

/// Nearest-center assignment statistics: per-mode counts, the number of
/// modes holding at least m/(10 K) samples, and the fraction of samples
/// within 3 standard deviations of their nearest center.
struct ModeStats {
    std::vector<std::int64_t> per_mode;
    int covered = 0;
    double hq_fraction = 0.0;
};

inline ModeStats mode_stats(const Tensor& samples, const MixtureSpec& spec) {
    if (samples.rank() != 2 || samples.dim(1) != 2) throw ShapeError("mode_stats: samples must be [m x 2]");
    const int m = samples.dim(0);
    if (m < 1) throw DomainError("mode_stats: need at least one sample");
    const int k = spec.modes();
    ModeStats st;
    st.per_mode.assign(static_cast<std::size_t>(k), 0);
    std::int64_t hq = 0;
    for (int i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int c = 0; c < k; ++c) {
            const double dx = samples.at(i, 0) - spec.centers[static_cast<std::size_t>(c)][0];
            const double dy = samples.at(i, 1) - spec.centers[static_cast<std::size_t>(c)][1];
            const double d2 = dx * dx + dy * dy;
            if (d2 < best) {
                best = d2;
                arg = c;
            }
        }
        ++st.per_mode[static_cast<std::size_t>(arg)];
        if (std::sqrt(best) <= 3.0 * spec.std_dev) ++hq;
    }
    const double threshold = static_cast<double>(m) / (10.0 * k);
    for (auto c : st.per_mode)
        if (static_cast<double>(c) >= threshold) ++st.covered;
    st.hq_fraction = static_cast<double>(hq) / m;
    return st;
}

/// Gaussian moment fit of a 2-D sample cloud, with an 1e-9 I jitter keeping
/// the covariance positive semi-definite.
struct FrechetStats {
    std::array<double, 2> mean{0, 0};
    std::array<double, 4> cov{0, 0, 0, 0};  // row-major [[a,b],[b,c]]

    static FrechetStats fit(const Tensor& samples) {
        if (samples.rank() != 2 || samples.dim(1) != 2)
            throw ShapeError("FrechetStats: samples must be [m x 2]");
        const int m = samples.dim(0);
        if (m < 2) throw DomainError("FrechetStats: need at least two samples");
        FrechetStats s;
        for (int i = 0; i < m; ++i) {
            s.mean[0] += samples.at(i, 0);
            s.mean[1] += samples.at(i, 1);
        }
        s.mean[0] /= m;
        s.mean[1] /= m;
        for (int i = 0; i < m; ++i) {
            const double dx = samples.at(i, 0) - s.mean[0];
            const double dy = samples.at(i, 1) - s.mean[1];
            s.cov[0] += dx * dx;
            s.cov[1] += dx * dy;
            s.cov[3] += dy * dy;
        }
        s.cov[0] = s.cov[0] / m + 1e-9;
        s.cov[1] /= m;
        s.cov[2] = s.cov[1];
        s.cov[3] = s.cov[3] / m + 1e-9;
        return s;
    }
};

namespace detail {

// Closed-form square root of a symmetric PSD 2x2 matrix; the algebraic form
// of its eigendecomposition.
inline std::array<double, 4> sqrt_psd_2x2(const std::array<double, 4>& m) {
    const double tr = m[0] + m[3];
    double det = m[0] * m[3] - m[1] * m[2];
    if (det < 0) {
        if (det < -1e-12) throw DomainError("frechet_distance: covariance is not PSD");
        det = 0;
    }
    const double s = std::sqrt(det);
    const double denom = std::sqrt(std::max(tr + 2.0 * s, 0.0));
    if (denom == 0.0) return {0, 0, 0, 0};
    return {(m[0] + s) / denom, m[1] / denom, m[2] / denom, (m[3] + s) / denom};
}

inline std::array<double, 4> mul_2x2(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3]};
}

}  // namespace detail

/// Squared Fréchet distance between Gaussian fits:
/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
inline double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    for (const auto& c : {a.cov, b.cov}) {
        if (c[0] < 0 || c[3] < 0 || c[0] * c[3] - c[1] * c[2] < -1e-12)
            throw DomainError("frechet_distance: covariance is not PSD");
    }
    const double dx = a.mean[0] - b.mean[0];
    const double dy = a.mean[1] - b.mean[1];
    const auto ra = detail::sqrt_psd_2x2(a.cov);
    const auto inner = detail::mul_2x2(detail::mul_2x2(ra, b.cov), ra);
    // trace of the 2x2 PSD square root: sqrt(tr + 2 sqrt(det))
    const double tr_inner = inner[0] + inner[3];
    const double det_inner = std::max(inner[0] * inner[3] - inner[1] * inner[2], 0.0);
    const double tr_sqrt = std::sqrt(std::max(tr_inner + 2.0 * std::sqrt(det_inner), 0.0));
    return dx * dx + dy * dy + a.cov[0] + a.cov[3] + b.cov[0] + b.cov[3] - 2.0 * tr_sqrt;
}

}  // namespace relgan
