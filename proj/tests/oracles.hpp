#pragma once

// Test-only oracles, independent of the library's differentiation and
// normalization paths: central finite differences and a Jacobi
// eigensolver-based top singular value.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

/// Central finite-difference gradient of f at x, step h.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-4) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Relative error with an absolute floor near zero.
inline double grad_error(double got, double want, double abs_floor = 1e-6) {
    const double diff = std::abs(got - want);
    const double mag = std::abs(want);
    if (mag < abs_floor) return diff;  // compare absolutely near zero
    return diff / mag;
}

inline double max_grad_error(const std::vector<double>& got, const std::vector<double>& want,
                             double abs_floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, grad_error(got[i], want[i], abs_floor));
    return worst;
}

/// Largest singular value of a row-major m x n matrix via cyclic Jacobi on
/// the symmetric Gram matrix A^T A. Independent of power iteration.
inline double top_singular_value(const std::vector<double>& a, int m, int n) {
    std::vector<double> s(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < m; ++k)
                acc += a[static_cast<std::size_t>(k) * n + i] * a[static_cast<std::size_t>(k) * n + j];
            s[static_cast<std::size_t>(i) * n + j] = acc;
        }
    auto at = [&](int i, int j) -> double& { return s[static_cast<std::size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (at(p, q) == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (int k = 0; k < n; ++k) {
                    const double skp = at(k, p), skq = at(k, q);
                    at(k, p) = c * skp - sn * skq;
                    at(k, q) = sn * skp + c * skq;
                }
                for (int k = 0; k < n; ++k) {
                    const double spk = at(p, k), sqk = at(q, k);
                    at(p, k) = c * spk - sn * sqk;
                    at(q, k) = sn * spk + c * sqk;
                }
            }
    }
    double lmax = 0.0;
    for (int i = 0; i < n; ++i) lmax = std::max(lmax, at(i, i));
    return std::sqrt(std::max(0.0, lmax));
}

}  // namespace oracle
