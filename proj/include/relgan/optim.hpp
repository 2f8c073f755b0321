#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "relgan/tensor.hpp"

namespace relgan {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed set of parameter vectors. Moments are
/// shaped like the parameters; the step counter advances exactly once per
/// apply. Deterministic.
class Adam {
  public:
    Adam(AdamConfig cfg, const std::vector<std::vector<double>*>& params) : cfg_(cfg) {
        for (const auto* p : params) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    long steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    void step(const std::vector<std::vector<double>*>& params, const std::vector<std::vector<double>>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("adam: parameter/gradient count mismatch");
        for (std::size_t p = 0; p < grads.size(); ++p) {
            if (grads[p].size() != m_[p].size()) throw ShapeError("adam: gradient shape mismatch");
            for (double g : grads[p])
                if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient, aborting step");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& param = *params[p];
            auto& m = m_[p];
            auto& v = v_[p];
            const auto& g = grads[p];
            for (std::size_t i = 0; i < param.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

  private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Plain SGD step: p -= lr * g.
inline void sgd_step(const std::vector<std::vector<double>*>& params,
                     const std::vector<std::vector<double>>& grads, double lr) {
    if (params.size() != grads.size()) throw ShapeError("sgd: parameter/gradient count mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& param = *params[p];
        const auto& g = grads[p];
        if (g.size() != param.size()) throw ShapeError("sgd: gradient shape mismatch");
        for (double gv : g)
            if (!std::isfinite(gv)) throw NumericError("sgd: non-finite gradient, aborting step");
        for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * g[i];
    }
}

}  // namespace relgan
