#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relgan/rng.hpp"
#include "relgan/tape.hpp"
#include "relgan/tensor.hpp"

namespace relgan {

enum class Activation { identity, relu, leaky_relu, tanh };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

/// Per-feature normalization state. Running statistics use biased batch
/// variance; eval mode reads them as constants and is a pure function.
struct BatchNorm {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    double momentum = 0.9;
    double eps = 1e-5;
};

struct DenseLayer {
    int in = 0, out = 0;
    std::vector<double> weight;  // [out x in], row-major
    std::vector<double> bias;    // [out]
    Activation act = Activation::identity;
    double leaky_slope = 0.2;
    bool spectral_norm = false;
    std::vector<double> sn_u;  // power-iteration left vector, length `out`
    std::optional<BatchNorm> batch_norm;
};

struct Network {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    /// Trainable parameter vectors in a fixed order: per layer
    /// weight, bias, then batch-norm gamma, beta when present.
    std::vector<std::vector<double>*> parameters() {
        std::vector<std::vector<double>*> ps;
        for (auto& l : layers) {
            ps.push_back(&l.weight);
            ps.push_back(&l.bias);
            if (l.batch_norm) {
                ps.push_back(&l.batch_norm->gamma);
                ps.push_back(&l.batch_norm->beta);
            }
        }
        return ps;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string p = "layer" + std::to_string(i) + ".";
            names.push_back(p + "weight");
            names.push_back(p + "bias");
            if (layers[i].batch_norm) {
                names.push_back(p + "bn_gamma");
                names.push_back(p + "bn_beta");
            }
        }
        return names;
    }

    std::vector<Shape> parameter_shapes() const {
        std::vector<Shape> shapes;
        for (const auto& l : layers) {
            shapes.push_back(Shape{l.out, l.in});
            shapes.push_back(Shape{l.out});
            if (l.batch_norm) {
                shapes.push_back(Shape{l.out});
                shapes.push_back(Shape{l.out});
            }
        }
        return shapes;
    }
};

/// Dense MLP with a shared hidden activation and an output activation.
inline Network make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Activation hidden_act,
                        Activation out_act = Activation::identity, double leaky_slope = 0.2) {
    Network net;
    int prev = in_dim;
    for (int h : hidden) {
        DenseLayer l;
        l.in = prev;
        l.out = h;
        l.act = hidden_act;
        l.leaky_slope = leaky_slope;
        net.layers.push_back(std::move(l));
        prev = h;
    }
    DenseLayer last;
    last.in = prev;
    last.out = out_dim;
    last.act = out_act;
    last.leaky_slope = leaky_slope;
    net.layers.push_back(std::move(last));
    return net;
}

inline void enable_spectral_norm(Network& net) {
    for (auto& l : net.layers) l.spectral_norm = true;
}

inline void enable_batch_norm_hidden(Network& net) {
    // Normalize every layer except the output one.
    for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
        BatchNorm bn;
        const int d = net.layers[i].out;
        bn.gamma.assign(static_cast<std::size_t>(d), 1.0);
        bn.beta.assign(static_cast<std::size_t>(d), 0.0);
        bn.running_mean.assign(static_cast<std::size_t>(d), 0.0);
        bn.running_var.assign(static_cast<std::size_t>(d), 1.0);
        net.layers[i].batch_norm = std::move(bn);
    }
}

namespace detail {
inline void normalize_inplace(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
        for (double& x : v) x /= n;
}
}  // namespace detail

struct SpectralEstimate {
    double sigma = 0.0;
    std::vector<double> u, v;  // left [out], right [in]
};

/// One (or more) rounds of power iteration on W, updating the layer's u
/// vector in place. sigma is the Rayleigh estimate u^T W v of the top
/// singular value.
inline SpectralEstimate spectral_power_iterate(DenseLayer& layer, int iterations = 1) {
    const int out = layer.out, in = layer.in;
    if (layer.sn_u.size() != static_cast<std::size_t>(out))
        throw ShapeError("spectral_power_iterate: u vector not initialized");
    std::vector<double> v(static_cast<std::size_t>(in), 0.0);
    for (int it = 0; it < iterations; ++it) {
        // v = normalize(W^T u)
        std::fill(v.begin(), v.end(), 0.0);
        for (int i = 0; i < out; ++i) {
            const double ui = layer.sn_u[static_cast<std::size_t>(i)];
            for (int j = 0; j < in; ++j) v[static_cast<std::size_t>(j)] += layer.weight[static_cast<std::size_t>(i) * in + j] * ui;
        }
        detail::normalize_inplace(v);
        // u = normalize(W v)
        for (int i = 0; i < out; ++i) {
            double s = 0.0;
            for (int j = 0; j < in; ++j) s += layer.weight[static_cast<std::size_t>(i) * in + j] * v[static_cast<std::size_t>(j)];
            layer.sn_u[static_cast<std::size_t>(i)] = s;
        }
        detail::normalize_inplace(layer.sn_u);
    }
    SpectralEstimate est;
    est.u = layer.sn_u;
    est.v = std::move(v);
    // v from the last iteration pairs with the refreshed u: sigma = u^T W v.
    // Recompute v once from the final u so the pair is consistent.
    std::vector<double> v2(static_cast<std::size_t>(in), 0.0);
    for (int i = 0; i < out; ++i) {
        const double ui = est.u[static_cast<std::size_t>(i)];
        for (int j = 0; j < in; ++j) v2[static_cast<std::size_t>(j)] += layer.weight[static_cast<std::size_t>(i) * in + j] * ui;
    }
    detail::normalize_inplace(v2);
    est.v = std::move(v2);
    double sigma = 0.0;
    for (int i = 0; i < out; ++i) {
        double s = 0.0;
        for (int j = 0; j < in; ++j) s += layer.weight[static_cast<std::size_t>(i) * in + j] * est.v[static_cast<std::size_t>(j)];
        sigma += est.u[static_cast<std::size_t>(i)] * s;
    }
    est.sigma = sigma;
    return est;
}

/// Effective weight after spectral normalization: weight / sigma-hat, with u
/// advanced by exactly one power iteration. Detached numeric result; the
/// differentiable path lives in BoundNetwork.
inline std::vector<double> spectral_normalize(DenseLayer& layer) {
    const auto est = spectral_power_iterate(layer, 1);
    if (est.sigma <= 0.0) throw DomainError("spectral_normalize: degenerate layer, zero weight matrix");
    std::vector<double> eff = layer.weight;
    for (double& w : eff) w /= est.sigma;
    return eff;
}

/// Xavier-style initialization: weights ~ N(0, 2/(in+out)), biases zero,
/// batch-norm at identity, spectral u warm-started with 50 power
/// iterations. Bit-reproducible from the seed.
inline void init_params(Network& net, std::uint64_t seed) {
    Rng rng(seed, /*stream=*/0x1717);
    for (auto& l : net.layers) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(l.in + l.out));
        l.weight.resize(static_cast<std::size_t>(l.in) * l.out);
        for (auto& w : l.weight) w = std_dev * rng.normal();
        l.bias.assign(static_cast<std::size_t>(l.out), 0.0);
        if (l.batch_norm) {
            auto& bn = *l.batch_norm;
            bn.gamma.assign(static_cast<std::size_t>(l.out), 1.0);
            bn.beta.assign(static_cast<std::size_t>(l.out), 0.0);
            bn.running_mean.assign(static_cast<std::size_t>(l.out), 0.0);
            bn.running_var.assign(static_cast<std::size_t>(l.out), 1.0);
        }
        if (l.spectral_norm) {
            l.sn_u.resize(static_cast<std::size_t>(l.out));
            for (auto& u : l.sn_u) u = rng.normal();
            detail::normalize_inplace(l.sn_u);
            spectral_power_iterate(l, 50);
        }
    }
}

enum class NetMode { train, eval };

/// PacGAN-style packing: groups of k consecutive rows concatenated
/// feature-wise, [m x d] -> [(m/k) x (k d)]. Row-major layout makes this a
/// pure reshape, so it is trivially order-preserving and invertible.
inline Tensor pack(Tape& tape, const Tensor& batch, int k) {
    if (batch.rank() != 2) throw ShapeError("pack: batch must be rank-2");
    if (k < 1 || batch.dim(0) % k != 0)
        throw ShapeError("pack: k=" + std::to_string(k) + " does not divide batch size " +
                         std::to_string(batch.dim(0)));
    if (k == 1) return batch;
    return tape.reshape(batch, Shape{batch.dim(0) / k, batch.dim(1) * k});
}

/// One network bound onto one tape: parameters entered as leaves once,
/// spectral normalization applied once (one power iteration in train mode,
/// a frozen read in eval mode), and `forward` reusable for several batches
/// in the same step so they all see identical effective weights.
class BoundNetwork {
  public:
    BoundNetwork(Tape& tape, Network& net, bool requires_grad, NetMode mode)
        : tape_(&tape), net_(&net), mode_(mode) {
        for (auto& l : net.layers) {
            LayerBinding b;
            b.weight = tape.leaf(Tensor(Shape{l.out, l.in}, l.weight), requires_grad);
            b.bias = tape.leaf(Tensor(Shape{l.out}, l.bias), requires_grad);
            if (l.spectral_norm) {
                SpectralEstimate est;
                if (mode == NetMode::train) {
                    est = spectral_power_iterate(l, 1);
                } else {
                    DenseLayer frozen = l;  // do not advance u outside training
                    est = spectral_power_iterate(frozen, 1);
                }
                if (est.sigma <= 0.0)
                    throw DomainError("spectral_normalize: degenerate layer, zero weight matrix");
                // sigma as a tape expression with u, v frozen: sum(W * u v^T),
                // so d sigma / dW = u v^T as in the power-iteration estimate.
                std::vector<double> uv(static_cast<std::size_t>(l.out) * l.in);
                for (int i = 0; i < l.out; ++i)
                    for (int j = 0; j < l.in; ++j)
                        uv[static_cast<std::size_t>(i) * l.in + j] =
                            est.u[static_cast<std::size_t>(i)] * est.v[static_cast<std::size_t>(j)];
                auto sigma = tape.sum(tape.mul(b.weight, tape.constant(Tensor(Shape{l.out, l.in}, uv))));
                b.effective = tape.mul(b.weight, tape.expand_scalar(tape.recip(sigma), Shape{l.out, l.in}));
            } else {
                b.effective = b.weight;
            }
            b.effective_t = tape.transpose(b.effective);
            if (l.batch_norm) {
                b.gamma = tape.leaf(Tensor(Shape{l.out}, l.batch_norm->gamma), requires_grad);
                b.beta = tape.leaf(Tensor(Shape{l.out}, l.batch_norm->beta), requires_grad);
            }
            layers_.push_back(std::move(b));
        }
    }

    Tensor forward(const Tensor& x) {
        if (x.rank() != 2 || x.dim(1) != net_->input_dim())
            throw ShapeError("forward: batch shape " + shape_str(x.shape()) + " does not match input dim " +
                             std::to_string(net_->input_dim()));
        Tensor h = x;
        for (std::size_t i = 0; i < net_->layers.size(); ++i) {
            auto& l = net_->layers[i];
            auto& b = layers_[i];
            h = tape_->broadcast_add_row(tape_->matmul(h, b.effective_t), b.bias);
            if (l.batch_norm) h = batch_norm(h, l, b);
            switch (l.act) {
                case Activation::identity: break;
                case Activation::relu: h = tape_->relu(h); break;
                case Activation::leaky_relu: h = tape_->leaky_relu(h, l.leaky_slope); break;
                case Activation::tanh: h = tape_->tanh(h); break;
            }
        }
        return h;
    }

    /// Parameter leaves aligned with Network::parameters().
    std::vector<Tensor> param_leaves() const {
        std::vector<Tensor> ps;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            ps.push_back(layers_[i].weight);
            ps.push_back(layers_[i].bias);
            if (net_->layers[i].batch_norm) {
                ps.push_back(layers_[i].gamma);
                ps.push_back(layers_[i].beta);
            }
        }
        return ps;
    }

  private:
    struct LayerBinding {
        Tensor weight, bias, gamma, beta;
        Tensor effective;    // spectral-normalized weight (or the weight itself)
        Tensor effective_t;  // cached transpose
    };

    Tensor batch_norm(const Tensor& pre, DenseLayer& l, LayerBinding& b) {
        auto& bn = *l.batch_norm;
        const int m = pre.dim(0), d = pre.dim(1);
        if (mode_ == NetMode::eval) {
            std::vector<double> inv_std(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j)
                inv_std[static_cast<std::size_t>(j)] =
                    1.0 / std::sqrt(bn.running_var[static_cast<std::size_t>(j)] + bn.eps);
            auto centered = tape_->sub(pre, tape_->broadcast_row(tape_->constant(Tensor(Shape{d}, bn.running_mean)), m));
            auto xn = tape_->mul(centered, tape_->broadcast_row(tape_->constant(Tensor(Shape{d}, inv_std)), m));
            return tape_->add(tape_->mul(xn, tape_->broadcast_row(b.gamma, m)), tape_->broadcast_row(b.beta, m));
        }
        // Train mode: batch statistics on the tape (differentiable); running
        // stats updated from the same values, detached.
        auto mu = tape_->scale(tape_->col_sum(pre), 1.0 / m);
        auto centered = tape_->sub(pre, tape_->broadcast_row(mu, m));
        auto var = tape_->scale(tape_->col_sum(tape_->square(centered)), 1.0 / m);
        auto inv_std = tape_->recip(tape_->sqrt(tape_->add_scalar(var, bn.eps)));
        auto xn = tape_->mul(centered, tape_->broadcast_row(inv_std, m));
        for (int j = 0; j < d; ++j) {
            bn.running_mean[static_cast<std::size_t>(j)] =
                bn.momentum * bn.running_mean[static_cast<std::size_t>(j)] + (1.0 - bn.momentum) * mu[j];
            bn.running_var[static_cast<std::size_t>(j)] =
                bn.momentum * bn.running_var[static_cast<std::size_t>(j)] + (1.0 - bn.momentum) * var[j];
        }
        return tape_->add(tape_->mul(xn, tape_->broadcast_row(b.gamma, m)), tape_->broadcast_row(b.beta, m));
    }

    Tape* tape_;
    Network* net_;
    NetMode mode_;
    std::vector<LayerBinding> layers_;
};

/// Convenience: forward a batch through a network on a fresh tape, eval
/// mode, no gradients. Returns a detached tensor.
inline Tensor forward_eval(Network& net, const Tensor& batch) {
    Tape tape;
    BoundNetwork bound(tape, net, /*requires_grad=*/false, NetMode::eval);
    return bound.forward(tape.leaf(batch, false)).detached();
}

}  // namespace relgan
