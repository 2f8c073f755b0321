#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relgan/tensor.hpp"

namespace relgan {

// Primitive ops recorded on the tape. The set is closed: every op here has a
// backward rule expressed in terms of other ops in the set, which is what
// makes second-order differentiation (gradient penalties) possible.
enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    matmul,
    transpose,
    sum,
    mean,
    neg,
    exp_,
    log_,
    sigmoid,
    log_sigmoid,
    tanh_,
    relu,  // also serves max0: elementwise max(0, x)
    leaky_relu,
    square,
    sqrt_,
    recip,
    recip_or_zero,
    l2_norm_rows,
    broadcast_add_row,
    broadcast_row,
    broadcast_col,
    rowwise_scale,
    row_sum,
    col_sum,
    scale,
    add_scalar,
    expand_scalar,
    reshape,
    concat,
    slice,
    pad_slice,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::neg: return "neg";
        case OpKind::exp_: return "exp";
        case OpKind::log_: return "log";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::log_sigmoid: return "log_sigmoid";
        case OpKind::tanh_: return "tanh";
        case OpKind::relu: return "relu";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::square: return "square";
        case OpKind::sqrt_: return "sqrt";
        case OpKind::recip: return "recip";
        case OpKind::recip_or_zero: return "recip_or_zero";
        case OpKind::l2_norm_rows: return "l2_norm_rows";
        case OpKind::broadcast_add_row: return "broadcast_add_row";
        case OpKind::broadcast_row: return "broadcast_row";
        case OpKind::broadcast_col: return "broadcast_col";
        case OpKind::rowwise_scale: return "rowwise_scale";
        case OpKind::row_sum: return "row_sum";
        case OpKind::col_sum: return "col_sum";
        case OpKind::scale: return "scale";
        case OpKind::add_scalar: return "add_scalar";
        case OpKind::expand_scalar: return "expand_scalar";
        case OpKind::reshape: return "reshape";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::pad_slice: return "pad_slice";
    }
    return "?";
}

// Numerically stable scalar kernels, finite for |x| well beyond 700.
inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double stable_log_sigmoid(double x) {
    // log sigma(x) = min(x, 0) - log(1 + e^{-|x|})
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

/// Gradients of one backward pass, keyed by the tape node they belong to.
/// Every requested node has an entry (zeros when no path reaches it).
class GradMap {
  public:
    const Tensor& at(const Tensor& t) const {
        auto it = grads_.find(t.node());
        if (it == grads_.end()) throw ShapeError("GradMap: no gradient recorded for this tensor");
        return it->second;
    }
    bool contains(const Tensor& t) const { return grads_.count(t.node()) > 0; }
    void put(int node, Tensor g) { grads_[node] = std::move(g); }
    std::size_t size() const { return grads_.size(); }

  private:
    std::unordered_map<int, Tensor> grads_;
};

/// Append-only record of primitive ops. Forward values are computed eagerly
/// and snapshotted per node, so `replay_matches()` can recompute the whole
/// graph and prove bit-identical determinism. `backward()` emits its adjoint
/// computations as new ops on the same tape, which makes gradients
/// themselves differentiable (double backprop for gradient penalties).
///
/// A tape is single-threaded and rebuilt from scratch each training
/// iteration; tensors detached from it are immutable and freely shareable.
class Tape {
  public:
    struct Node {
        OpKind op = OpKind::leaf;
        std::array<int, 2> in{-1, -1};
        double attr = 0.0;                           // leaky slope / scale factor / added constant
        std::array<std::int64_t, 3> iattr{0, 0, 0};  // axis / start / original extent
        Shape shape;
        std::shared_ptr<const std::vector<double>> value;
        bool requires_grad = false;
    };

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    /// Enter data onto the tape. Differentiable unless requires_grad=false.
    Tensor leaf(const Tensor& t, bool requires_grad = true) {
        check_finite(t.data(), "leaf");
        Tensor out = t;
        out.node_ = push(Node{OpKind::leaf, {-1, -1}, 0.0, {0, 0, 0}, t.shape_, t.data_, requires_grad});
        return out;
    }

    Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad = true) {
        return leaf(Tensor(std::move(shape), std::move(data)), requires_grad);
    }

    /// Non-differentiable leaf.
    Tensor constant(const Tensor& t) { return leaf(t, false); }
    Tensor constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

    // ---- elementwise binary -------------------------------------------------

    Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::add, a, b); }
    Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::sub, a, b); }
    Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::mul, a, b); }

    // ---- matrix -------------------------------------------------------------

    Tensor matmul(const Tensor& a, const Tensor& b) {
        check_input(a, "matmul");
        check_input(b, "matmul");
        require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank-2");
        require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                                          shape_str(b.shape()));
        const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        for (int i = 0; i < m; ++i) {
            const double* ra = pa + static_cast<std::size_t>(i) * k;
            double* ro = out.data() + static_cast<std::size_t>(i) * n;
            for (int kk = 0; kk < k; ++kk) {
                const double av = ra[kk];
                const double* rb = pb + static_cast<std::size_t>(kk) * n;
                for (int j = 0; j < n; ++j) ro[j] += av * rb[j];
            }
        }
        return emit(OpKind::matmul, {a.node(), b.node()}, Shape{m, n}, std::move(out),
                    needs_grad(a) || needs_grad(b));
    }

    Tensor transpose(const Tensor& a) {
        check_input(a, "transpose");
        require(a.rank() == 2, "transpose: operand must be rank-2");
        const int m = a.dim(0), n = a.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m) * n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = a.at(i, j);
        return emit(OpKind::transpose, {a.node(), -1}, Shape{n, m}, std::move(out), needs_grad(a));
    }

    // ---- reductions ----------------------------------------------------------

    Tensor sum(const Tensor& a) {
        check_input(a, "sum");
        double s = 0.0;
        for (double v : a.data()) s += v;
        return emit(OpKind::sum, {a.node(), -1}, Shape{}, {s}, needs_grad(a));
    }

    Tensor mean(const Tensor& a) {
        check_input(a, "mean");
        require(a.size() > 0, "mean: empty tensor");
        double s = 0.0;
        for (double v : a.data()) s += v;
        return emit(OpKind::mean, {a.node(), -1}, Shape{}, {s / static_cast<double>(a.size())}, needs_grad(a));
    }

    // ---- elementwise unary ----------------------------------------------------

    Tensor neg(const Tensor& a) {
        return unary(OpKind::neg, a, [](double x) { return -x; });
    }
    Tensor exp(const Tensor& a) {
        return unary(OpKind::exp_, a, [](double x) { return std::exp(x); });
    }
    Tensor log(const Tensor& a) {
        for (double v : a.data())
            if (v <= 0.0) throw DomainError("log: non-positive input");
        return unary(OpKind::log_, a, [](double x) { return std::log(x); });
    }
    Tensor sigmoid(const Tensor& a) { return unary(OpKind::sigmoid, a, stable_sigmoid); }
    /// log(sigma(x)) in its overflow-free form; the building block of every
    /// cross-entropy style loss here.
    Tensor log_sigmoid(const Tensor& a) { return unary(OpKind::log_sigmoid, a, stable_log_sigmoid); }
    Tensor tanh(const Tensor& a) {
        return unary(OpKind::tanh_, a, [](double x) { return std::tanh(x); });
    }
    Tensor relu(const Tensor& a) {
        return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
    }
    /// Elementwise max(0, x); the same primitive as relu, named for loss code.
    Tensor max0(const Tensor& a) { return relu(a); }
    Tensor leaky_relu(const Tensor& a, double alpha) {
        auto out = unary(OpKind::leaky_relu, a, [alpha](double x) { return x > 0.0 ? x : alpha * x; });
        nodes_.back().attr = alpha;
        return out;
    }
    Tensor square(const Tensor& a) {
        return unary(OpKind::square, a, [](double x) { return x * x; });
    }
    Tensor sqrt(const Tensor& a) {
        // Strictly positive domain: the backward rule 1/(2 sqrt x) must stay finite.
        for (double v : a.data())
            if (v <= 0.0) throw DomainError("sqrt: non-positive input");
        return unary(OpKind::sqrt_, a, [](double x) { return std::sqrt(x); });
    }
    Tensor recip(const Tensor& a) {
        for (double v : a.data())
            if (v == 0.0) throw DomainError("recip: zero input");
        return unary(OpKind::recip, a, [](double x) { return 1.0 / x; });
    }
    /// 1/x with 0 -> 0. The convention defining the derivative of a vector
    /// norm at the origin as zero enters through this op.
    Tensor recip_or_zero(const Tensor& a) {
        return unary(OpKind::recip_or_zero, a, [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; });
    }

    // ---- row/column structure --------------------------------------------------

    /// Euclidean norm of each row: [m x d] -> [m].
    Tensor l2_norm_rows(const Tensor& a) {
        check_input(a, "l2_norm_rows");
        require(a.rank() == 2, "l2_norm_rows: operand must be rank-2");
        const int m = a.dim(0), d = a.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                const double v = a.at(i, j);
                s += v * v;
            }
            out[static_cast<std::size_t>(i)] = std::sqrt(s);
        }
        return emit(OpKind::l2_norm_rows, {a.node(), -1}, Shape{m}, std::move(out), needs_grad(a));
    }

    /// [m x d] + row vector [d], broadcast over rows (bias add).
    Tensor broadcast_add_row(const Tensor& a, const Tensor& b) {
        check_input(a, "broadcast_add_row");
        check_input(b, "broadcast_add_row");
        require(a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0),
                "broadcast_add_row: need [m x d] and [d], got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
        const int m = a.dim(0), d = a.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m) * d);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = a.at(i, j) + b[j];
        return emit(OpKind::broadcast_add_row, {a.node(), b.node()}, Shape{m, d}, std::move(out),
                    needs_grad(a) || needs_grad(b));
    }

    /// Tile a row vector [d] into [m x d].
    Tensor broadcast_row(const Tensor& v, int m) {
        check_input(v, "broadcast_row");
        require(v.rank() == 1, "broadcast_row: operand must be rank-1");
        const int d = v.dim(0);
        std::vector<double> out(static_cast<std::size_t>(m) * d);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = v[j];
        auto t = emit(OpKind::broadcast_row, {v.node(), -1}, Shape{m, d}, std::move(out), needs_grad(v));
        nodes_.back().iattr[0] = m;
        return t;
    }

    /// Tile a column vector [m] into [m x d].
    Tensor broadcast_col(const Tensor& v, int d) {
        check_input(v, "broadcast_col");
        require(v.rank() == 1, "broadcast_col: operand must be rank-1");
        const int m = v.dim(0);
        std::vector<double> out(static_cast<std::size_t>(m) * d);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = v[i];
        auto t = emit(OpKind::broadcast_col, {v.node(), -1}, Shape{m, d}, std::move(out), needs_grad(v));
        nodes_.back().iattr[0] = d;
        return t;
    }

    /// Scale row i of [m x d] by v[i].
    Tensor rowwise_scale(const Tensor& a, const Tensor& v) {
        check_input(a, "rowwise_scale");
        check_input(v, "rowwise_scale");
        require(a.rank() == 2 && v.rank() == 1 && a.dim(0) == v.dim(0), "rowwise_scale: need [m x d] and [m]");
        const int m = a.dim(0), d = a.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m) * d);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = a.at(i, j) * v[i];
        return emit(OpKind::rowwise_scale, {a.node(), v.node()}, Shape{m, d}, std::move(out),
                    needs_grad(a) || needs_grad(v));
    }

    Tensor row_sum(const Tensor& a) {
        check_input(a, "row_sum");
        require(a.rank() == 2, "row_sum: operand must be rank-2");
        const int m = a.dim(0), d = a.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m), 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i)] += a.at(i, j);
        return emit(OpKind::row_sum, {a.node(), -1}, Shape{m}, std::move(out), needs_grad(a));
    }

    Tensor col_sum(const Tensor& a) {
        check_input(a, "col_sum");
        require(a.rank() == 2, "col_sum: operand must be rank-2");
        const int m = a.dim(0), d = a.dim(1);
        std::vector<double> out(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += a.at(i, j);
        return emit(OpKind::col_sum, {a.node(), -1}, Shape{d}, std::move(out), needs_grad(a));
    }

    // ---- scalar attrs / shape ops ------------------------------------------------

    Tensor scale(const Tensor& a, double c) {
        auto out = unary(OpKind::scale, a, [c](double x) { return c * x; });
        nodes_.back().attr = c;
        return out;
    }

    Tensor add_scalar(const Tensor& a, double c) {
        auto out = unary(OpKind::add_scalar, a, [c](double x) { return x + c; });
        nodes_.back().attr = c;
        return out;
    }

    /// Broadcast a [] tensor to an arbitrary shape. The scalar stays on the
    /// tape, so batch statistics remain differentiable.
    Tensor expand_scalar(const Tensor& s, Shape shape) {
        check_input(s, "expand_scalar");
        require(s.rank() == 0, "expand_scalar: operand must be a scalar");
        const auto n = shape_size(shape);
        std::vector<double> out(static_cast<std::size_t>(n), s.item());
        return emit(OpKind::expand_scalar, {s.node(), -1}, std::move(shape), std::move(out), needs_grad(s));
    }

    Tensor reshape(const Tensor& a, Shape shape) {
        check_input(a, "reshape");
        require(shape_size(shape) == a.size(), "reshape: element count mismatch");
        return emit(OpKind::reshape, {a.node(), -1}, std::move(shape), a.to_vector(), needs_grad(a));
    }

    /// Concatenate along axis 0 or 1. Rank-1 tensors concatenate along axis 0.
    Tensor concat(const Tensor& a, const Tensor& b, int axis) {
        check_input(a, "concat");
        check_input(b, "concat");
        require(a.rank() == b.rank() && (a.rank() == 1 || a.rank() == 2),
                "concat: rank mismatch or unsupported rank");
        const bool both = needs_grad(a) || needs_grad(b);
        if (a.rank() == 1 || axis == 0) {
            require(axis == 0, "concat: rank-1 concat must use axis 0");
            if (a.rank() == 2) require(a.dim(1) == b.dim(1), "concat: column counts differ");
            std::vector<double> out;
            out.reserve(static_cast<std::size_t>(a.size() + b.size()));
            out.insert(out.end(), a.data().begin(), a.data().end());
            out.insert(out.end(), b.data().begin(), b.data().end());
            Shape shape = a.rank() == 1 ? Shape{a.dim(0) + b.dim(0)} : Shape{a.dim(0) + b.dim(0), a.dim(1)};
            auto t = emit(OpKind::concat, {a.node(), b.node()}, std::move(shape), std::move(out), both);
            nodes_.back().iattr = {0, a.dim(0), 0};
            return t;
        }
        require(axis == 1, "concat: axis out of range");
        require(a.dim(0) == b.dim(0), "concat: row counts differ");
        const int m = a.dim(0), da = a.dim(1), db = b.dim(1);
        std::vector<double> out(static_cast<std::size_t>(m) * (da + db));
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < da; ++j) out[static_cast<std::size_t>(i) * (da + db) + j] = a.at(i, j);
            for (int j = 0; j < db; ++j) out[static_cast<std::size_t>(i) * (da + db) + da + j] = b.at(i, j);
        }
        auto t = emit(OpKind::concat, {a.node(), b.node()}, Shape{m, da + db}, std::move(out), both);
        nodes_.back().iattr = {1, da, 0};
        return t;
    }

    Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len) {
        check_input(a, "slice");
        require(a.rank() == 1 || a.rank() == 2, "slice: unsupported rank");
        require(axis >= 0 && axis < a.rank(), "slice: axis out of range");
        require(start >= 0 && len >= 1 && start + len <= a.dim(axis), "slice: range out of bounds");
        std::vector<double> out;
        Shape shape;
        if (a.rank() == 1) {
            out.assign(a.data().begin() + start, a.data().begin() + start + len);
            shape = {static_cast<int>(len)};
        } else if (axis == 0) {
            const int d = a.dim(1);
            out.assign(a.data().begin() + start * d, a.data().begin() + (start + len) * d);
            shape = {static_cast<int>(len), d};
        } else {
            const int m = a.dim(0);
            out.resize(static_cast<std::size_t>(m) * len);
            for (int i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < len; ++j)
                    out[static_cast<std::size_t>(i) * len + j] = a.at(i, start + j);
            shape = {m, static_cast<int>(len)};
        }
        auto t = emit(OpKind::slice, {a.node(), -1}, std::move(shape), std::move(out), needs_grad(a));
        nodes_.back().iattr = {axis, start, a.dim(axis)};
        return t;
    }

    /// Inverse of slice: embed `a` into zeros of the original extent.
    Tensor pad_slice(const Tensor& a, int axis, std::int64_t start, std::int64_t orig_dim) {
        check_input(a, "pad_slice");
        require(a.rank() == 1 || a.rank() == 2, "pad_slice: unsupported rank");
        Shape shape = a.shape();
        shape[static_cast<std::size_t>(axis)] = static_cast<int>(orig_dim);
        std::vector<double> out(static_cast<std::size_t>(shape_size(shape)), 0.0);
        if (a.rank() == 1) {
            for (std::int64_t j = 0; j < a.size(); ++j) out[static_cast<std::size_t>(start + j)] = a[j];
        } else if (axis == 0) {
            const int d = a.dim(1);
            for (int i = 0; i < a.dim(0); ++i)
                for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(start + i) * d + j] = a.at(i, j);
        } else {
            const int m = a.dim(0), len = a.dim(1);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < len; ++j)
                    out[static_cast<std::size_t>(i) * orig_dim + start + j] = a.at(i, j);
        }
        auto t = emit(OpKind::pad_slice, {a.node(), -1}, std::move(shape), std::move(out), needs_grad(a));
        nodes_.back().iattr = {axis, start, orig_dim};
        return t;
    }

    // ---- differentiation -------------------------------------------------------

    /// Reverse-mode pass from a scalar output to the requested nodes. The
    /// adjoint computations are recorded on this same tape, so entries of the
    /// returned GradMap can be differentiated again.
    GradMap backward(const Tensor& output, std::span<const Tensor> leaves) {
        if (output.rank() != 0) throw ShapeError("backward: output must be a scalar");
        if (!output.on_tape() || output.node() >= static_cast<int>(nodes_.size()))
            throw ShapeError("backward: output is not on this tape");
        for (const auto& lf : leaves)
            if (!lf.on_tape() || lf.node() >= static_cast<int>(nodes_.size()))
                throw ShapeError("backward: leaf is not on this tape");

        const int root = output.node();
        std::vector<Tensor> adj(static_cast<std::size_t>(root) + 1);
        adj[static_cast<std::size_t>(root)] = constant_scalar(1.0);

        for (int id = root; id >= 0; --id) {
            Tensor g = adj[static_cast<std::size_t>(id)];
            if (!g.valid()) continue;
            const Node n = nodes_[static_cast<std::size_t>(id)];  // copy: nodes_ may reallocate below
            if (n.op == OpKind::leaf) continue;
            propagate(id, n, g, adj);
        }

        GradMap gm;
        for (const auto& lf : leaves) {
            const auto idx = static_cast<std::size_t>(lf.node());
            if (idx < adj.size() && adj[idx].valid())
                gm.put(lf.node(), adj[idx]);
            else
                gm.put(lf.node(), constant(Tensor::zeros(lf.shape())));
        }
        return gm;
    }

    GradMap backward(const Tensor& output, std::initializer_list<Tensor> leaves) {
        std::vector<Tensor> v(leaves);
        return backward(output, std::span<const Tensor>(v));
    }

    /// Differentiate a scalar function of an input-gradient with respect to
    /// weights: the first backward w.r.t. `input_leaf` stays on the tape, the
    /// caller-supplied `scalar_of_grad` builds a penalty from it, and a second
    /// backward reaches the weights. Returns the penalty value and its
    /// weight gradients.
    std::pair<Tensor, GradMap> grad_of_grad(const Tensor& output_scalar, const Tensor& input_leaf,
                                            std::span<const Tensor> weight_leaves,
                                            const std::function<Tensor(Tape&, const Tensor&)>& scalar_of_grad) {
        const Tensor one_leaf[1] = {input_leaf};
        GradMap first = backward(output_scalar, std::span<const Tensor>(one_leaf));
        const Tensor gx = first.at(input_leaf);
        Tensor penalty = scalar_of_grad(*this, gx);
        GradMap second = backward(penalty, weight_leaves);
        return {std::move(penalty), std::move(second)};
    }

    // ---- determinism ------------------------------------------------------------

    /// Recompute every node's forward value from the recorded structure.
    /// True when the replay is bit-identical to the stored values.
    bool replay_matches() const {
        std::vector<std::vector<double>> vals(nodes_.size());
        for (std::size_t id = 0; id < nodes_.size(); ++id) {
            const Node& n = nodes_[id];
            if (n.op == OpKind::leaf) {
                vals[id] = *n.value;
            } else {
                Tape scratch;
                Tensor ia, ib;
                if (n.in[0] >= 0) {
                    const auto& src = nodes_[static_cast<std::size_t>(n.in[0])];
                    ia = scratch.leaf(Tensor(src.shape, vals[static_cast<std::size_t>(n.in[0])]), false);
                }
                if (n.in[1] >= 0) {
                    const auto& src = nodes_[static_cast<std::size_t>(n.in[1])];
                    ib = scratch.leaf(Tensor(src.shape, vals[static_cast<std::size_t>(n.in[1])]), false);
                }
                vals[id] = scratch.apply(n, ia, ib).to_vector();
            }
            if (vals[id] != *nodes_[id].value) return false;
        }
        return true;
    }

  private:
    std::vector<Node> nodes_;

    static void require(bool ok, const std::string& msg) {
        if (!ok) throw ShapeError(msg);
    }

    void check_input(const Tensor& t, const char* op) const {
        if (!t.valid() || !t.on_tape() || t.node() >= static_cast<int>(nodes_.size()))
            throw ShapeError(std::string(op) + ": input tensor is not recorded on this tape");
    }

    bool needs_grad(const Tensor& t) const {
        return t.on_tape() && nodes_[static_cast<std::size_t>(t.node())].requires_grad;
    }

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Tensor emit(OpKind op, std::array<int, 2> in, Shape shape, std::vector<double> data, bool requires_grad) {
        check_finite(data, op_name(op));
        Tensor t(std::move(shape), std::move(data));
        t.node_ = push(Node{op, in, 0.0, {0, 0, 0}, t.shape_, t.data_, requires_grad});
        return t;
    }

    template <typename F>
    Tensor unary(OpKind op, const Tensor& a, F f) {
        check_input(a, op_name(op));
        std::vector<double> out(static_cast<std::size_t>(a.size()));
        const auto src = a.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(src[i]);
        return emit(op, {a.node(), -1}, a.shape(), std::move(out), needs_grad(a));
    }

    Tensor binary(OpKind op, const Tensor& a, const Tensor& b) {
        check_input(a, op_name(op));
        check_input(b, op_name(op));
        require(a.shape() == b.shape(), std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape()) +
                                            " vs " + shape_str(b.shape()));
        std::vector<double> out(static_cast<std::size_t>(a.size()));
        const auto pa = a.data();
        const auto pb = b.data();
        switch (op) {
            case OpKind::add:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
                break;
            case OpKind::sub:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
                break;
            case OpKind::mul:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
                break;
            default:
                throw ShapeError("binary: bad op");
        }
        return emit(op, {a.node(), b.node()}, a.shape(), std::move(out), needs_grad(a) || needs_grad(b));
    }

    Tensor handle(int id) const {
        const Node& n = nodes_.at(static_cast<std::size_t>(id));
        Tensor t;
        t.shape_ = n.shape;
        t.data_ = n.value;
        t.node_ = id;
        return t;
    }

    void accumulate(std::vector<Tensor>& adj, int id, const Tensor& contrib) {
        auto& slot = adj[static_cast<std::size_t>(id)];
        slot = slot.valid() ? add(slot, contrib) : contrib;
    }

    // Backward rule per op. `g` is the adjoint of node `id`; every
    // contribution is emitted as tape ops so it stays differentiable.
    void propagate(int id, const Node& n, const Tensor& g, std::vector<Tensor>& adj) {
        const int ia = n.in[0], ib = n.in[1];
        const bool wa = ia >= 0 && nodes_[static_cast<std::size_t>(ia)].requires_grad;
        const bool wb = ib >= 0 && nodes_[static_cast<std::size_t>(ib)].requires_grad;
        if (!wa && !wb) return;
        const Tensor a = ia >= 0 ? handle(ia) : Tensor();
        const Tensor b = ib >= 0 ? handle(ib) : Tensor();
        const Tensor out = handle(id);

        switch (n.op) {
            case OpKind::add:
                if (wa) accumulate(adj, ia, g);
                if (wb) accumulate(adj, ib, g);
                break;
            case OpKind::sub:
                if (wa) accumulate(adj, ia, g);
                if (wb) accumulate(adj, ib, neg(g));
                break;
            case OpKind::mul:
                if (wa) accumulate(adj, ia, mul(g, b));
                if (wb) accumulate(adj, ib, mul(g, a));
                break;
            case OpKind::matmul:
                if (wa) accumulate(adj, ia, matmul(g, transpose(b)));
                if (wb) accumulate(adj, ib, matmul(transpose(a), g));
                break;
            case OpKind::transpose:
                if (wa) accumulate(adj, ia, transpose(g));
                break;
            case OpKind::sum:
                if (wa) accumulate(adj, ia, expand_scalar(g, a.shape()));
                break;
            case OpKind::mean:
                if (wa)
                    accumulate(adj, ia,
                               scale(expand_scalar(g, a.shape()), 1.0 / static_cast<double>(a.size())));
                break;
            case OpKind::neg:
                if (wa) accumulate(adj, ia, neg(g));
                break;
            case OpKind::exp_:
                if (wa) accumulate(adj, ia, mul(g, out));
                break;
            case OpKind::log_:
                if (wa) accumulate(adj, ia, mul(g, recip(a)));
                break;
            case OpKind::sigmoid:
                // sigma' = sigma - sigma^2
                if (wa) accumulate(adj, ia, mul(g, sub(out, square(out))));
                break;
            case OpKind::log_sigmoid:
                // d/dx log sigma(x) = sigma(-x)
                if (wa) accumulate(adj, ia, mul(g, sigmoid(neg(a))));
                break;
            case OpKind::tanh_:
                if (wa) accumulate(adj, ia, sub(g, mul(g, square(out))));
                break;
            case OpKind::relu:
            case OpKind::leaky_relu: {
                // Constant 0/1 (or alpha) mask; the mask's own derivative is
                // zero by the kink convention, so double backprop stops here.
                if (!wa) break;
                const double alpha = n.op == OpKind::relu ? 0.0 : n.attr;
                std::vector<double> mask(static_cast<std::size_t>(a.size()));
                const auto src = a.data();
                for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = src[i] > 0.0 ? 1.0 : alpha;
                accumulate(adj, ia, mul(g, constant(Tensor(a.shape(), std::move(mask)))));
                break;
            }
            case OpKind::square:
                if (wa) accumulate(adj, ia, mul(g, scale(a, 2.0)));
                break;
            case OpKind::sqrt_:
                if (wa) accumulate(adj, ia, mul(g, scale(recip(out), 0.5)));
                break;
            case OpKind::recip:
            case OpKind::recip_or_zero:
                // -g / x^2; for the or-zero variant the saved output is 0 at
                // x=0, so the contribution vanishes there as defined.
                if (wa) accumulate(adj, ia, neg(mul(g, square(out))));
                break;
            case OpKind::l2_norm_rows:
                // d n_i / d x_ij = x_ij / n_i, with 0 at an all-zero row.
                if (wa) accumulate(adj, ia, rowwise_scale(a, mul(g, recip_or_zero(out))));
                break;
            case OpKind::broadcast_add_row:
                if (wa) accumulate(adj, ia, g);
                if (wb) accumulate(adj, ib, col_sum(g));
                break;
            case OpKind::broadcast_row:
                if (wa) accumulate(adj, ia, col_sum(g));
                break;
            case OpKind::broadcast_col:
                if (wa) accumulate(adj, ia, row_sum(g));
                break;
            case OpKind::rowwise_scale:
                if (wa) accumulate(adj, ia, rowwise_scale(g, b));
                if (wb) accumulate(adj, ib, row_sum(mul(g, a)));
                break;
            case OpKind::row_sum:
                if (wa) accumulate(adj, ia, broadcast_col(g, a.dim(1)));
                break;
            case OpKind::col_sum:
                if (wa) accumulate(adj, ia, broadcast_row(g, a.dim(0)));
                break;
            case OpKind::scale:
                if (wa) accumulate(adj, ia, scale(g, n.attr));
                break;
            case OpKind::add_scalar:
                if (wa) accumulate(adj, ia, g);
                break;
            case OpKind::expand_scalar:
                if (wa) accumulate(adj, ia, sum(g));
                break;
            case OpKind::reshape:
                if (wa) accumulate(adj, ia, reshape(g, a.shape()));
                break;
            case OpKind::concat: {
                const int axis = static_cast<int>(n.iattr[0]);
                const std::int64_t split = n.iattr[1];
                if (wa) accumulate(adj, ia, slice(g, axis, 0, split));
                if (wb) accumulate(adj, ib, slice(g, axis, split, b.dim(axis)));
                break;
            }
            case OpKind::slice:
                if (wa) accumulate(adj, ia, pad_slice(g, static_cast<int>(n.iattr[0]), n.iattr[1], n.iattr[2]));
                break;
            case OpKind::pad_slice:
                if (wa)
                    accumulate(adj, ia,
                               slice(g, static_cast<int>(n.iattr[0]), n.iattr[1],
                                     a.dim(static_cast<int>(n.iattr[0]))));
                break;
            case OpKind::leaf:
                break;
        }
    }

    /// Re-run one recorded node against supplied inputs (replay support).
    Tensor apply(const Node& n, const Tensor& a, const Tensor& b) {
        switch (n.op) {
            case OpKind::add: return add(a, b);
            case OpKind::sub: return sub(a, b);
            case OpKind::mul: return mul(a, b);
            case OpKind::matmul: return matmul(a, b);
            case OpKind::transpose: return transpose(a);
            case OpKind::sum: return sum(a);
            case OpKind::mean: return mean(a);
            case OpKind::neg: return neg(a);
            case OpKind::exp_: return exp(a);
            case OpKind::log_: return log(a);
            case OpKind::sigmoid: return sigmoid(a);
            case OpKind::log_sigmoid: return log_sigmoid(a);
            case OpKind::tanh_: return tanh(a);
            case OpKind::relu: return relu(a);
            case OpKind::leaky_relu: return leaky_relu(a, n.attr);
            case OpKind::square: return square(a);
            case OpKind::sqrt_: return sqrt(a);
            case OpKind::recip: return recip(a);
            case OpKind::recip_or_zero: return recip_or_zero(a);
            case OpKind::l2_norm_rows: return l2_norm_rows(a);
            case OpKind::broadcast_add_row: return broadcast_add_row(a, b);
            case OpKind::broadcast_row: return broadcast_row(a, static_cast<int>(n.iattr[0]));
            case OpKind::broadcast_col: return broadcast_col(a, static_cast<int>(n.iattr[0]));
            case OpKind::rowwise_scale: return rowwise_scale(a, b);
            case OpKind::row_sum: return row_sum(a);
            case OpKind::col_sum: return col_sum(a);
            case OpKind::scale: return scale(a, n.attr);
            case OpKind::add_scalar: return add_scalar(a, n.attr);
            case OpKind::expand_scalar: return expand_scalar(a, n.shape);
            case OpKind::reshape: return reshape(a, n.shape);
            case OpKind::concat: return concat(a, b, static_cast<int>(n.iattr[0]));
            case OpKind::slice:
                return slice(a, static_cast<int>(n.iattr[0]), n.iattr[1],
                             n.shape[static_cast<std::size_t>(n.iattr[0])]);
            case OpKind::pad_slice:
                return pad_slice(a, static_cast<int>(n.iattr[0]), n.iattr[1], n.iattr[2]);
            case OpKind::leaf: break;
        }
        throw ShapeError("apply: bad op");
    }
};

}  // namespace relgan
