#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "relgan/rng.hpp"
#include "relgan/tape.hpp"

using namespace relgan;
using Catch::Approx;

TEST_CASE("forward values of primitive ops", "[autodiff]") {
    Tape t;

    SECTION("sigmoid at 0 is exactly one half") {
        auto y = t.sigmoid(t.leaf(Tensor::scalar(0.0)));
        REQUIRE(y.item() == 0.5);
    }

    SECTION("sigmoid at 8") {
        auto y = t.sigmoid(t.leaf(Tensor::scalar(8.0)));
        REQUIRE(y.item() == Approx(0.99966464986953352).epsilon(1e-12));
    }

    SECTION("max0 clamps a satisfied hinge margin to zero") {
        auto y = t.max0(t.leaf(Tensor::scalar(1.0 - 2.0)));
        REQUIRE(y.item() == 0.0);
    }

    SECTION("log_sigmoid stays finite far beyond exp overflow") {
        auto y = t.log_sigmoid(t.leaf(Tensor({2}, {700.0, -700.0})));
        REQUIRE(std::isfinite(y[0]));
        REQUIRE(std::isfinite(y[1]));
        REQUIRE(y[1] == Approx(-700.0).epsilon(1e-12));
        // -log sigma(c_r - c_f) at a difference of 700 must not overflow
        auto z = t.neg(t.log_sigmoid(t.leaf(Tensor::scalar(-700.0))));
        REQUIRE(z.item() == Approx(700.0).epsilon(1e-12));
    }

    SECTION("matmul matches a hand computation") {
        auto a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
        auto b = t.leaf(Tensor({2, 2}, {5, 6, 7, 8}));
        auto c = t.matmul(a, b);
        REQUIRE(c.to_vector() == std::vector<double>{19, 22, 43, 50});
    }
}

TEST_CASE("backward on scalar expressions", "[autodiff]") {
    Tape t;

    SECTION("d/dx sigmoid(x) at 0 is 0.25") {
        auto x = t.leaf(Tensor::scalar(0.0));
        auto y = t.sigmoid(x);
        auto g = t.backward(y, {x});
        REQUIRE(g.at(x).item() == Approx(0.25).epsilon(1e-14));
    }

    SECTION("d/dx of -log sigma(x) at 2") {
        auto x = t.leaf(Tensor::scalar(2.0));
        auto y = t.neg(t.log_sigmoid(x));
        auto g = t.backward(y, {x});
        REQUIRE(g.at(x).item() == Approx(-0.11920292202211756).epsilon(1e-12));
        // and it agrees with central differences at h = 1e-4
        auto fd = oracle::finite_diff(
            [](const std::vector<double>& v) { return -stable_log_sigmoid(v[0]); }, {2.0});
        REQUIRE(oracle::grad_error(g.at(x).item(), fd[0]) < 1e-4);
    }

    SECTION("product rule") {
        auto x = t.leaf(Tensor::scalar(3.0));
        auto y = t.leaf(Tensor::scalar(2.0));
        auto z = t.mul(x, y);
        auto g = t.backward(z, {x, y});
        REQUIRE(g.at(x).item() == 2.0);
        REQUIRE(g.at(y).item() == 3.0);
    }

    SECTION("gradient linearity: grad of a sum equals sum of grads") {
        Rng rng(7);
        std::vector<double> xs(6);
        for (auto& v : xs) v = rng.uniform(-3, 3);
        Tape tp;
        auto x = tp.leaf(Tensor({6}, xs));
        auto la = tp.mean(tp.square(x));
        auto lb = tp.mean(tp.tanh(x));
        auto lsum = tp.add(la, lb);
        auto gs = tp.backward(lsum, {x});
        auto ga = tp.backward(la, {x});
        auto gb = tp.backward(lb, {x});
        for (int i = 0; i < 6; ++i)
            REQUIRE(gs.at(x)[i] == Approx(ga.at(x)[i] + gb.at(x)[i]).margin(1e-15));
    }

    SECTION("leaf with no path to the output gets a zero gradient") {
        auto x = t.leaf(Tensor::scalar(1.0));
        auto unused = t.leaf(Tensor::scalar(5.0));
        auto y = t.square(x);
        auto g = t.backward(y, {x, unused});
        REQUIRE(g.at(unused).item() == 0.0);
    }
}

namespace {

// FD-checks the gradient of sum(f(x)) for an elementwise tape op.
template <typename BuildOp, typename Scalar>
void check_elementwise_op(const char* name, BuildOp build, Scalar f, double lo, double hi,
                          double avoid_kink_at = std::nan("")) {
    Rng rng(1234);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs(5);
        for (auto& v : xs) {
            do {
                v = rng.uniform(lo, hi);
            } while (!std::isnan(avoid_kink_at) && std::abs(v - avoid_kink_at) < 5e-4);
        }
        Tape t;
        auto x = t.leaf(Tensor({5}, xs));
        auto y = t.sum(build(t, x));
        auto g = t.backward(y, {x});
        auto fd = oracle::finite_diff(
            [&](const std::vector<double>& v) {
                double s = 0;
                for (double e : v) s += f(e);
                return s;
            },
            xs);
        INFO(name << " trial " << trial);
        REQUIRE(oracle::max_grad_error(g.at(x).to_vector(), fd) < 1e-4);
    }
}

}  // namespace

TEST_CASE("every elementwise op matches central finite differences", "[autodiff][property]") {
    check_elementwise_op(
        "neg", [](Tape& t, const Tensor& x) { return t.neg(x); }, [](double v) { return -v; }, -3, 3);
    check_elementwise_op(
        "exp", [](Tape& t, const Tensor& x) { return t.exp(x); }, [](double v) { return std::exp(v); }, -3, 3);
    check_elementwise_op(
        "log", [](Tape& t, const Tensor& x) { return t.log(x); }, [](double v) { return std::log(v); }, 0.1, 3);
    check_elementwise_op(
        "sigmoid", [](Tape& t, const Tensor& x) { return t.sigmoid(x); }, stable_sigmoid, -3, 3);
    check_elementwise_op(
        "log_sigmoid", [](Tape& t, const Tensor& x) { return t.log_sigmoid(x); }, stable_log_sigmoid, -3, 3);
    check_elementwise_op(
        "tanh", [](Tape& t, const Tensor& x) { return t.tanh(x); }, [](double v) { return std::tanh(v); }, -3, 3);
    check_elementwise_op(
        "relu", [](Tape& t, const Tensor& x) { return t.relu(x); },
        [](double v) { return v > 0 ? v : 0.0; }, -3, 3, 0.0);
    check_elementwise_op(
        "leaky_relu", [](Tape& t, const Tensor& x) { return t.leaky_relu(x, 0.2); },
        [](double v) { return v > 0 ? v : 0.2 * v; }, -3, 3, 0.0);
    check_elementwise_op(
        "square", [](Tape& t, const Tensor& x) { return t.square(x); }, [](double v) { return v * v; }, -3, 3);
    check_elementwise_op(
        "sqrt", [](Tape& t, const Tensor& x) { return t.sqrt(x); }, [](double v) { return std::sqrt(v); }, 0.1, 3);
    check_elementwise_op(
        "recip", [](Tape& t, const Tensor& x) { return t.recip(x); }, [](double v) { return 1.0 / v; }, 0.3, 3);
    check_elementwise_op(
        "scale", [](Tape& t, const Tensor& x) { return t.scale(x, -1.7); }, [](double v) { return -1.7 * v; },
        -3, 3);
    check_elementwise_op(
        "add_scalar", [](Tape& t, const Tensor& x) { return t.add_scalar(x, 2.5); },
        [](double v) { return v + 2.5; }, -3, 3);
}

TEST_CASE("structured ops match central finite differences", "[autodiff][property]") {
    Rng rng(99);
    const int m = 3, d = 4, n = 2;

    auto rand_vec = [&](int count) {
        std::vector<double> v(static_cast<std::size_t>(count));
        for (auto& e : v) e = rng.uniform(-3, 3);
        return v;
    };

    SECTION("matmul, both operands") {
        auto xa = rand_vec(m * d);
        auto xb = rand_vec(d * n);
        Tape t;
        auto a = t.leaf(Tensor({m, d}, xa));
        auto b = t.leaf(Tensor({d, n}, xb));
        auto y = t.mean(t.square(t.matmul(a, b)));
        auto g = t.backward(y, {a, b});
        auto eval = [&](const std::vector<double>& va, const std::vector<double>& vb) {
            Tape s;
            return s.mean(s.square(s.matmul(s.leaf(Tensor({m, d}, va)), s.leaf(Tensor({d, n}, vb))))).item();
        };
        auto fda = oracle::finite_diff([&](const std::vector<double>& v) { return eval(v, xb); }, xa);
        auto fdb = oracle::finite_diff([&](const std::vector<double>& v) { return eval(xa, v); }, xb);
        REQUIRE(oracle::max_grad_error(g.at(a).to_vector(), fda) < 1e-4);
        REQUIRE(oracle::max_grad_error(g.at(b).to_vector(), fdb) < 1e-4);
    }

    SECTION("l2_norm_rows") {
        auto xs = rand_vec(m * d);
        Tape t;
        auto x = t.leaf(Tensor({m, d}, xs));
        auto y = t.sum(t.l2_norm_rows(x));
        auto g = t.backward(y, {x});
        auto fd = oracle::finite_diff(
            [&](const std::vector<double>& v) {
                double s = 0;
                for (int i = 0; i < m; ++i) {
                    double q = 0;
                    for (int j = 0; j < d; ++j) q += v[static_cast<std::size_t>(i * d + j)] *
                                                      v[static_cast<std::size_t>(i * d + j)];
                    s += std::sqrt(q);
                }
                return s;
            },
            xs);
        REQUIRE(oracle::max_grad_error(g.at(x).to_vector(), fd) < 1e-4);
    }

    SECTION("broadcast_add_row, rowwise_scale, reductions, concat, slice") {
        auto xs = rand_vec(m * d);
        auto bs = rand_vec(d);
        auto vs = rand_vec(m);
        auto eval = [&](const std::vector<double>& vx, const std::vector<double>& vb,
                        const std::vector<double>& vv) {
            Tape s;
            auto x = s.leaf(Tensor({m, d}, vx));
            auto b = s.leaf(Tensor({d}, vb));
            auto v = s.leaf(Tensor({m}, vv));
            auto h = s.rowwise_scale(s.broadcast_add_row(x, b), v);
            auto joined = s.concat(h, x, 1);
            auto cut = s.slice(joined, 1, 1, d);
            auto y = s.add(s.mean(s.square(cut)), s.sum(s.mul(s.row_sum(h), s.tanh(s.col_sum(s.transpose(x))))));
            return y;
        };
        Tape t;
        auto x = t.leaf(Tensor({m, d}, xs));
        auto b = t.leaf(Tensor({d}, bs));
        auto v = t.leaf(Tensor({m}, vs));
        auto h = t.rowwise_scale(t.broadcast_add_row(x, b), v);
        auto joined = t.concat(h, x, 1);
        auto cut = t.slice(joined, 1, 1, d);
        auto y = t.add(t.mean(t.square(cut)), t.sum(t.mul(t.row_sum(h), t.tanh(t.col_sum(t.transpose(x))))));
        auto g = t.backward(y, {x, b, v});
        auto fdx = oracle::finite_diff(
            [&](const std::vector<double>& q) { return eval(q, bs, vs).item(); }, xs);
        auto fdb = oracle::finite_diff(
            [&](const std::vector<double>& q) { return eval(xs, q, vs).item(); }, bs);
        auto fdv = oracle::finite_diff(
            [&](const std::vector<double>& q) { return eval(xs, bs, q).item(); }, vs);
        REQUIRE(oracle::max_grad_error(g.at(x).to_vector(), fdx) < 1e-4);
        REQUIRE(oracle::max_grad_error(g.at(b).to_vector(), fdb) < 1e-4);
        REQUIRE(oracle::max_grad_error(g.at(v).to_vector(), fdv) < 1e-4);
    }
}

TEST_CASE("composite network-like expression matches finite differences", "[autodiff][property]") {
    // One dense layer with bias and activation exercises matmul, transpose,
    // broadcast_add_row, reductions and the activation in a single FD check.
    Rng rng(4242);
    const int m = 4, in = 3, out = 2;
    std::vector<double> xs(m * in), ws(out * in), bs(out);
    for (auto& v : xs) v = rng.uniform(-2, 2);
    for (auto& v : ws) v = rng.uniform(-1, 1);
    for (auto& v : bs) v = rng.uniform(-1, 1);

    auto eval = [&](const std::vector<double>& w, const std::vector<double>& b,
                    const std::vector<double>& x) {
        Tape t;
        auto wt = t.leaf(Tensor({out, in}, w));
        auto bt = t.leaf(Tensor({out}, b));
        auto xt = t.leaf(Tensor({m, in}, x));
        auto h = t.tanh(t.broadcast_add_row(t.matmul(xt, t.transpose(wt)), bt));
        return t.mean(t.square(h)).item();
    };

    Tape t;
    auto wt = t.leaf(Tensor({out, in}, ws));
    auto bt = t.leaf(Tensor({out}, bs));
    auto xt = t.leaf(Tensor({m, in}, xs));
    auto h = t.tanh(t.broadcast_add_row(t.matmul(xt, t.transpose(wt)), bt));
    auto loss = t.mean(t.square(h));
    auto g = t.backward(loss, {wt, bt, xt});

    auto fdw = oracle::finite_diff([&](const std::vector<double>& v) { return eval(v, bs, xs); }, ws);
    auto fdb = oracle::finite_diff([&](const std::vector<double>& v) { return eval(ws, v, xs); }, bs);
    auto fdx = oracle::finite_diff([&](const std::vector<double>& v) { return eval(ws, bs, v); }, xs);
    REQUIRE(oracle::max_grad_error(g.at(wt).to_vector(), fdw) < 1e-4);
    REQUIRE(oracle::max_grad_error(g.at(bt).to_vector(), fdb) < 1e-4);
    REQUIRE(oracle::max_grad_error(g.at(xt).to_vector(), fdx) < 1e-4);
}

TEST_CASE("second-order gradients on quadratic critics match closed forms", "[autodiff][double-backprop]") {
    auto norm_penalty = [](Tape& t, const Tensor& gx) {
        return t.mean(t.square(t.add_scalar(t.l2_norm_rows(gx), -1.0)));
    };

    SECTION("unit-norm linear critic: penalty and weight gradients vanish") {
        Tape t;
        auto w = t.leaf(Tensor({2, 1}, {1.0, 0.0}));
        auto x = t.leaf(Tensor({1, 2}, {0.3, -0.7}));
        auto c = t.sum(t.matmul(x, w));
        auto [pen, g] = t.grad_of_grad(c, x, std::array{w}, norm_penalty);
        REQUIRE(pen.item() == Approx(0.0).margin(1e-15));
        REQUIRE(g.at(w)[0] == Approx(0.0).margin(1e-12));
        REQUIRE(g.at(w)[1] == Approx(0.0).margin(1e-12));
    }

    SECTION("weight (2,0): penalty 1 and d/dw1 = 2") {
        Tape t;
        auto w = t.leaf(Tensor({2, 1}, {2.0, 0.0}));
        auto x = t.leaf(Tensor({1, 2}, {0.4, 0.9}));
        auto c = t.sum(t.matmul(x, w));
        auto [pen, g] = t.grad_of_grad(c, x, std::array{w}, norm_penalty);
        REQUIRE(pen.item() == Approx(1.0).epsilon(1e-12));
        // hand differentiation of (||w|| - 1)^2: 2(||w||-1) w / ||w||
        REQUIRE(oracle::grad_error(g.at(w)[0], 2.0) < 1e-8);
        REQUIRE(oracle::grad_error(g.at(w)[1], 0.0) < 1e-8);
    }

    SECTION("half squared norm critic: gradient norm is 1 on the unit circle") {
        Tape t;
        auto x = t.leaf(Tensor({1, 2}, {1.0, 0.0}));
        auto c = t.scale(t.sum(t.square(x)), 0.5);
        Tensor leaves[1] = {x};
        auto g1 = t.backward(c, std::span<const Tensor>(leaves));
        REQUIRE(g1.at(x)[0] == Approx(1.0).margin(1e-15));
        REQUIRE(g1.at(x)[1] == Approx(0.0).margin(1e-15));
        auto pen = norm_penalty(t, g1.at(x));
        REQUIRE(pen.item() == Approx(0.0).margin(1e-15));
    }

    SECTION("general quadratic critic: grad_of_grad matches finite differences of the penalty") {
        // C(x) = sum((x W)^2) per row; penalty depends on W through grad x.
        Rng rng(5);
        std::vector<double> ws(4), xs(4);
        for (auto& v : ws) v = rng.uniform(-1.5, 1.5);
        for (auto& v : xs) v = rng.uniform(-1.5, 1.5);
        auto penalty_of = [&](const std::vector<double>& w) {
            Tape t;
            auto wt = t.leaf(Tensor({2, 2}, w));
            auto xt = t.leaf(Tensor({2, 2}, xs));
            auto c = t.sum(t.square(t.matmul(xt, wt)));
            Tensor leaves[1] = {xt};
            auto g = t.backward(c, std::span<const Tensor>(leaves));
            return t.mean(t.square(t.add_scalar(t.l2_norm_rows(g.at(xt)), -1.0))).item();
        };
        Tape t;
        auto wt = t.leaf(Tensor({2, 2}, ws));
        auto xt = t.leaf(Tensor({2, 2}, xs));
        auto c = t.sum(t.square(t.matmul(xt, wt)));
        auto [pen, g] = t.grad_of_grad(c, xt, std::array{wt},
                                       [](Tape& tp, const Tensor& gx) {
                                           return tp.mean(tp.square(tp.add_scalar(tp.l2_norm_rows(gx), -1.0)));
                                       });
        REQUIRE(pen.item() == Approx(penalty_of(ws)).epsilon(1e-12));
        auto fd = oracle::finite_diff(penalty_of, ws);
        REQUIRE(oracle::max_grad_error(g.at(wt).to_vector(), fd) < 1e-4);
    }
}

TEST_CASE("tape invariants", "[autodiff]") {
    SECTION("replaying a tape reproduces every node bit-exactly") {
        Rng rng(11);
        std::vector<double> xs(8);
        for (auto& v : xs) v = rng.uniform(-2, 2);
        Tape t;
        auto x = t.leaf(Tensor({4, 2}, xs));
        auto y = t.mean(t.square(t.tanh(t.l2_norm_rows(x))));
        auto g = t.backward(y, {x});
        (void)g;
        REQUIRE(t.replay_matches());
    }

    SECTION("node inputs always precede the node") {
        Tape t;
        auto x = t.leaf(Tensor::scalar(1.5));
        auto y = t.square(t.exp(x));
        t.backward(y, {x});
        for (int id = 0; id < static_cast<int>(t.size()); ++id) {
            for (int in : t.node(id).in)
                if (in >= 0) REQUIRE(in < id);
        }
    }
}

TEST_CASE("error surfacing", "[autodiff][errors]") {
    Tape t;
    SECTION("shape mismatch") {
        auto a = t.leaf(Tensor({2}, {1, 2}));
        auto b = t.leaf(Tensor({3}, {1, 2, 3}));
        REQUIRE_THROWS_AS(t.add(a, b), ShapeError);
    }
    SECTION("log of non-positive input") {
        auto a = t.leaf(Tensor::scalar(-1.0));
        REQUIRE_THROWS_AS(t.log(a), DomainError);
        auto z = t.leaf(Tensor::scalar(0.0));
        REQUIRE_THROWS_AS(t.log(z), DomainError);
    }
    SECTION("sqrt of non-positive input") {
        auto a = t.leaf(Tensor::scalar(-0.5));
        REQUIRE_THROWS_AS(t.sqrt(a), DomainError);
    }
    SECTION("overflow surfaces as a numeric error, never as a silent inf") {
        auto a = t.leaf(Tensor::scalar(710.0));
        REQUIRE_THROWS_AS(t.exp(a), NumericError);
    }
    SECTION("backward rejects non-scalar outputs") {
        auto a = t.leaf(Tensor({2}, {1, 2}));
        auto y = t.square(a);
        REQUIRE_THROWS_AS(t.backward(y, {a}), ShapeError);
    }
    SECTION("backward rejects detached tensors") {
        auto a = t.leaf(Tensor::scalar(2.0));
        auto y = t.square(a);
        Tensor detached = Tensor::scalar(1.0);
        REQUIRE_THROWS_AS(t.backward(y, {detached}), ShapeError);
    }
}
