#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvfbsde/nets.hpp"
#include "mvfbsde/rng.hpp"
#include "mvfbsde/tape.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace mvfbsde;

namespace {

// Independent central-difference oracle: perturbs one entry of one leaf and
// rebuilds the whole graph through `loss_of`.
double fd_derivative(const std::function<double(const std::vector<Mat>&)>& loss_of,
                     std::vector<Mat> leaves, std::size_t leaf, std::size_t entry,
                     double h = 1e-5) {
    std::vector<Mat> up = leaves, dn = leaves;
    up[leaf].flat()[entry] += h;
    dn[leaf].flat()[entry] -= h;
    return (loss_of(up) - loss_of(dn)) / (2.0 * h);
}

void check_close_rel(double got, double want, double rel = 1e-6, double abs_floor = 1e-9) {
    const double tol = std::max(abs_floor, rel * std::max(std::abs(got), std::abs(want)));
    CHECK(std::abs(got - want) <= tol);
}

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (double& v : m.flat()) v = scale * rng.uniform(-1.0, 1.0);
    return m;
}

} // namespace

TEST_CASE("square loss gradient: d(x^2)/dx = 2x") {
    ad::Tape tape;
    const ad::NodeId x = tape.leaf_scalar(3.0);
    const Mat zero = Mat::scalar(0.0);
    const Mat one = Mat::scalar(1.0);
    const ad::NodeId loss = tape.sq_loss(x, zero, one, 1.0);
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(9.0));
    tape.backward(loss);
    CHECK(tape.grad(x)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("tanh(w*x) at w=0: d/dx = 0, d/dw = x") {
    ad::Tape tape;
    const double xval = 1.7;
    const ad::NodeId w = tape.leaf_scalar(0.0);
    const ad::NodeId x = tape.leaf_scalar(xval);
    const ad::NodeId y = tape.tanh_(tape.mul(w, x));
    const ad::NodeId loss = tape.sum_all(y);
    tape.backward(loss);
    CHECK(tape.grad(x)(0, 0) == doctest::Approx(0.0));
    CHECK(tape.grad(w)(0, 0) == doctest::Approx(xval));
}

TEST_CASE("backward from a non-scalar node is a usage error") {
    ad::Tape tape;
    Rng rng(11);
    const ad::NodeId x = tape.leaf(random_mat(3, 2, rng));
    const ad::NodeId y = tape.tanh_(x);
    CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("finite differences confirm analytic partials of every primitive") {
    Rng rng(42);
    const std::size_t B = 4, in = 3, out = 2;

    // Leaves: x, W, b, m1, m2 (elementwise partners), scalar mix.
    std::vector<Mat> leaves;
    leaves.push_back(random_mat(B, in, rng));   // 0: x
    leaves.push_back(random_mat(out, in, rng)); // 1: W
    leaves.push_back(random_mat(1, out, rng));  // 2: b
    leaves.push_back(random_mat(B, out, rng));  // 3: m1
    leaves.push_back(random_mat(B, out, rng));  // 4: m2

    Mat target = random_mat(B, 2 * out, rng);
    Mat weights(B, 2 * out, 1.0);
    for (double& w : weights.flat()) w = 0.5 + rng.uniform();

    // Exercises affine, tanh, sigmoid, add, sub, mul, one_minus, scale,
    // concat_cols, sq_loss in one composite graph.
    auto build = [&](ad::Tape& tape, const std::vector<Mat>& L) {
        const ad::NodeId x = tape.leaf(L[0]);
        const ad::NodeId w = tape.leaf(L[1]);
        const ad::NodeId b = tape.leaf(L[2]);
        const ad::NodeId m1 = tape.leaf(L[3]);
        const ad::NodeId m2 = tape.leaf(L[4]);
        const ad::NodeId aff = tape.affine(x, w, b);
        const ad::NodeId t = tape.tanh_(aff);
        const ad::NodeId s = tape.sigmoid_(tape.mul(m1, m2));
        const ad::NodeId u = tape.add(t, tape.scale(tape.sub(s, m1), 0.7));
        const ad::NodeId v = tape.one_minus(tape.mul(u, s));
        const ad::NodeId cat = tape.concat_cols(u, v);
        return tape.sq_loss(cat, target, weights, 3.7);
    };

    auto loss_of = [&](const std::vector<Mat>& L) {
        ad::Tape tape;
        return tape.value(build(tape, L))(0, 0);
    };

    ad::Tape tape;
    const ad::NodeId loss = build(tape, leaves);
    // Rebuild to fetch leaf ids in creation order (0..4 are the leaves).
    tape.backward(loss);

    for (std::size_t leaf = 0; leaf < leaves.size(); ++leaf) {
        const Mat& g = tape.grad(static_cast<ad::NodeId>(leaf));
        REQUIRE_FALSE(g.empty());
        for (std::size_t e = 0; e < leaves[leaf].size(); ++e) {
            const double fd = fd_derivative(loss_of, leaves, leaf, e);
            check_close_rel(g.flat()[e], fd, 1e-6, 1e-8);
        }
    }
}

TEST_CASE("pinball loss subgradient matches alpha - indicator away from the kink") {
    Rng rng(7);
    const double alpha = 0.6;
    Mat pred = random_mat(6, 1, rng);
    Mat realized = random_mat(6, 1, rng);
    Mat w(6, 1, 1.0);

    ad::Tape tape;
    const ad::NodeId p = tape.leaf(pred);
    const ad::NodeId loss = tape.pinball_loss(p, realized, alpha, w, 2.0);
    tape.backward(loss);

    for (std::size_t e = 0; e < pred.size(); ++e) {
        const double ind = realized.flat()[e] >= pred.flat()[e] ? 1.0 : 0.0;
        CHECK(tape.grad(p).flat()[e] == doctest::Approx(((1.0 - alpha) - ind) / 2.0));
        // FD check off the kink.
        auto loss_of = [&](const std::vector<Mat>& L) {
            ad::Tape t2;
            const ad::NodeId pp = t2.leaf(L[0]);
            return t2.value(t2.pinball_loss(pp, realized, alpha, w, 2.0))(0, 0);
        };
        const double fd = fd_derivative(loss_of, {pred}, 0, e, 1e-6);
        check_close_rel(tape.grad(p).flat()[e], fd, 1e-5, 1e-9);
    }
}

TEST_CASE("random small net: every parameter gradient matches central differences") {
    FeedForwardNet net({2, 5, 4, 1}, Activation::Tanh, 99);
    Rng rng(3);
    Mat x = random_mat(8, 2, rng);
    Mat target = random_mat(8, 1, rng);
    Mat w(8, 1, 1.0);

    ad::Tape tape;
    auto ev = net.forward_on_tape(tape, x, false);
    const ad::NodeId loss = tape.sq_loss(ev.output, target, w, 8.0);
    tape.backward(loss);

    auto params = net.params();
    REQUIRE(params.size() == ev.params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t e = 0; e < params[k]->size(); ++e) {
            const double keep = params[k]->flat()[e];
            const double h = 1e-5;
            params[k]->flat()[e] = keep + h;
            ad::Tape tp;
            auto evp = net.forward_on_tape(tp, x, false);
            const double up = tp.value(tp.sq_loss(evp.output, target, w, 8.0))(0, 0);
            params[k]->flat()[e] = keep - h;
            ad::Tape tm;
            auto evm = net.forward_on_tape(tm, x, false);
            const double dn = tm.value(tm.sq_loss(evm.output, target, w, 8.0))(0, 0);
            params[k]->flat()[e] = keep;
            const double fd = (up - dn) / (2.0 * h);
            check_close_rel(tape.grad(ev.params[k]).flat()[e], fd, 1e-6, 1e-8);
        }
    }
}

TEST_CASE("input gradients flow through the recorded graph") {
    FeedForwardNet net({3, 6, 1}, Activation::Tanh, 5);
    Rng rng(17);
    Mat x = random_mat(5, 3, rng);

    ad::Tape tape;
    auto ev = net.forward_on_tape(tape, x, true);
    tape.backward(tape.sum_all(ev.output));
    const Mat& gx = tape.grad(ev.input);
    REQUIRE_FALSE(gx.empty());

    // Row independence: d(sum of outputs)/dx_r equals the row-r Jacobian.
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double h = 1e-6;
            Mat xp = x, xm = x;
            xp(r, c) += h;
            xm(r, c) -= h;
            const double fd = (net.eval(xp)(r, 0) - net.eval(xm)(r, 0)) / (2.0 * h);
            check_close_rel(gx(r, c), fd, 1e-5, 1e-9);
        }
    }
}

TEST_CASE("tape reuse across reset() leaves results unchanged") {
    FeedForwardNet net({2, 4, 1}, Activation::Tanh, 1);
    Rng rng(8);
    Mat x = random_mat(6, 2, rng);
    Mat target = random_mat(6, 1, rng);
    Mat w(6, 1, 1.0);

    ad::Tape tape;
    std::vector<double> first_grads;
    for (int round = 0; round < 3; ++round) {
        tape.reset();
        auto ev = net.forward_on_tape(tape, x, false);
        tape.backward(tape.sq_loss(ev.output, target, w, 6.0));
        std::vector<double> grads;
        for (auto pid : ev.params)
            for (double g : tape.grad(pid).flat()) grads.push_back(g);
        if (round == 0)
            first_grads = grads;
        else
            CHECK(grads == first_grads);
    }
}

TEST_CASE("identical seeds and inputs give bit-identical forward values") {
    FeedForwardNet a({3, 18, 18, 1}, Activation::Tanh, 1234);
    FeedForwardNet b({3, 18, 18, 1}, Activation::Tanh, 1234);
    Rng rng(55);
    Mat x = random_mat(32, 3, rng);
    const Mat ya = a.eval(x);
    const Mat yb = b.eval(x);
    CHECK(ya == yb);
    // And a different seed gives different weights.
    FeedForwardNet c({3, 18, 18, 1}, Activation::Tanh, 1235);
    CHECK_FALSE(c.eval(x) == ya);
}
