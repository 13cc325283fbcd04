#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cogact/firstorder.hpp"
#include "cogact/selftest.hpp"
#include "cogact/xorbench.hpp"
#include "oracles.hpp"

using namespace cogact;

namespace {

// V = 1/2 sum over output units of (x_o - y_o)^2.
struct HalfSquared {
    const NetworkSpec* spec;
    Vec target;

    PotentialEval operator()(const Vec& x) const {
        PotentialEval p = PotentialEval::zero(spec->nu());
        for (std::size_t o : spec->outputs()) {
            const auto oo = static_cast<Eigen::Index>(o);
            const double r = x[oo] - target[oo];
            p.v += 0.5 * r * r;
            p.v_x[oo] = r;
        }
        return p;
    }
};

// Richardson-extrapolated central difference, O(h^4).
double fd4(const std::function<double(const Vec&)>& f, const Vec& z, Eigen::Index i) {
    const double h = 1e-3;
    const double d1 = oracle::fd_derivative(f, z, i, h);
    const double d2 = oracle::fd_derivative(f, z, i, h / 2);
    return (4.0 * d2 - d1) / 3.0;
}

Vec delta_gradient(const NetworkSpec& spec, const ConstraintEval& ce, const DeltaErrors& d) {
    Vec g(static_cast<Eigen::Index>(spec.n_edges()));
    for (std::size_t e = 0; e < spec.n_edges(); ++e) {
        const auto [to, from] = spec.edges()[e];
        g[static_cast<Eigen::Index>(e)] = -ce.act_d1[static_cast<Eigen::Index>(to)] *
                                          d.delta[static_cast<Eigen::Index>(to)] *
                                          ce.x[static_cast<Eigen::Index>(from)];
    }
    return g;
}

}  // namespace

TEST(BackwardDeltas, MatchNumericalGradientOnRandomNetworks) {
    std::mt19937_64 rng(21);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
        const NetworkSpec spec = random_network(rng, 12);
        const auto ne = static_cast<Eigen::Index>(spec.n_edges());
        const Vec w = random_vec(rng, ne, 1.2);
        const Vec e = random_vec(rng, static_cast<Eigen::Index>(spec.signal_dim()), 1.0);
        const InputSample in = InputSample::constant(e);
        const HalfSquared loss{&spec, random_vec(rng, static_cast<Eigen::Index>(spec.nu()), 1.0)};

        const Vec x = forward_solve(spec, w, in);
        const ConstraintEval ce = eval_derivatives(spec, x, w, in);
        const Vec g = delta_gradient(spec, ce, backward_deltas(spec, ce, loss(x)));

        auto v = [&](const Vec& ww) { return loss(oracle::forward(spec, ww, e)).v; };
        for (Eigen::Index k = 0; k < ne; ++k) {
            const double fd = fd4(v, w, k);
            const double err = std::abs(g[k] - fd) / std::max(std::abs(fd), 1e-4);
            worst = std::max(worst, err);
        }
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(BackwardDeltas, OutputDeltaIsNegativeResidual) {
    const NetworkSpec spec = xor_network();
    std::mt19937_64 rng(22);
    const Vec w = random_vec(rng, 9, 1.4);
    Vec e(2);
    e << 1.0, 0.0;
    const InputSample in = InputSample::constant(e);
    const Vec x = forward_solve(spec, w, in);
    Vec target = Vec::Zero(6);
    target[5] = 1.0;
    const HalfSquared loss{&spec, target};
    const ConstraintEval ce = eval_derivatives(spec, x, w, in);
    const DeltaErrors d = backward_deltas(spec, ce, loss(x));
    EXPECT_DOUBLE_EQ(d.delta[5], -(x[5] - 1.0));
    // Interior units follow delta_i = sum_j sigma'(a_j) w_ji delta_j.
    for (std::size_t i : {3u, 4u}) {
        double expect = 0.0;
        for (std::size_t edge : spec.outgoing(i)) {
            const auto j = static_cast<Eigen::Index>(spec.edges()[edge].to);
            expect += ce.act_d1[j] * w[static_cast<Eigen::Index>(edge)] * d.delta[j];
        }
        EXPECT_NEAR(d.delta[static_cast<Eigen::Index>(i)], expect, 1e-15);
    }
}

TEST(BackwardDeltas, ZeroLossGradientGivesZeroDeltasAndNoUpdate) {
    const NetworkSpec spec = xor_network();
    std::mt19937_64 rng(23);
    const Vec w = random_vec(rng, 9, 1.4);
    const InputSample in = InputSample::constant(random_vec(rng, 2, 1.0));
    const ConstraintEval ce = eval_derivatives(spec, forward_solve(spec, w, in), w, in);
    const DeltaErrors d = backward_deltas(spec, ce, PotentialEval::zero(6));
    EXPECT_EQ(d.delta.norm(), 0.0);
    EXPECT_EQ((first_order_step(spec, ce, w, d, 0.333, 0.1) - w).norm(), 0.0);
    auto zero = [](const Vec& x) { return PotentialEval::zero(static_cast<std::size_t>(x.size())); };
    EXPECT_EQ((sgd_baseline_step(spec, w, in, zero, 0.3) - w).norm(), 0.0);
}

TEST(ReverseMode, MatchesNumericalGradient) {
    std::mt19937_64 rng(24);
    for (int it = 0; it < 50; ++it) {
        const NetworkSpec spec = random_network(rng, 10);
        const auto ne = static_cast<Eigen::Index>(spec.n_edges());
        const Vec w = random_vec(rng, ne, 1.2);
        const Vec e = random_vec(rng, static_cast<Eigen::Index>(spec.signal_dim()), 1.0);
        const HalfSquared loss{&spec, random_vec(rng, static_cast<Eigen::Index>(spec.nu()), 1.0)};
        const Vec g = reverse_mode_gradient(spec, w, InputSample::constant(e), loss);
        auto v = [&](const Vec& ww) { return loss(oracle::forward(spec, ww, e)).v; };
        for (Eigen::Index k = 0; k < ne; ++k) {
            const double fd = fd4(v, w, k);
            EXPECT_LT(std::abs(g[k] - fd) / std::max(std::abs(fd), 1e-4), 1e-8);
        }
    }
}

TEST(FirstOrderStep, EqualsSgdStepWithMatchedRate) {
    std::mt19937_64 rng(25);
    const double dt = 0.1;
    for (int it = 0; it < 100; ++it) {
        const NetworkSpec spec = it % 2 == 0 ? xor_network() : random_network(rng, 12);
        const auto ne = static_cast<Eigen::Index>(spec.n_edges());
        const Vec w = random_vec(rng, ne, std::sqrt(2.0));
        const InputSample in = InputSample::constant(
            random_vec(rng, static_cast<Eigen::Index>(spec.signal_dim()), 1.0));
        const HalfSquared loss{&spec, random_vec(rng, static_cast<Eigen::Index>(spec.nu()), 1.0)};
        const double gamma = std::uniform_real_distribution<double>(0.05, 3.0)(rng);

        const Vec x = forward_solve(spec, w, in);
        const ConstraintEval ce = eval_derivatives(spec, x, w, in);
        const Vec a = first_order_step(spec, ce, w, backward_deltas(spec, ce, loss(x)), gamma, dt);
        const Vec b = sgd_baseline_step(spec, w, in, loss, dt / gamma);
        EXPECT_LT((a - b).lpNorm<Eigen::Infinity>(), 1e-12) << "instance " << it;
    }
}

TEST(FirstOrderStep, DescendsTheLoss) {
    const NetworkSpec spec = xor_network();
    std::mt19937_64 rng(26);
    Vec target = Vec::Zero(6);
    target[5] = -1.0;
    const HalfSquared loss{&spec, target};
    for (int it = 0; it < 20; ++it) {
        const Vec w = random_vec(rng, 9, 1.4);
        const InputSample in = InputSample::constant(random_vec(rng, 2, 1.0));
        const Vec x = forward_solve(spec, w, in);
        const ConstraintEval ce = eval_derivatives(spec, x, w, in);
        const Vec w1 = first_order_step(spec, ce, w, backward_deltas(spec, ce, loss(x)), 1.0, 1e-3);
        EXPECT_LE(loss(forward_solve(spec, w1, in)).v, loss(x).v);
    }
}
