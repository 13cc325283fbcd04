#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "cogact/xorbench.hpp"

using namespace cogact;

namespace {

// A hand-built XOR solver: h1 fires for "at least one", h2 for "both".
Vec xor_solution(double k = 5.0) {
    Vec w(9);
    w << k, k, -0.5 * k, k, k, -1.5 * k, k, -k, -k;
    return w;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Signal, RampMidpoint) {
    const TrajectorySignal sig;
    const InputSample in = sig(6.0);
    EXPECT_DOUBLE_EQ(in.e[0], 0.5 * (0.5 + sig.radius * std::cos(1.5)));
    EXPECT_DOUBLE_EQ(in.e[1], 0.5 * (0.5 + sig.radius * std::sin(1.5)));
}

TEST(Signal, StartsNearlyAtRest) {
    const TrajectorySignal sig;
    const InputSample in = sig(0.0);
    // phi(0) = 1 / (1 + exp(2 a / b)).
    const double phi0 = 1.0 / (1.0 + std::exp(2.0 * sig.a / sig.b));
    EXPECT_NEAR(in.e[0], phi0 * (sig.u0 + sig.radius), 1e-10 * in.e[0]);
    EXPECT_NEAR(in.e[1], phi0 * sig.v0, 1e-10 * in.e[1]);
    EXPECT_LT(in.e.lpNorm<Eigen::Infinity>(), 2e-6);
    EXPECT_LT(in.edot.norm(), 1e-4);
}

TEST(Signal, DerivativesMatchFiniteDifferences) {
    const TrajectorySignal sig;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ut(0.0, 150.0);
    const double h = 1e-4;
    for (int it = 0; it < 50; ++it) {
        const double t = ut(rng);
        const InputSample p = sig(t + h), m = sig(t - h), c = sig(t);
        const Vec d1 = (p.e - m.e) / (2 * h);
        const Vec d2 = (p.edot - m.edot) / (2 * h);
        EXPECT_LT((c.edot - d1).lpNorm<Eigen::Infinity>(), 1e-7) << "t = " << t;
        EXPECT_LT((c.eddot - d2).lpNorm<Eigen::Infinity>(), 1e-7) << "t = " << t;
    }
}

TEST(Signal, CirclePassesThroughTheSupervisionDisks) {
    const TrajectorySignal sig;
    const SupervisionSpec sup;
    std::array<bool, 4> visited{};
    for (double t = 20.0; t < 20.0 + 2.0 * std::numbers::pi / sig.omega; t += 0.1) {
        const InputSample in = sig(t);
        if (const auto v = sup.region_of(in.e[0], in.e[1])) visited[*v] = true;
    }
    for (bool v : visited) EXPECT_TRUE(v);
}

TEST(Potential, OutsideRegionsIsZero) {
    const SupervisionSpec sup;
    Vec e(2);
    e << 0.5, 0.5;  // >= 0.7 from every corner
    const Vec x = Vec::Constant(6, 0.3);
    const PotentialEval p = eval_potential(sup, e, x, 5);
    EXPECT_EQ(p.v, 0.0);
    EXPECT_EQ(p.v_x.norm(), 0.0);
    e << 0.3, 0.0;  // exactly 0.3 from (0,0)
    EXPECT_EQ(eval_potential(sup, e, x, 5).v, 0.0);
}

TEST(Potential, CornerCases) {
    const SupervisionSpec sup;
    Vec e(2);
    Vec x = Vec::Zero(6);
    e << 1.0, 1.0;
    x[5] = -1.0;
    EXPECT_EQ(eval_potential(sup, e, x, 5).v, 0.0);

    e << 0.0, 1.0;
    x[5] = 0.0;
    const PotentialEval p = eval_potential(sup, e, x, 5);
    EXPECT_DOUBLE_EQ(p.v, 1.0);
    EXPECT_DOUBLE_EQ(p.v_x[5], -2.0);
    EXPECT_EQ(p.v_x.head(5).norm(), 0.0);
}

TEST(Potential, RampScalesValueAndGradient) {
    const SupervisionSpec sup;
    Vec e(2);
    e << 0.05, 0.95;
    Vec x = Vec::Zero(6);
    x[5] = 0.2;
    const PotentialEval raw = eval_potential(sup, 0.01, e, x, 5, false, 33.3);
    const PotentialEval ramped = eval_potential(sup, 0.01, e, x, 5, true, 33.3);
    const double s = 1.0 - std::exp(-0.333);
    EXPECT_NEAR(ramped.v, s * raw.v, 1e-15);
    EXPECT_NEAR(ramped.v_x[5], s * raw.v_x[5], 1e-15);
    EXPECT_EQ(eval_potential(sup, 0.0, e, x, 5, true, 33.3).v, 0.0);
}

TEST(Supervision, InputSwapSymmetry) {
    const SupervisionSpec sup;
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> u(-0.3, 1.3);
    for (int it = 0; it < 2000; ++it) {
        const double a = u(rng), b = u(rng);
        const auto r1 = sup.region_of(a, b);
        const auto r2 = sup.region_of(b, a);
        ASSERT_EQ(r1.has_value(), r2.has_value());
        if (r1) {
            EXPECT_EQ(sup.targets[*r1], sup.targets[*r2]);
        }
    }
}

TEST(Metrics, ExactSolverScoresPerfectly) {
    const NetworkSpec spec = xor_network();
    const SupervisionSpec sup;
    const Vec w = xor_solution(8.0);
    const InputSample in = InputSample::constant(Vec::Zero(2));
    std::mt19937_64 rng(1);
    const Metrics m = eval_metrics(spec, sup, forward_solve(spec, w, in), w, in, 256, rng);
    EXPECT_EQ(m.acc, 1.0);
    EXPECT_EQ(m.acc2, 1.0);
    EXPECT_LT(m.loss, 0.05);
    EXPECT_LT(m.g_norm_final, 1e-15);
}

TEST(Metrics, ConstantOutputGetsHalfAndTiesCountAsWrong) {
    const NetworkSpec spec = xor_network();
    const SupervisionSpec sup;
    const InputSample in = InputSample::constant(Vec::Zero(2));
    std::mt19937_64 rng(2);
    Vec w = Vec::Zero(9);
    w[8] = 0.3;  // output bias only
    Metrics m = eval_metrics(spec, sup, forward_solve(spec, w, in), w, in, 64, rng);
    EXPECT_EQ(m.acc, 0.5);
    w.setZero();
    m = eval_metrics(spec, sup, forward_solve(spec, w, in), w, in, 64, rng);
    EXPECT_EQ(m.acc, 0.0);
    EXPECT_DOUBLE_EQ(m.loss, 1.0);
}

TEST(Metrics, ConstraintNormUsesTheGivenState) {
    const NetworkSpec spec = xor_network();
    const SupervisionSpec sup;
    const Vec w = xor_solution();
    const InputSample in = InputSample::constant(Vec::Zero(2));
    Vec x = forward_solve(spec, w, in);
    x[4] += 0.03;
    x[5] -= 0.04;
    std::mt19937_64 rng(3);
    const Metrics m = eval_metrics(spec, sup, x, w, in, 0, rng);
    const Vec g = eval_constraints(spec, x, w, in);
    EXPECT_DOUBLE_EQ(m.g_norm_final, g.norm());
    EXPECT_EQ(m.acc, 1.0);  // vertices use a fresh forward pass
}

TEST(Weights, SeededUniformSampling) {
    const Vec a = sample_weights(9, 7, std::sqrt(2.0));
    const Vec b = sample_weights(9, 7, std::sqrt(2.0));
    const Vec c = sample_weights(9, 8, std::sqrt(2.0));
    EXPECT_EQ((a - b).norm(), 0.0);
    EXPECT_GT((a - c).norm(), 0.0);
    EXPECT_LE(a.lpNorm<Eigen::Infinity>(), std::sqrt(2.0));
}

TEST(Setup, DerivedLearningRateAndMethod) {
    ExperimentSetup s;
    s.model = Model::Baseline;
    EXPECT_NEAR(s.effective_eta(), 0.1 / (1e-2 * 33.3), 1e-15);
    s.eta = 0.8;
    EXPECT_EQ(s.effective_eta(), 0.8);
    EXPECT_EQ(s.effective_method(), Method::ExplicitEuler);
    s.model = Model::SecondOrder;
    EXPECT_EQ(s.effective_method(), Method::AdaptiveRK);
    s.dynamics.theta = 333.3;
    EXPECT_EQ(s.effective_method(), Method::ImplicitTRBDF2);
    s.auto_method = false;
    s.integrator.method = Method::AdaptiveRK;
    EXPECT_EQ(s.effective_method(), Method::AdaptiveRK);
}

TEST(Experiment, FirstOrderReproducesSgdOnAShortRun) {
    ExperimentSetup s;
    s.integrator.t_max = 40.0;
    s.n_seeds = 3;
    s.model = Model::FirstOrder;
    const ExperimentResult fo = run_experiment(s);
    s.model = Model::Baseline;
    const ExperimentResult sgd = run_experiment(s);
    for (std::size_t i = 0; i < fo.runs.size(); ++i) {
        ASSERT_TRUE(fo.runs[i].ok && sgd.runs[i].ok);
        double dev = 0.0;
        for (std::size_t k = 0; k < fo.runs[i].path.weights.size(); ++k) {
            dev = std::max(dev, (fo.runs[i].path.weights[k] - sgd.runs[i].path.weights[k])
                                    .lpNorm<Eigen::Infinity>());
        }
        EXPECT_LT(dev, 1e-10);
        EXPECT_GT((fo.runs[i].w_final - fo.runs[i].w_initial).norm(), 1e-3);
    }
}

TEST(Experiment, DeterministicAcrossRepeatsAndThreadCounts) {
    ExperimentSetup s;
    s.integrator.t_max = 30.0;
    s.n_seeds = 4;
    s.threads = 1;
    const ExperimentResult a = run_experiment(s);
    s.threads = 3;
    const ExperimentResult b = run_experiment(s);
    ASSERT_EQ(a.runs.size(), b.runs.size());
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        EXPECT_EQ(a.runs[i].seed, b.runs[i].seed);
        EXPECT_TRUE(same_bits(a.runs[i].metrics.acc2, b.runs[i].metrics.acc2));
        EXPECT_TRUE(same_bits(a.runs[i].metrics.loss, b.runs[i].metrics.loss));
        EXPECT_TRUE(same_bits(a.runs[i].metrics.g_norm_final, b.runs[i].metrics.g_norm_final));
        EXPECT_EQ((a.runs[i].w_final - b.runs[i].w_final).norm(), 0.0);
    }
}

TEST(Experiment, SecondOrderKeepsConstraintsAndMultipliersTight) {
    ExperimentSetup s;
    s.integrator.t_max = 40.0;
    s.n_seeds = 1;
    const RunResult r = run_seed(s, xor_network(), 0);
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_LT(r.gtau0, 1e-4);
    EXPECT_LE(r.max_multiplier_residual, 1e-10);
    for (double g : r.path.g_inf) EXPECT_LT(g, 0.05);
    for (double acc : {r.metrics.acc}) EXPECT_EQ(std::fmod(acc * 4.0, 1.0), 0.0);
    EXPECT_GE(r.metrics.acc2, 0.0);
    EXPECT_LE(r.metrics.acc2, 1.0);
}

TEST(Experiment, SummaryUsesPopulationStd) {
    std::vector<RunResult> runs(3);
    runs[0].ok = runs[1].ok = true;
    runs[0].metrics.acc = 1.0;
    runs[1].metrics.acc = 0.5;
    runs[2].ok = false;
    const Summary s = summarize(runs);
    EXPECT_EQ(s.n_ok, 2u);
    EXPECT_EQ(s.n_failed, 1u);
    EXPECT_DOUBLE_EQ(s.acc.mean, 0.75);
    EXPECT_DOUBLE_EQ(s.acc.std, 0.25);
}
