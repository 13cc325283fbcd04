#pragma once

// Online XOR on a circular input trajectory.
//
// The input point travels around a circle through the four corners of the
// unit square; supervision is active only inside small disks around the
// corners. Three learners are compared on it: the second-order model, its
// first-order limit and plain online SGD.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dynamics.hpp"
#include "firstorder.hpp"
#include "netgraph.hpp"
#include "odesolve.hpp"

namespace cogact {

/// e(t) = phi(t) (center + radius (cos Omega t, sin Omega t)) with the
/// start-up ramp phi(t) = (1 + tanh((t - a) / b)) / 2.
struct TrajectorySignal {
    double u0 = 0.5;
    double v0 = 0.5;
    double radius = std::numbers::sqrt2 / 2.0;
    double omega = 0.25;
    double a = 6.0;
    double b = 0.9;

    InputSample operator()(double t) const {
        const double th = std::tanh((t - a) / b);
        const double sech2 = 1.0 - th * th;
        const double phi = 0.5 * (1.0 + th);
        const double dphi = 0.5 * sech2 / b;
        const double ddphi = -th * sech2 / (b * b);

        const double c = std::cos(omega * t);
        const double s = std::sin(omega * t);
        const std::array<double, 2> p{u0 + radius * c, v0 + radius * s};
        const std::array<double, 2> dp{-radius * omega * s, radius * omega * c};
        const std::array<double, 2> ddp{-radius * omega * omega * c, -radius * omega * omega * s};

        InputSample in{Vec(2), Vec(2), Vec(2)};
        for (Eigen::Index i = 0; i < 2; ++i) {
            const auto k = static_cast<std::size_t>(i);
            in.e[i] = phi * p[k];
            in.edot[i] = dphi * p[k] + phi * dp[k];
            in.eddot[i] = ddphi * p[k] + 2.0 * dphi * dp[k] + phi * ddp[k];
        }
        return in;
    }
};

inline InputSample eval_signal(const TrajectorySignal& sig, double t) { return sig(t); }

/// Supervision disks around the corners of the unit square, XOR targets in
/// {-1, +1}.
struct SupervisionSpec {
    std::array<std::array<double, 2>, 4> vertices{{{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}}};
    std::array<double, 4> targets{-1.0, 1.0, 1.0, -1.0};
    double region_radius = 0.2;

    /// Index of the nearest vertex if the point lies inside its disk.
    std::optional<std::size_t> region_of(double e0, double e1) const {
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            const double d0 = e0 - vertices[v][0];
            const double d1 = e1 - vertices[v][1];
            const double d2 = d0 * d0 + d1 * d1;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = v;
            }
        }
        if (best_d2 < region_radius * region_radius) {
            return best;
        }
        return std::nullopt;
    }
};

/// Squared error on the output unit while inside a supervision disk, zero
/// elsewhere; both V and V_x are multiplied by `scale`.
inline PotentialEval eval_potential(const SupervisionSpec& sup, const Vec& e, const Vec& x,
                                    std::size_t out_unit, double scale = 1.0) {
    PotentialEval pot{0.0, Vec::Zero(x.size())};
    if (const auto v = sup.region_of(e[0], e[1])) {
        const auto o = static_cast<Eigen::Index>(out_unit);
        const double diff = x[o] - sup.targets[*v];
        pot.v = scale * diff * diff;
        pot.v_x[o] = scale * 2.0 * diff;
    }
    return pot;
}

/// Same, with the (1 - e^{-theta t}) ramp when `ramp` is set.
inline PotentialEval eval_potential(const SupervisionSpec& sup, double t, const Vec& e,
                                    const Vec& x, std::size_t out_unit, bool ramp,
                                    double theta) {
    const double scale = ramp ? -std::expm1(-theta * t) : 1.0;
    return eval_potential(sup, e, x, out_unit, scale);
}

/// Two inputs, two tanh hidden units, one tanh output, bias on every neuron.
inline NetworkSpec xor_network() { return NetworkSpec::mlp(2, {2}, 1, true); }

struct Metrics {
    double acc = 0.0;
    double loss = 0.0;
    double acc2 = 0.0;
    double loss2 = 0.0;
    double g_norm_final = 0.0;
};

namespace detail {

inline bool same_sign(double out, double target) {
    return (target > 0.0 && out > 0.0) || (target < 0.0 && out < 0.0);
}

inline double network_output(const NetworkSpec& spec, const Vec& w, double e0, double e1) {
    Vec e(2);
    e << e0, e1;
    const Vec x = forward_solve(spec, w, InputSample::constant(std::move(e)));
    return x[static_cast<Eigen::Index>(spec.outputs().front())];
}

}  // namespace detail

/// Score frozen weights: Acc/Loss on the four corners, Acc2/Loss2 on points
/// drawn uniformly from the union of the supervision disks, and the
/// Euclidean constraint residual of the final trajectory point.
template <class Rng>
Metrics eval_metrics(const NetworkSpec& spec, const SupervisionSpec& sup, const Vec& x_final,
                     const Vec& w_final, const InputSample& input_final,
                     std::size_t n_region_samples, Rng& rng) {
    Metrics m;
    for (std::size_t v = 0; v < sup.vertices.size(); ++v) {
        const double out = detail::network_output(spec, w_final, sup.vertices[v][0], sup.vertices[v][1]);
        m.acc += detail::same_sign(out, sup.targets[v]) ? 1.0 : 0.0;
        m.loss += (out - sup.targets[v]) * (out - sup.targets[v]);
    }
    m.acc /= static_cast<double>(sup.vertices.size());
    m.loss /= static_cast<double>(sup.vertices.size());

    if (n_region_samples > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, sup.vertices.size() - 1);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t s = 0; s < n_region_samples; ++s) {
            const std::size_t v = pick(rng);
            const double r = sup.region_radius * std::sqrt(unit(rng));
            const double ang = 2.0 * std::numbers::pi * unit(rng);
            const double out = detail::network_output(spec, w_final, sup.vertices[v][0] + r * std::cos(ang),
                                                      sup.vertices[v][1] + r * std::sin(ang));
            m.acc2 += detail::same_sign(out, sup.targets[v]) ? 1.0 : 0.0;
            m.loss2 += (out - sup.targets[v]) * (out - sup.targets[v]);
        }
        m.acc2 /= static_cast<double>(n_region_samples);
        m.loss2 /= static_cast<double>(n_region_samples);
    }

    m.g_norm_final = eval_constraints(spec, x_final, w_final, input_final).norm();
    return m;
}

enum class Model { SecondOrder, FirstOrder, Baseline };

inline const char* to_string(Model m) noexcept {
    switch (m) {
    case Model::SecondOrder: return "second";
    case Model::FirstOrder: return "first";
    case Model::Baseline: return "baseline";
    }
    return "?";
}

struct ExperimentSetup {
    Model model = Model::SecondOrder;
    DynamicsParams dynamics;
    IntegratorConfig integrator;
    /// Pick AdaptiveRK / TR-BDF2 from theta; otherwise use integrator.method.
    bool auto_method = true;
    double stiff_threshold = 50.0;
    /// Baseline learning rate; defaults to dt / (m_w theta).
    std::optional<double> eta;
    TrajectorySignal signal;
    SupervisionSpec supervision;
    std::size_t n_seeds = 10;
    std::uint64_t base_seed = 0;
    double init_range = std::numbers::sqrt2;
    std::size_t n_region_samples = 256;
    double tol_gtau = 1e-4;
    /// Worker threads for independent seeds; 0 means hardware concurrency.
    unsigned threads = 0;

    double effective_eta() const {
        return eta.value_or(integrator.dt_sample / dynamics.gamma());
    }

    Method effective_method() const {
        if (model != Model::SecondOrder) {
            return Method::ExplicitEuler;
        }
        return auto_method ? cogact::auto_method(dynamics.theta, stiff_threshold)
                           : integrator.method;
    }

    void validate() const {
        dynamics.validate();
        integrator.validate();
        if (model == Model::Baseline && !(effective_eta() > 0.0)) {
            throw std::invalid_argument("eta must be positive");
        }
        if (!(init_range > 0.0)) {
            throw std::invalid_argument("init_range must be positive");
        }
        if (n_seeds == 0) {
            throw std::invalid_argument("n_seeds must be at least 1");
        }
    }
};

/// Time series of one run on the sample grid.
struct RunPath {
    std::vector<double> times;
    std::vector<Vec> weights;
    std::vector<Vec> neurons;
    std::vector<double> g_inf;
};

struct RunResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    Metrics metrics;
    Vec w_initial;
    Vec w_final;
    RunPath path;
    double wall_time = 0.0;
    double max_multiplier_residual = 0.0;
    double gtau0 = 0.0;
    std::size_t n_steps = 0;
    std::size_t n_rejected = 0;
    std::size_t n_evals = 0;
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and population standard deviation across completed runs.
struct Summary {
    Stat acc, loss, acc2, loss2, g_norm_final;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    Summary summary;
};

/// U(-range, range) per edge from a seeded stream.
inline Vec sample_weights(std::size_t n_edges, std::uint64_t seed, double range) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-range, range);
    Vec w(static_cast<Eigen::Index>(n_edges));
    for (Eigen::Index e = 0; e < w.size(); ++e) {
        w[e] = dist(rng);
    }
    return w;
}

/// Seed of the Acc2/Loss2 sampling stream for a run.
inline std::uint64_t region_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

/// Run one learner from explicit initial weights. Throws on integration
/// failure.
inline RunResult run_from_weights(const ExperimentSetup& setup, const NetworkSpec& spec,
                                  std::uint64_t seed, const Vec& w0) {
    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t out = spec.outputs().front();
    const DynamicsParams& dp = setup.dynamics;
    const SupervisionSpec& sup = setup.supervision;
    const TrajectorySignal& sig = setup.signal;

    RunResult res;
    res.seed = seed;
    res.w_initial = w0;

    IntegratorConfig cfg = setup.integrator;
    cfg.method = setup.effective_method();

    if (setup.model == Model::SecondOrder) {
        auto potential = [&sup, out, dp](double t, const InputSample& in, const Vec& x) {
            return eval_potential(sup, t, in.e, x, out, dp.ramp_potential, dp.theta);
        };
        SecondOrderField field(spec, dp, sig, potential);
        const auto ic = make_initial_conditions(spec, w0, sig, setup.tol_gtau);
        res.gtau0 = ic.gtau_residual;
        auto monitor = [&field](double t, const Vec& y) { return field.diagnose(t, y); };
        const Trajectory tr = integrate(field, ic.y0, cfg, monitor);
        const StateLayout& lay = field.layout();
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
            res.path.times.push_back(tr.times[k]);
            res.path.weights.emplace_back(lay.w(tr.states[k]));
            res.path.neurons.emplace_back(lay.x(tr.states[k]));
            res.path.g_inf.push_back(tr.diagnostics[k].g_inf);
        }
        res.max_multiplier_residual = field.max_residual();
        res.n_steps = tr.n_steps;
        res.n_rejected = tr.n_rejected;
        res.n_evals = tr.n_evals;
    } else {
        Trajectory tr;
        if (setup.model == Model::FirstOrder) {
            const double gamma = dp.gamma();
            auto step = [&](double t, const Vec& w, double dt) {
                const InputSample in = sig(t);
                const Vec x = forward_solve(spec, w, in);
                const PotentialEval pot =
                    eval_potential(sup, t, in.e, x, out, dp.ramp_potential, dp.theta);
                const ConstraintEval ce = eval_derivatives(spec, x, w, in);
                return first_order_step(spec, ce, w, backward_deltas(spec, ce, pot), gamma, dt);
            };
            tr = integrate_euler_first_order(step, w0, cfg);
        } else {
            const double eta = setup.effective_eta();
            cfg.euler_substeps = 1;
            auto step = [&](double t, const Vec& w, double) {
                const InputSample in = sig(t);
                return sgd_baseline_step(
                    spec, w, in, [&](const Vec& x) { return eval_potential(sup, in.e, x, out); },
                    eta);
            };
            tr = integrate_euler_first_order(step, w0, cfg);
        }
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
            const InputSample in = sig(tr.times[k]);
            res.path.times.push_back(tr.times[k]);
            res.path.weights.push_back(tr.states[k]);
            res.path.neurons.push_back(forward_solve(spec, tr.states[k], in));
            res.path.g_inf.push_back(0.0);
        }
        res.n_steps = tr.n_steps;
        res.n_evals = tr.n_evals;
    }

    res.w_final = res.path.weights.back();
    std::mt19937_64 rng(region_seed(seed));
    res.metrics = eval_metrics(spec, sup, res.path.neurons.back(), res.w_final,
                               sig(res.path.times.back()), setup.n_region_samples, rng);
    res.ok = true;
    res.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

/// One seeded run; integration failures are captured in the result.
inline RunResult run_seed(const ExperimentSetup& setup, const NetworkSpec& spec,
                          std::uint64_t seed) {
    const Vec w0 = sample_weights(spec.n_edges(), seed, setup.init_range);
    try {
        return run_from_weights(setup, spec, seed, w0);
    } catch (const std::runtime_error& ex) {
        RunResult res;
        res.seed = seed;
        res.w_initial = w0;
        res.error = ex.what();
        return res;
    }
}

inline Stat mean_std(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) {
        return s;
    }
    for (double x : v) {
        s.mean += x;
    }
    s.mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) {
        var += (x - s.mean) * (x - s.mean);
    }
    s.std = std::sqrt(var / static_cast<double>(v.size()));
    return s;
}

inline Summary summarize(const std::vector<RunResult>& runs) {
    std::vector<double> acc, loss, acc2, loss2, g;
    Summary s;
    for (const auto& r : runs) {
        if (!r.ok) {
            ++s.n_failed;
            continue;
        }
        ++s.n_ok;
        acc.push_back(r.metrics.acc);
        loss.push_back(r.metrics.loss);
        acc2.push_back(r.metrics.acc2);
        loss2.push_back(r.metrics.loss2);
        g.push_back(r.metrics.g_norm_final);
    }
    s.acc = mean_std(acc);
    s.loss = mean_std(loss);
    s.acc2 = mean_std(acc2);
    s.loss2 = mean_std(loss2);
    s.g_norm_final = mean_std(g);
    return s;
}

/// All seeds base_seed .. base_seed + n_seeds - 1, run on a small thread pool.
/// Results are ordered by seed regardless of scheduling.
inline ExperimentResult run_experiment(const ExperimentSetup& setup) {
    setup.validate();
    const NetworkSpec spec = xor_network();
    ExperimentResult out;
    out.runs.resize(setup.n_seeds);

    unsigned n_threads = setup.threads ? setup.threads : std::thread::hardware_concurrency();
    n_threads = std::clamp<unsigned>(n_threads, 1, static_cast<unsigned>(setup.n_seeds));

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < setup.n_seeds; i = next++) {
            out.runs[i] = run_seed(setup, spec, setup.base_seed + i);
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < n_threads; ++k) {
            pool.emplace_back(worker);
        }
    }
    out.summary = summarize(out.runs);
    return out;
}

}  // namespace cogact
