#pragma once

// Finite-difference self checks for the constraint derivatives and the
// backward delta recursion, on randomly generated networks.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "firstorder.hpp"
#include "netgraph.hpp"

namespace cogact {

/// Random DAG with nu units, a few input-like units (optionally one bias)
/// and each admissible edge present with probability `density`.
template <class Rng>
NetworkSpec random_network(Rng& rng, std::size_t max_nu = 12, double density = 0.6) {
    std::uniform_int_distribution<std::size_t> n_in(1, 3);
    std::bernoulli_distribution coin(0.5);
    std::bernoulli_distribution keep(density);
    const std::size_t inputs = n_in(rng);
    const bool bias = coin(rng);
    const std::size_t omega = inputs + (bias ? 1 : 0);
    std::uniform_int_distribution<std::size_t> n_units(omega + 1, std::max(omega + 1, max_nu));
    const std::size_t nu = n_units(rng);

    std::vector<Edge> edges;
    for (std::size_t to = omega; to < nu; ++to) {
        bool any = false;
        for (std::size_t from = 0; from < to; ++from) {
            if (keep(rng)) {
                edges.push_back({to, from});
                any = true;
            }
        }
        if (!any) {
            edges.push_back({to, to - 1});
        }
    }
    return NetworkSpec(nu, omega, std::move(edges), bias);
}

template <class Rng>
Vec random_vec(Rng& rng, Eigen::Index n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

template <class Rng>
InputSample random_input(Rng& rng, const NetworkSpec& spec) {
    const auto d = static_cast<Eigen::Index>(spec.signal_dim());
    return {random_vec(rng, d, 1.0), random_vec(rng, d, 1.0), random_vec(rng, d, 1.0)};
}

struct SelfCheck {
    std::string name;
    bool ok = true;
    double worst = 0.0;
};

namespace detail {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace detail

/// Central differences of G and of its Jacobians against the analytic
/// blocks, at `n` random states.
inline std::vector<SelfCheck> run_selftest(std::uint64_t seed = 1, std::size_t n = 50) {
    std::mt19937_64 rng(seed);
    SelfCheck jac{"constraint jacobians vs finite differences"};
    SelfCheck hess{"constraint hessians vs finite differences"};
    SelfCheck prop{"G_xi unit upper triangular"};
    SelfCheck back{"backward deltas vs numerical gradient"};
    const double h = 1e-5;
    const double tol = 1e-6;

    for (std::size_t it = 0; it < n; ++it) {
        const NetworkSpec spec = random_network(rng);
        const auto nu = static_cast<Eigen::Index>(spec.nu());
        const auto ne = static_cast<Eigen::Index>(spec.n_edges());
        const InputSample in = random_input(rng, spec);
        const Vec x = random_vec(rng, nu, 1.0);
        const Vec w = random_vec(rng, ne, 1.0);
        const ConstraintEval ce = eval_derivatives(spec, x, w, in);
        prop.ok = prop.ok && check_full_rank(ce);

        for (Eigen::Index i = 0; i < nu; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const Vec d = (eval_constraints(spec, xp, w, in) - eval_constraints(spec, xm, w, in)) /
                          (2 * h);
            const ConstraintEval cp = eval_derivatives(spec, xp, w, in);
            const ConstraintEval cm = eval_derivatives(spec, xm, w, in);
            for (Eigen::Index j = 0; j < nu; ++j) {
                jac.worst = std::max(jac.worst, detail::rel_err(d[j], ce.jac_xi(i, j)));
                const Mat hxx = hessian_xixi(spec, ce, static_cast<std::size_t>(j));
                const Mat hxm = hessian_xim(spec, ce, static_cast<std::size_t>(j));
                for (Eigen::Index k = 0; k < nu; ++k) {
                    const double fd = (cp.jac_xi(k, j) - cm.jac_xi(k, j)) / (2 * h);
                    hess.worst = std::max(hess.worst, detail::rel_err(fd, hxx(k, i)));
                }
                for (Eigen::Index e = 0; e < ne; ++e) {
                    const double fd = (cp.jac_m(e, j) - cm.jac_m(e, j)) / (2 * h);
                    hess.worst = std::max(hess.worst, detail::rel_err(fd, hxm(i, e)));
                }
            }
        }
        for (Eigen::Index e = 0; e < ne; ++e) {
            Vec wp = w, wm = w;
            wp[e] += h;
            wm[e] -= h;
            const Vec d = (eval_constraints(spec, x, wp, in) - eval_constraints(spec, x, wm, in)) /
                          (2 * h);
            const ConstraintEval cp = eval_derivatives(spec, x, wp, in);
            const ConstraintEval cm = eval_derivatives(spec, x, wm, in);
            for (Eigen::Index j = 0; j < nu; ++j) {
                jac.worst = std::max(jac.worst, detail::rel_err(d[j], ce.jac_m(e, j)));
                const Mat hmm = hessian_mm(spec, ce, static_cast<std::size_t>(j));
                for (Eigen::Index f = 0; f < ne; ++f) {
                    const double fd = (cp.jac_m(f, j) - cm.jac_m(f, j)) / (2 * h);
                    hess.worst = std::max(hess.worst, detail::rel_err(fd, hmm(f, e)));
                }
            }
        }

        // V = 0.5 |x_out - target|^2 summed over outputs, at the forward solution.
        const Vec target = random_vec(rng, nu, 1.0);
        auto loss = [&](const Vec& xs) {
            PotentialEval p = PotentialEval::zero(spec.nu());
            for (std::size_t o : spec.outputs()) {
                const auto oo = static_cast<Eigen::Index>(o);
                const double r = xs[oo] - target[oo];
                p.v += 0.5 * r * r;
                p.v_x[oo] = r;
            }
            return p;
        };
        const InputSample cin = InputSample::constant(in.e);
        const Vec xf = forward_solve(spec, w, cin);
        const ConstraintEval cf = eval_derivatives(spec, xf, w, cin);
        const DeltaErrors del = backward_deltas(spec, cf, loss(xf));
        for (Eigen::Index e = 0; e < ne; ++e) {
            const auto [to, from] = spec.edges()[static_cast<std::size_t>(e)];
            const double analytic = -cf.act_d1[static_cast<Eigen::Index>(to)] *
                                    del.delta[static_cast<Eigen::Index>(to)] *
                                    xf[static_cast<Eigen::Index>(from)];
            Vec wp = w, wm = w;
            wp[e] += h;
            wm[e] -= h;
            const double fd = (loss(forward_solve(spec, wp, cin)).v -
                               loss(forward_solve(spec, wm, cin)).v) / (2 * h);
            back.worst = std::max(back.worst, detail::rel_err(fd, analytic));
        }
    }
    jac.ok = jac.worst < tol;
    hess.ok = hess.worst < tol;
    back.ok = back.worst < tol;
    return {jac, hess, prop, back};
}

}  // namespace cogact
