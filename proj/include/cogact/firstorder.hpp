#pragma once

// First-order (small mass, strong damping) limit of the learning dynamics
// and the plain online-SGD baseline it reduces to.

#include <cstddef>

#include "dynamics.hpp"
#include "netgraph.hpp"

namespace cogact {

/// Limit multipliers: T delta = -V_x with T_ij = dG^j/dx^i.
struct DeltaErrors {
    Vec delta;
};

/// Back-substitution on the unit upper-triangular T, starting from the last
/// unit. Rows of input-like units are solved too but never used.
inline DeltaErrors backward_deltas(const NetworkSpec& spec, const ConstraintEval& ce,
                                   const PotentialEval& pot) {
    const auto nu = static_cast<Eigen::Index>(spec.nu());
    detail::require_size(pot.v_x, spec.nu(), "v_x");
    Vec delta(nu);
    for (Eigen::Index i = nu - 1; i >= 0; --i) {
        double acc = -pot.v_x[i];
        for (Eigen::Index j = i + 1; j < nu; ++j) {
            acc -= ce.jac_xi(i, j) * delta[j];
        }
        delta[i] = acc;
    }
    return {std::move(delta)};
}

/// One explicit Euler step of w_dot = -(1/gamma) G_m delta, i.e.
/// w_ij += (dt/gamma) sigma'(a_i) delta_i x^j.
inline Vec first_order_step(const NetworkSpec& spec, const ConstraintEval& ce, const Vec& w,
                            const DeltaErrors& delta, double gamma, double dt) {
    detail::require_size(w, spec.n_edges(), "w");
    const double rate = dt / gamma;
    Vec next = w;
    for (std::size_t e = 0; e < spec.n_edges(); ++e) {
        const auto [to, from] = spec.edges()[e];
        const auto i = static_cast<Eigen::Index>(to);
        next[static_cast<Eigen::Index>(e)] +=
            rate * ce.act_d1[i] * delta.delta[i] * ce.x[static_cast<Eigen::Index>(from)];
    }
    return next;
}

/// Gradient of V(forward_solve(w)) by reverse accumulation. Shares no code
/// with the constraint Jacobians; used as the cross-check for the delta path.
/// LossGrad maps the forward-pass x to a PotentialEval.
template <class LossGrad>
Vec reverse_mode_gradient(const NetworkSpec& spec, const Vec& w, const InputSample& in,
                          LossGrad&& loss) {
    const auto nu = static_cast<Eigen::Index>(spec.nu());
    Vec x(nu);
    Vec d1 = Vec::Zero(nu);
    for (std::size_t j = 0; j < spec.omega(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        x[jj] = spec.is_bias(j) ? 1.0 : in.e[jj];
    }
    for (std::size_t j = spec.omega(); j < spec.nu(); ++j) {
        double a = 0.0;
        for (std::size_t e : spec.incoming(j)) {
            a += w[static_cast<Eigen::Index>(e)] *
                 x[static_cast<Eigen::Index>(spec.edges()[e].from)];
        }
        const auto s = activate(spec.activation(), a);
        x[static_cast<Eigen::Index>(j)] = s.value;
        d1[static_cast<Eigen::Index>(j)] = s.d1;
    }

    const PotentialEval pot = loss(x);
    Vec adj = pot.v_x;
    Vec grad = Vec::Zero(static_cast<Eigen::Index>(spec.n_edges()));
    for (std::size_t j = spec.nu(); j-- > spec.omega();) {
        const double abar = adj[static_cast<Eigen::Index>(j)] * d1[static_cast<Eigen::Index>(j)];
        for (std::size_t e : spec.incoming(j)) {
            const auto from = static_cast<Eigen::Index>(spec.edges()[e].from);
            grad[static_cast<Eigen::Index>(e)] += abar * x[from];
            adj[from] += abar * w[static_cast<Eigen::Index>(e)];
        }
    }
    return grad;
}

/// w <- w - eta grad_w V, gradient by reverse accumulation.
template <class LossGrad>
Vec sgd_baseline_step(const NetworkSpec& spec, const Vec& w, const InputSample& in,
                      LossGrad&& loss, double eta) {
    return w - eta * reverse_mode_gradient(spec, w, in, std::forward<LossGrad>(loss));
}

}  // namespace cogact
