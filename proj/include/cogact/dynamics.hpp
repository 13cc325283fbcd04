#pragma once

// Second-order learning dynamics on the constraint manifold.
//
// Coordinates are the neuron outputs x and the edge weights w. With the
// exponential weighing e^{theta t} divided out and the multipliers rescaled
// as mu = e^{-theta t} lambda, the equations of motion read
//
//   xdd = -theta xd - G_xi mu / m_x + f_x / m_x
//   wdd = -theta wd - G_m  mu / m_w
//
// where f_x = -V_x is the (rescaled) potential force. mu solves the Gram
// system obtained by requiring the constraints to hold to second order.
//
// The flat ODE state is laid out as (x, xd, w, wd).

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "netgraph.hpp"

namespace cogact {

/// The Gram matrix of the multiplier system failed to factor.
struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DynamicsParams {
    double m_x = 1e-4;
    double m_w = 1e-2;
    double theta = 33.3;
    /// Scale the potential by (1 - e^{-theta t}) so that the accelerations
    /// vanish at t = 0.
    bool ramp_potential = false;

    void validate() const {
        if (!(m_x > 0.0) || !std::isfinite(m_x)) {
            throw std::invalid_argument("m_x must be positive");
        }
        if (!(m_w > 0.0) || !std::isfinite(m_w)) {
            throw std::invalid_argument("m_w must be positive");
        }
        if (!std::isfinite(theta) || theta < 0.0) {
            throw std::invalid_argument("theta must be finite and non-negative");
        }
    }

    double ramp(double t) const noexcept {
        return ramp_potential ? -std::expm1(-theta * t) : 1.0;
    }

    /// gamma = m_w theta, the first-order time constant.
    double gamma() const noexcept { return m_w * theta; }
};

/// V(t, x) and its gradient in x.
struct PotentialEval {
    double v = 0.0;
    Vec v_x;

    static PotentialEval zero(std::size_t nu) {
        return {0.0, Vec::Zero(static_cast<Eigen::Index>(nu))};
    }
};

struct RescaledMultipliers {
    Vec mu;
    /// ||A mu - r|| / (1 + ||r||).
    double residual = 0.0;
};

/// Views into the flat (x, xd, w, wd) vector.
struct StateLayout {
    Eigen::Index nu;
    Eigen::Index ne;

    explicit StateLayout(const NetworkSpec& spec)
        : nu(static_cast<Eigen::Index>(spec.nu())),
          ne(static_cast<Eigen::Index>(spec.n_edges())) {}

    Eigen::Index size() const noexcept { return 2 * nu + 2 * ne; }

    template <class V>
    auto x(V&& y) const { return y.segment(0, nu); }
    template <class V>
    auto xdot(V&& y) const { return y.segment(nu, nu); }
    template <class V>
    auto w(V&& y) const { return y.segment(2 * nu, ne); }
    template <class V>
    auto wdot(V&& y) const { return y.segment(2 * nu + ne, ne); }

    Vec pack(const Vec& x, const Vec& xd, const Vec& w, const Vec& wd) const {
        Vec y(size());
        y << x, xd, w, wd;
        return y;
    }
};

namespace detail {

/// Gram matrix and right-hand side of the rescaled multiplier system.
inline std::pair<Mat, Vec> multiplier_system(const NetworkSpec& spec, const DynamicsParams& p,
                                             const Vec& xdot, const Vec& wdot,
                                             const ConstraintEval& ce,
                                             const PotentialEval& pot) {
    Mat a = ce.jac_xi.transpose() * ce.jac_xi / p.m_x;
    a.noalias() += ce.jac_m.transpose() * ce.jac_m / p.m_w;

    const Vec gdot_state = ce.jac_xi.transpose() * xdot + ce.jac_m.transpose() * wdot;
    Vec r = ce.g_tautau + curvature(spec, ce, xdot, wdot) - p.theta * gdot_state;
    // Mixed time partials vanish for these constraints: inputs depend on t
    // alone and neurons not at all.
    r.noalias() -= ce.jac_xi.transpose() * pot.v_x / p.m_x;
    return {std::move(a), std::move(r)};
}

}  // namespace detail

/// Solve the Gram system for the rescaled multipliers by Cholesky.
inline RescaledMultipliers solve_multipliers(const NetworkSpec& spec, const DynamicsParams& p,
                                             const Vec& xdot, const Vec& wdot,
                                             const ConstraintEval& ce,
                                             const PotentialEval& pot) {
    auto [a, r] = detail::multiplier_system(spec, p, xdot, wdot, ce, pot);
    Eigen::LLT<Mat> llt(a);
    if (llt.info() != Eigen::Success) {
        throw SingularityError("multiplier Gram matrix is not positive definite");
    }
    RescaledMultipliers out{llt.solve(r), 0.0};
    out.residual = (a * out.mu - r).norm() / (1.0 + r.norm());
    return out;
}

/// Per-trajectory vector field of the second-order model. Signal maps
/// t -> InputSample; Potential maps (t, InputSample, x) -> PotentialEval.
///
/// Keeps running statistics (call count, worst multiplier residual); not
/// safe to share between concurrently integrated trajectories.
template <class Signal, class Potential>
class SecondOrderField {
public:
    SecondOrderField(const NetworkSpec& spec, DynamicsParams params, Signal signal,
                     Potential potential)
        : spec_(spec), params_(params), signal_(std::move(signal)),
          potential_(std::move(potential)), layout_(spec) {
        params_.validate();
    }

    void operator()(double t, const Vec& y, Vec& dydt) {
        detail::require_size(y, static_cast<std::size_t>(layout_.size()), "state");
        const Vec x = layout_.x(y);
        const Vec xd = layout_.xdot(y);
        const Vec w = layout_.w(y);
        const Vec wd = layout_.wdot(y);

        const InputSample in = signal_(t);
        const ConstraintEval ce = eval_derivatives(spec_, x, w, in);
        const PotentialEval pot = potential_(t, in, x);
        last_ = solve_multipliers(spec_, params_, xd, wd, ce, pot);
        ++calls_;
        if (last_.residual > max_residual_) {
            max_residual_ = last_.residual;
        }

        dydt.resize(layout_.size());
        layout_.x(dydt) = xd;
        layout_.xdot(dydt) =
            -params_.theta * xd - (ce.jac_xi * last_.mu + pot.v_x) / params_.m_x;
        layout_.w(dydt) = wd;
        layout_.wdot(dydt) = -params_.theta * wd - ce.jac_m * last_.mu / params_.m_w;
    }

    Vec operator()(double t, const Vec& y) {
        Vec dy;
        (*this)(t, y, dy);
        return dy;
    }

    /// ||g||_inf and ||mu||_2 at (t, y); does not touch the running stats.
    std::pair<double, double> diagnose(double t, const Vec& y) const {
        const Vec x = layout_.x(y);
        const Vec w = layout_.w(y);
        const InputSample in = signal_(t);
        const ConstraintEval ce = eval_derivatives(spec_, x, w, in);
        const PotentialEval pot = potential_(t, in, x);
        const auto mult = solve_multipliers(spec_, params_, layout_.xdot(y), layout_.wdot(y), ce, pot);
        return {ce.g.lpNorm<Eigen::Infinity>(), mult.mu.norm()};
    }

    const StateLayout& layout() const noexcept { return layout_; }
    const DynamicsParams& params() const noexcept { return params_; }
    const RescaledMultipliers& last_multipliers() const noexcept { return last_; }
    std::size_t calls() const noexcept { return calls_; }
    double max_residual() const noexcept { return max_residual_; }

private:
    const NetworkSpec& spec_;
    DynamicsParams params_;
    Signal signal_;
    Potential potential_;
    StateLayout layout_;
    RescaledMultipliers last_;
    std::size_t calls_ = 0;
    double max_residual_ = 0.0;
};

/// One-shot evaluation of the Euler-Lagrange vector field.
template <class Signal, class Potential>
Vec el_vector_field(const NetworkSpec& spec, const DynamicsParams& params, double t,
                    const Vec& y, Signal signal, Potential potential) {
    SecondOrderField field(spec, params, std::move(signal), std::move(potential));
    return field(t, y);
}

struct InitialConditions {
    Vec y0;
    /// ||g(0)||_inf and ||g_tau(0)||_inf.
    double g_residual = 0.0;
    double gtau_residual = 0.0;
    bool consistent = true;
};

/// Cauchy data at t = 0: x from the forward pass at w0, zero velocities.
/// `consistent` is false when ||g_tau(0)|| exceeds tol_gtau; the state is
/// still usable.
template <class Signal>
InitialConditions make_initial_conditions(const NetworkSpec& spec, const Vec& w0,
                                          const Signal& signal, double tol_gtau = 1e-4) {
    detail::require_finite(w0, "w0");
    const InputSample in = signal(0.0);
    const Vec x0 = forward_solve(spec, w0, in);
    const ConstraintEval ce = eval_derivatives(spec, x0, w0, in);
    const StateLayout layout(spec);

    InitialConditions ic;
    ic.y0 = layout.pack(x0, Vec::Zero(layout.nu), w0, Vec::Zero(layout.ne));
    ic.g_residual = ce.g.lpNorm<Eigen::Infinity>();
    ic.gtau_residual = ce.g_tau.lpNorm<Eigen::Infinity>();
    ic.consistent = ic.g_residual < 1e-12 && ic.gtau_residual < tol_gtau;
    return ic;
}

}  // namespace cogact
