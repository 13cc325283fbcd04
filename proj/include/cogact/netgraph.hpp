#pragma once

// Neural networks described as constraints on a simple digraph.
//
// A network of nu units has omega input-like units (the external inputs and,
// optionally, a unit clamped to 1 acting as bias) followed by neurons. Every
// unit j carries one constraint:
//
//   G^j = x^j - e^j(t)                      j <  omega   (bias: x^j - 1)
//   G^j = x^j - sigma(sum_k w_jk x^k)       j >= omega
//
// Weights live on edges k -> j with k < j, so W is strictly lower triangular
// and unit indices are a topological order.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cogact {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Shape or wiring does not match what an operation expects.
struct StructuralError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A value that must be finite is not.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Activation { Tanh, Identity };

/// sigma, sigma' and sigma'' at one point.
struct ActivationValues {
    double value;
    double d1;
    double d2;
};

inline ActivationValues activate(Activation act, double a) noexcept {
    switch (act) {
    case Activation::Identity:
        return {a, 1.0, 0.0};
    case Activation::Tanh:
    default: {
        const double s = std::tanh(a);
        const double ds = 1.0 - s * s;
        return {s, ds, -2.0 * s * ds};
    }
    }
}

/// Directed edge from -> to; the weight w_{to,from}.
struct Edge {
    std::size_t to;
    std::size_t from;

    friend bool operator==(const Edge&, const Edge&) = default;
};

class NetworkSpec {
public:
    NetworkSpec(std::size_t nu, std::size_t omega, std::vector<Edge> edges, bool has_bias,
                Activation activation = Activation::Tanh)
        : nu_(nu), omega_(omega), edges_(std::move(edges)), has_bias_(has_bias),
          activation_(activation), incoming_(nu), outgoing_(nu) {
        if (omega_ == 0 || omega_ > nu_) {
            throw StructuralError("omega must be in [1, nu]");
        }
        if (has_bias_ && omega_ < 1) {
            throw StructuralError("bias unit requires at least one input-like unit");
        }
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const auto [to, from] = edges_[e];
            if (to >= nu_ || to < omega_) {
                throw StructuralError("edge " + std::to_string(from) + "->" + std::to_string(to) +
                                      " targets an input unit or is out of range");
            }
            if (from >= to) {
                throw StructuralError("edge " + std::to_string(from) + "->" + std::to_string(to) +
                                      " is not strictly lower triangular");
            }
            for (std::size_t f : incoming_[to]) {
                if (edges_[f].from == from) {
                    throw StructuralError("duplicate edge " + std::to_string(from) + "->" +
                                          std::to_string(to));
                }
            }
            incoming_[to].push_back(e);
            outgoing_[from].push_back(e);
        }
        for (std::size_t j = omega_; j < nu_; ++j) {
            if (outgoing_[j].empty()) {
                outputs_.push_back(j);
            }
        }
    }

    /// Fully connected layered MLP. Units are ordered inputs, bias, hidden
    /// layers, outputs; every neuron receives an edge from the bias unit.
    static NetworkSpec mlp(std::size_t inputs, const std::vector<std::size_t>& hidden,
                           std::size_t outputs, bool bias,
                           Activation activation = Activation::Tanh) {
        const std::size_t omega = inputs + (bias ? 1 : 0);
        std::vector<std::size_t> layer_sizes{inputs};
        layer_sizes.insert(layer_sizes.end(), hidden.begin(), hidden.end());
        layer_sizes.push_back(outputs);

        std::vector<Edge> edges;
        std::size_t prev_begin = 0;
        std::size_t next_begin = omega;
        for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
            for (std::size_t i = 0; i < layer_sizes[l]; ++i) {
                const std::size_t to = next_begin + i;
                for (std::size_t k = 0; k < layer_sizes[l - 1]; ++k) {
                    edges.push_back({to, prev_begin + k});
                }
                if (bias) {
                    edges.push_back({to, inputs});
                }
            }
            prev_begin = next_begin;
            next_begin += layer_sizes[l];
        }
        return NetworkSpec(next_begin, omega, std::move(edges), bias, activation);
    }

    std::size_t nu() const noexcept { return nu_; }
    std::size_t omega() const noexcept { return omega_; }
    std::size_t n_edges() const noexcept { return edges_.size(); }
    bool has_bias() const noexcept { return has_bias_; }
    Activation activation() const noexcept { return activation_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Index of the constant unit; only meaningful when has_bias().
    std::size_t bias_unit() const noexcept { return omega_ - 1; }
    /// Number of external signal components feeding the input units.
    std::size_t signal_dim() const noexcept { return omega_ - (has_bias_ ? 1 : 0); }

    std::span<const std::size_t> incoming(std::size_t unit) const { return incoming_[unit]; }
    std::span<const std::size_t> outgoing(std::size_t unit) const { return outgoing_[unit]; }
    /// Neurons without outgoing edges.
    const std::vector<std::size_t>& outputs() const noexcept { return outputs_; }

    bool is_bias(std::size_t unit) const noexcept { return has_bias_ && unit == bias_unit(); }

private:
    std::size_t nu_;
    std::size_t omega_;
    std::vector<Edge> edges_;
    bool has_bias_;
    Activation activation_;
    std::vector<std::vector<std::size_t>> incoming_;
    std::vector<std::vector<std::size_t>> outgoing_;
    std::vector<std::size_t> outputs_;
};

/// The external signal at one instant: e(t) and its first two time
/// derivatives, one entry per non-bias input unit.
struct InputSample {
    Vec e;
    Vec edot;
    Vec eddot;

    static InputSample constant(Vec e) {
        const auto n = e.size();
        return {std::move(e), Vec::Zero(n), Vec::Zero(n)};
    }
};

namespace detail {

inline void require_size(const Vec& v, std::size_t n, const char* what) {
    if (static_cast<std::size_t>(v.size()) != n) {
        throw StructuralError(std::string(what) + " has size " + std::to_string(v.size()) +
                              ", expected " + std::to_string(n));
    }
}

inline void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) {
        throw NumericError(std::string(what) + " contains non-finite entries");
    }
}

inline void check_point(const NetworkSpec& spec, const Vec& x, const Vec& w,
                        const InputSample& in) {
    require_size(x, spec.nu(), "x");
    require_size(w, spec.n_edges(), "w");
    require_size(in.e, spec.signal_dim(), "e");
    require_finite(x, "x");
    require_finite(w, "w");
    require_finite(in.e, "e");
}

inline double preactivation(const NetworkSpec& spec, const Vec& x, const Vec& w,
                            std::size_t unit) {
    double a = 0.0;
    for (std::size_t e : spec.incoming(unit)) {
        a += w[static_cast<Eigen::Index>(e)] * x[static_cast<Eigen::Index>(spec.edges()[e].from)];
    }
    return a;
}

}  // namespace detail

/// Constraint values g^j = G^j(t, x, W).
inline Vec eval_constraints(const NetworkSpec& spec, const Vec& x, const Vec& w,
                            const InputSample& in) {
    detail::check_point(spec, x, w, in);
    Vec g(spec.nu());
    for (std::size_t j = 0; j < spec.omega(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        g[jj] = spec.is_bias(j) ? x[jj] - 1.0 : x[jj] - in.e[jj];
    }
    for (std::size_t j = spec.omega(); j < spec.nu(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        g[jj] = x[jj] - activate(spec.activation(), detail::preactivation(spec, x, w, j)).value;
    }
    return g;
}

/// The unique x satisfying every constraint: clamp the inputs, then sweep the
/// neurons in index order.
inline Vec forward_solve(const NetworkSpec& spec, const Vec& w, const InputSample& in) {
    detail::require_size(w, spec.n_edges(), "w");
    detail::require_size(in.e, spec.signal_dim(), "e");
    Vec x(spec.nu());
    for (std::size_t j = 0; j < spec.omega(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        x[jj] = spec.is_bias(j) ? 1.0 : in.e[jj];
    }
    for (std::size_t j = spec.omega(); j < spec.nu(); ++j) {
        x[static_cast<Eigen::Index>(j)] =
            activate(spec.activation(), detail::preactivation(spec, x, w, j)).value;
    }
    return x;
}

/// Constraint values together with every partial derivative the dynamics
/// need, at one point (t, x, W).
///
/// Layout: jac_xi(i, j) = dG^j/dx^i (nu x nu), jac_m(e, j) = dG^j/dw_e
/// (n_edges x nu). The second derivatives are kept implicitly through the
/// per-unit sigma' and sigma'' values; the dense blocks are available from
/// hessian_xixi / hessian_xim / hessian_mm.
struct ConstraintEval {
    Vec g;
    Vec g_tau;
    Vec g_tautau;
    Mat jac_xi;
    Mat jac_m;
    /// sigma'(a_j) and sigma''(a_j) per unit; zero on input-like units.
    Vec act_d1;
    Vec act_d2;
    Vec x;
    Vec w;
};

inline ConstraintEval eval_derivatives(const NetworkSpec& spec, const Vec& x, const Vec& w,
                                       const InputSample& in) {
    detail::check_point(spec, x, w, in);
    detail::require_size(in.edot, spec.signal_dim(), "edot");
    detail::require_size(in.eddot, spec.signal_dim(), "eddot");

    const auto nu = static_cast<Eigen::Index>(spec.nu());
    const auto ne = static_cast<Eigen::Index>(spec.n_edges());
    ConstraintEval ce{Vec(nu),          Vec::Zero(nu), Vec::Zero(nu), Mat::Identity(nu, nu),
                      Mat::Zero(ne, nu), Vec::Zero(nu), Vec::Zero(nu), x, w};

    for (std::size_t j = 0; j < spec.omega(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        if (spec.is_bias(j)) {
            ce.g[jj] = x[jj] - 1.0;
        } else {
            ce.g[jj] = x[jj] - in.e[jj];
            ce.g_tau[jj] = -in.edot[jj];
            ce.g_tautau[jj] = -in.eddot[jj];
        }
    }
    for (std::size_t j = spec.omega(); j < spec.nu(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const auto s = activate(spec.activation(), detail::preactivation(spec, x, w, j));
        ce.g[jj] = x[jj] - s.value;
        ce.act_d1[jj] = s.d1;
        ce.act_d2[jj] = s.d2;
        for (std::size_t e : spec.incoming(j)) {
            const auto ee = static_cast<Eigen::Index>(e);
            const auto from = static_cast<Eigen::Index>(spec.edges()[e].from);
            ce.jac_xi(from, jj) -= s.d1 * w[ee];
            ce.jac_m(ee, jj) = -s.d1 * x[from];
        }
    }
    return ce;
}

/// d^2 G^j / dx^a dx^b.
inline Mat hessian_xixi(const NetworkSpec& spec, const ConstraintEval& ce, std::size_t j) {
    const auto nu = static_cast<Eigen::Index>(spec.nu());
    Mat h = Mat::Zero(nu, nu);
    if (j < spec.omega()) {
        return h;
    }
    const double s2 = ce.act_d2[static_cast<Eigen::Index>(j)];
    for (std::size_t e1 : spec.incoming(j)) {
        for (std::size_t e2 : spec.incoming(j)) {
            h(static_cast<Eigen::Index>(spec.edges()[e1].from),
              static_cast<Eigen::Index>(spec.edges()[e2].from)) =
                -s2 * ce.w[static_cast<Eigen::Index>(e1)] * ce.w[static_cast<Eigen::Index>(e2)];
        }
    }
    return h;
}

/// d^2 G^j / dx^a dw_e, shape nu x n_edges.
inline Mat hessian_xim(const NetworkSpec& spec, const ConstraintEval& ce, std::size_t j) {
    Mat h = Mat::Zero(static_cast<Eigen::Index>(spec.nu()),
                      static_cast<Eigen::Index>(spec.n_edges()));
    if (j < spec.omega()) {
        return h;
    }
    const auto jj = static_cast<Eigen::Index>(j);
    const double s1 = ce.act_d1[jj];
    const double s2 = ce.act_d2[jj];
    for (std::size_t ea : spec.incoming(j)) {
        const auto a = static_cast<Eigen::Index>(spec.edges()[ea].from);
        for (std::size_t ec : spec.incoming(j)) {
            const auto c = static_cast<Eigen::Index>(spec.edges()[ec].from);
            h(a, static_cast<Eigen::Index>(ec)) =
                -s2 * ce.x[c] * ce.w[static_cast<Eigen::Index>(ea)] - (a == c ? s1 : 0.0);
        }
    }
    return h;
}

/// d^2 G^j / dw_e1 dw_e2.
inline Mat hessian_mm(const NetworkSpec& spec, const ConstraintEval& ce, std::size_t j) {
    const auto ne = static_cast<Eigen::Index>(spec.n_edges());
    Mat h = Mat::Zero(ne, ne);
    if (j < spec.omega()) {
        return h;
    }
    const double s2 = ce.act_d2[static_cast<Eigen::Index>(j)];
    for (std::size_t e1 : spec.incoming(j)) {
        for (std::size_t e2 : spec.incoming(j)) {
            h(static_cast<Eigen::Index>(e1), static_cast<Eigen::Index>(e2)) =
                -s2 * ce.x[static_cast<Eigen::Index>(spec.edges()[e1].from)] *
                ce.x[static_cast<Eigen::Index>(spec.edges()[e2].from)];
        }
    }
    return h;
}

/// The velocity-quadratic part of the second time derivative of each
/// constraint: G_xixi xd xd + 2 G_xim xd wd + G_mm wd wd.
///
/// For a neuron with p = sum w_jk xd^k and q = sum wd_jk x^k this collapses to
/// -sigma''(a_j) (p + q)^2 - 2 sigma'(a_j) sum wd_jk xd^k.
inline Vec curvature(const NetworkSpec& spec, const ConstraintEval& ce, const Vec& xdot,
                     const Vec& wdot) {
    Vec c = Vec::Zero(static_cast<Eigen::Index>(spec.nu()));
    for (std::size_t j = spec.omega(); j < spec.nu(); ++j) {
        double p = 0.0;
        double q = 0.0;
        double cross = 0.0;
        for (std::size_t e : spec.incoming(j)) {
            const auto ee = static_cast<Eigen::Index>(e);
            const auto k = static_cast<Eigen::Index>(spec.edges()[e].from);
            p += ce.w[ee] * xdot[k];
            q += wdot[ee] * ce.x[k];
            cross += wdot[ee] * xdot[k];
        }
        const auto jj = static_cast<Eigen::Index>(j);
        c[jj] = -ce.act_d2[jj] * (p + q) * (p + q) - 2.0 * ce.act_d1[jj] * cross;
    }
    return c;
}

/// Structural sufficient condition for G_xi to be invertible: unit diagonal,
/// zero strictly-lower part.
inline bool check_full_rank(const ConstraintEval& ce) {
    const Mat& j = ce.jac_xi;
    if (j.rows() != j.cols()) {
        return false;
    }
    for (Eigen::Index r = 0; r < j.rows(); ++r) {
        if (j(r, r) != 1.0) {
            return false;
        }
        for (Eigen::Index c = 0; c < r; ++c) {
            if (j(r, c) != 0.0) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace cogact
