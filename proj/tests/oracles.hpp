#pragma once

// Reference implementations used only by the tests. They work on a dense
// weight matrix and share no code with the library beyond the Vec/Mat types.

#include <cmath>
#include <functional>

#include "cogact/netgraph.hpp"

namespace oracle {

using cogact::Mat;
using cogact::Vec;

/// Dense W with W(to, from) = w_e.
inline Mat dense_weights(const cogact::NetworkSpec& spec, const Vec& w) {
    const auto nu = static_cast<Eigen::Index>(spec.nu());
    Mat W = Mat::Zero(nu, nu);
    for (std::size_t e = 0; e < spec.n_edges(); ++e) {
        W(static_cast<Eigen::Index>(spec.edges()[e].to),
          static_cast<Eigen::Index>(spec.edges()[e].from)) = w[static_cast<Eigen::Index>(e)];
    }
    return W;
}

/// G(x) straight from the definition, tanh units.
inline Vec constraints(const cogact::NetworkSpec& spec, const Vec& x, const Vec& w, const Vec& e) {
    const Mat W = dense_weights(spec, w);
    const auto nu = static_cast<Eigen::Index>(spec.nu());
    const auto omega = static_cast<Eigen::Index>(spec.omega());
    Vec g(nu);
    for (Eigen::Index j = 0; j < nu; ++j) {
        if (j < omega) {
            const bool bias = spec.has_bias() && j == omega - 1;
            g[j] = x[j] - (bias ? 1.0 : e[j]);
        } else {
            g[j] = x[j] - std::tanh(W.row(j).dot(x));
        }
    }
    return g;
}

/// Plain feed-forward pass, unit by unit.
inline Vec forward(const cogact::NetworkSpec& spec, const Vec& w, const Vec& e) {
    const Mat W = dense_weights(spec, w);
    const auto nu = static_cast<Eigen::Index>(spec.nu());
    const auto omega = static_cast<Eigen::Index>(spec.omega());
    Vec x = Vec::Zero(nu);
    for (Eigen::Index j = 0; j < nu; ++j) {
        if (j < omega) {
            x[j] = (spec.has_bias() && j == omega - 1) ? 1.0 : e[j];
        } else {
            x[j] = std::tanh(W.row(j).dot(x));
        }
    }
    return x;
}

/// Central-difference Jacobian of f: R^n -> R^m, laid out (n x m) so that
/// entry (i, j) is d f_j / d z_i.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& z, double h = 1e-5) {
    const Vec f0 = f(z);
    Mat J(z.size(), f0.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Vec zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        J.row(i) = ((f(zp) - f(zm)) / (2.0 * h)).transpose();
    }
    return J;
}

inline double fd_derivative(const std::function<double(const Vec&)>& f, const Vec& z,
                            Eigen::Index i, double h = 1e-5) {
    Vec zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    return (f(zp) - f(zm)) / (2.0 * h);
}

/// max |a - b| / max(1, |a|, |b|) over all entries.
inline double max_rel_err(const Mat& a, const Mat& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double s = std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / s);
        }
    }
    return worst;
}

/// Classic fixed-step RK4, used as a reference solution for ODE tests.
inline Vec rk4(const std::function<Vec(double, const Vec&)>& f, Vec y, double t0, double t1,
               std::size_t n) {
    const double h = (t1 - t0) / static_cast<double>(n);
    double t = t0;
    for (std::size_t k = 0; k < n; ++k) {
        const Vec k1 = f(t, y);
        const Vec k2 = f(t + h / 2, y + h / 2 * k1);
        const Vec k3 = f(t + h / 2, y + h / 2 * k2);
        const Vec k4 = f(t + h, y + h * k3);
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        t += h;
    }
    return y;
}

}  // namespace oracle
