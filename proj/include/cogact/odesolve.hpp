#pragma once

// Integrators reporting on a fixed sampling grid t_k = k * dt_sample.
//
//   ExplicitEuler   fixed steps of dt_sample
//   AdaptiveRK      Dormand-Prince 5(4), PI step control, FSAL
//   ImplicitTRBDF2  ESDIRK form of TR-BDF2 with the embedded third-order
//                   estimate, finite-difference Jacobian, Newton per stage
//
// Adaptive methods never step across a grid time: the last step of each
// interval is shortened to land exactly on it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netgraph.hpp"

namespace cogact {

/// Step size collapsed below the minimum; the problem is too stiff for the
/// selected method or has a singularity.
struct StiffnessError : std::runtime_error {
    double t;
    explicit StiffnessError(double at)
        : std::runtime_error("step size underflow at t = " + std::to_string(at)), t(at) {}
};

/// The state stopped being finite.
struct DivergenceError : std::runtime_error {
    double t;
    explicit DivergenceError(double at)
        : std::runtime_error("non-finite state at t = " + std::to_string(at)), t(at) {}
};

enum class Method { ExplicitEuler, AdaptiveRK, ImplicitTRBDF2 };

inline const char* to_string(Method m) noexcept {
    switch (m) {
    case Method::ExplicitEuler: return "euler";
    case Method::AdaptiveRK: return "rk45";
    case Method::ImplicitTRBDF2: return "trbdf2";
    }
    return "?";
}

struct IntegratorConfig {
    Method method = Method::AdaptiveRK;
    double rtol = 1.49e-8;
    double atol = 1.49e-8;
    double dt_sample = 0.1;
    double t_max = 150.0;
    double h_min = 1e-12;
    std::size_t max_steps = 50'000'000;
    double newton_tol = 1e-10;
    int newton_max_iter = 20;
    /// First-order models: Euler sub-steps per sample interval.
    std::size_t euler_substeps = 1;

    void validate() const {
        if (!(rtol > 0.0) || !(atol > 0.0)) {
            throw std::invalid_argument("rtol and atol must be positive");
        }
        if (!(dt_sample > 0.0)) {
            throw std::invalid_argument("dt_sample must be positive");
        }
        if (!(t_max > 0.0)) {
            throw std::invalid_argument("t_max must be positive");
        }
        if (euler_substeps == 0) {
            throw std::invalid_argument("euler_substeps must be at least 1");
        }
    }

    /// Number of grid intervals; t_max is rounded to the nearest multiple of
    /// dt_sample.
    std::size_t n_intervals() const {
        return static_cast<std::size_t>(std::llround(t_max / dt_sample));
    }

    double grid_time(std::size_t k) const { return static_cast<double>(k) * dt_sample; }
};

/// Stiff-path selection by damping: TR-BDF2 from theta = 50 up.
inline Method auto_method(double theta, double threshold = 50.0) {
    return theta >= threshold ? Method::ImplicitTRBDF2 : Method::AdaptiveRK;
}

struct SampleDiagnostics {
    double g_inf = 0.0;
    double mu_norm = 0.0;
    std::size_t steps = 0;
    std::size_t rejected = 0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<SampleDiagnostics> diagnostics;
    std::size_t n_steps = 0;
    std::size_t n_rejected = 0;
    std::size_t n_evals = 0;

    const Vec& final_state() const { return states.back(); }
};

/// Monitor that records nothing beyond step counts.
struct NoMonitor {
    std::pair<double, double> operator()(double, const Vec&) const { return {0.0, 0.0}; }
};

namespace detail {

inline double error_norm(const Vec& err, const Vec& y0, const Vec& y1, double rtol,
                         double atol) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double r = err[i] / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(err.size(), 1)));
}

template <class Monitor>
void record(Trajectory& tr, double t, const Vec& y, Monitor& mon, std::size_t steps,
            std::size_t rejected) {
    const auto [g, mu] = mon(t, y);
    tr.times.push_back(t);
    tr.states.push_back(y);
    tr.diagnostics.push_back({g, mu, steps, rejected});
}

inline void require_finite_state(const Vec& y, double t) {
    if (!y.allFinite()) {
        throw DivergenceError(t);
    }
}

// Dormand-Prince 5(4) tableau.
struct DoPri {
    static constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    // b - bhat
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// One Dormand-Prince step from (t, y) with derivative k1 = f(t, y). Returns
/// the fifth-order solution; `err` receives the embedded error estimate and
/// `k7` the derivative at the new point.
template <class Field>
Vec dopri5_step(Field& f, double t, const Vec& y, const Vec& k1, double h, Vec& err, Vec& k7) {
    using T = detail::DoPri;
    Vec k2, k3, k4, k5, k6;
    f(t + T::c[1] * h, Vec(y + h * T::a21 * k1), k2);
    f(t + T::c[2] * h, Vec(y + h * (T::a31 * k1 + T::a32 * k2)), k3);
    f(t + T::c[3] * h, Vec(y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3)), k4);
    f(t + T::c[4] * h, Vec(y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4)), k5);
    f(t + h, Vec(y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5)),
      k6);
    Vec y1 = y + h * (T::a71 * k1 + T::a73 * k3 + T::a74 * k4 + T::a75 * k5 + T::a76 * k6);
    f(t + h, y1, k7);
    err = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
    return y1;
}

namespace detail {

template <class Field, class Monitor>
Trajectory integrate_euler(Field& f, Vec y, const IntegratorConfig& cfg, Monitor& mon) {
    Trajectory tr;
    const std::size_t n = cfg.n_intervals();
    record(tr, 0.0, y, mon, 0, 0);
    Vec dy;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = cfg.grid_time(k);
        f(t, y, dy);
        ++tr.n_evals;
        y += cfg.dt_sample * dy;
        require_finite_state(y, cfg.grid_time(k + 1));
        ++tr.n_steps;
        record(tr, cfg.grid_time(k + 1), y, mon, 1, 0);
    }
    return tr;
}

template <class Field>
double initial_step(Field& f, double t, const Vec& y, const Vec& k1, double rtol, double atol,
                    double order, double h_max, std::size_t& evals) {
    Vec sc = (atol + rtol * y.array().abs()).matrix();
    const double d0 = std::sqrt((y.array() / sc.array()).square().mean());
    const double d1 = std::sqrt((k1.array() / sc.array()).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, h_max);
    Vec k2;
    f(t + h0, Vec(y + h0 * k1), k2);
    ++evals;
    const double d2 =
        std::sqrt((((k2 - k1).array()) / sc.array()).square().mean()) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / order);
    return std::min({100.0 * h0, h1, h_max});
}

template <class Field, class Monitor>
Trajectory integrate_rk45(Field& f, Vec y, const IntegratorConfig& cfg, Monitor& mon) {
    Trajectory tr;
    const std::size_t n = cfg.n_intervals();
    record(tr, 0.0, y, mon, 0, 0);

    Vec k1, k7, err;
    f(0.0, y, k1);
    tr.n_evals = 1;
    double h = initial_step(f, 0.0, y, k1, cfg.rtol, cfg.atol, 5.0, cfg.dt_sample, tr.n_evals);
    double err_old = 1e-4;
    constexpr double beta = 0.04;
    constexpr double expo = 0.2 - 0.75 * beta;

    double t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t_next = cfg.grid_time(k + 1);
        std::size_t steps = 0;
        std::size_t rejected = 0;
        while (t < t_next) {
            if (tr.n_steps >= cfg.max_steps) {
                throw StiffnessError(t);
            }
            const bool lands = t + h >= t_next - 1e-12 * std::max(1.0, t_next);
            const double h_try = lands ? t_next - t : h;
            if (h_try < cfg.h_min) {
                throw StiffnessError(t);
            }
            Vec y1 = dopri5_step(f, t, y, k1, h_try, err, k7);
            tr.n_evals += 6;
            const double e = y1.allFinite()
                                 ? error_norm(err, y, y1, cfg.rtol, cfg.atol)
                                 : std::numeric_limits<double>::infinity();
            if (e <= 1.0) {
                t = lands ? t_next : t + h_try;
                y = std::move(y1);
                k1 = k7;
                ++steps;
                ++tr.n_steps;
                double fac = std::pow(std::max(e, 1e-10), expo) / std::pow(err_old, beta);
                fac = std::clamp(fac / 0.9, 0.2, 10.0);
                const double h_new = h_try / fac;
                // A step shortened to hit the grid does not shrink the next one.
                h = lands ? std::max(h, h_new) : h_new;
                err_old = std::max(e, 1e-4);
            } else {
                ++rejected;
                ++tr.n_rejected;
                const double fac = std::isfinite(e) ? std::pow(e, expo) / 0.9 : 10.0;
                h = h_try / std::min(10.0, fac);
            }
        }
        require_finite_state(y, t_next);
        record(tr, t_next, y, mon, steps, rejected);
    }
    return tr;
}

template <class Field>
Mat fd_jacobian(Field& f, double t, const Vec& y, const Vec& fy, std::size_t& evals) {
    const auto n = y.size();
    Mat jac(n, n);
    Vec yp = y;
    Vec fp;
    const double sq = std::sqrt(std::numeric_limits<double>::epsilon());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = sq * std::max(1.0, std::abs(y[i]));
        yp[i] = y[i] + d;
        f(t, yp, fp);
        jac.col(i) = (fp - fy) / d;
        yp[i] = y[i];
    }
    evals += static_cast<std::size_t>(n);
    return jac;
}

// Solves Z = base + hd f(tz, Z) by Newton with the frozen matrix I - hd J.
template <class Field>
bool newton_stage(Field& f, double tz, const Vec& base, double hd,
                  const Eigen::PartialPivLU<Mat>& lu, Vec& z, const IntegratorConfig& cfg,
                  std::size_t& evals) {
    Vec fz;
    for (int it = 0; it < cfg.newton_max_iter; ++it) {
        f(tz, z, fz);
        ++evals;
        const Vec res = z - base - hd * fz;
        if (!res.allFinite()) {
            return false;
        }
        const double rn = res.lpNorm<Eigen::Infinity>();
        if (rn <= cfg.newton_tol) {
            return true;
        }
        const Vec dz = lu.solve(res);
        z -= dz;
        if (dz.lpNorm<Eigen::Infinity>() <=
            4.0 * std::numeric_limits<double>::epsilon() * (1.0 + z.lpNorm<Eigen::Infinity>())) {
            return true;
        }
    }
    return false;
}

template <class Field, class Monitor>
Trajectory integrate_trbdf2(Field& f, Vec y, const IntegratorConfig& cfg, Monitor& mon) {
    const double gam = 2.0 - std::sqrt(2.0);
    const double d = gam / 2.0;
    const double w = std::sqrt(2.0) / 4.0;
    const double bh1 = (1.0 - w) / 3.0;
    const double bh2 = (3.0 * w + 1.0) / 3.0;
    const double bh3 = d / 3.0;

    Trajectory tr;
    const std::size_t n = cfg.n_intervals();
    record(tr, 0.0, y, mon, 0, 0);

    const auto dim = y.size();
    Vec k1;
    f(0.0, y, k1);
    tr.n_evals = 1;
    double h = initial_step(f, 0.0, y, k1, cfg.rtol, cfg.atol, 3.0, cfg.dt_sample, tr.n_evals);

    double t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t_next = cfg.grid_time(k + 1);
        std::size_t steps = 0;
        std::size_t rejected = 0;
        while (t < t_next) {
            if (tr.n_steps >= cfg.max_steps) {
                throw StiffnessError(t);
            }
            const bool lands = t + h >= t_next - 1e-12 * std::max(1.0, t_next);
            const double h_try = lands ? t_next - t : h;
            if (h_try < cfg.h_min) {
                throw StiffnessError(t);
            }
            const Mat jac = fd_jacobian(f, t, y, k1, tr.n_evals);
            const double hd = h_try * d;
            const Eigen::PartialPivLU<Mat> lu(Mat::Identity(dim, dim) - hd * jac);

            // Trapezoidal stage to t + gam h.
            const Vec base2 = y + hd * k1;
            Vec z2 = y + gam * h_try * k1;
            bool ok = newton_stage(f, t + gam * h_try, base2, hd, lu, z2, cfg, tr.n_evals);
            Vec z3;
            Vec k2;
            if (ok) {
                k2 = (z2 - base2) / hd;
                // BDF2 stage to t + h.
                const Vec base3 = y + h_try * w * (k1 + k2);
                z3 = y + h_try * ((1.0 - d) * k1 + d * k2);
                ok = newton_stage(f, t + h_try, base3, hd, lu, z3, cfg, tr.n_evals);
                if (ok) {
                    const Vec k3 = (z3 - base3) / hd;
                    Vec err = h_try * ((w - bh1) * k1 + (w - bh2) * k2 + (d - bh3) * k3);
                    err = lu.solve(err);
                    const double e = error_norm(err, y, z3, cfg.rtol, cfg.atol);
                    if (e <= 1.0) {
                        t = lands ? t_next : t + h_try;
                        y = std::move(z3);
                        require_finite_state(y, t);
                        f(t, y, k1);
                        ++tr.n_evals;
                        ++steps;
                        ++tr.n_steps;
                        const double fac = std::clamp(0.9 * std::pow(std::max(e, 1e-10), -1.0 / 3.0), 0.2, 5.0);
                        h = lands ? std::max(h, h_try * fac) : h_try * fac;
                        continue;
                    }
                    ++rejected;
                    ++tr.n_rejected;
                    h = h_try * std::clamp(0.9 * std::pow(e, -1.0 / 3.0), 0.1, 0.9);
                    continue;
                }
            }
            // Newton failure.
            ++rejected;
            ++tr.n_rejected;
            h = h_try * 0.25;
        }
        require_finite_state(y, t_next);
        record(tr, t_next, y, mon, steps, rejected);
    }
    return tr;
}

}  // namespace detail

/// Integrate y' = field(t, y) from 0 to cfg.t_max, reporting on the sample
/// grid. Field is called as field(t, y, dydt). Monitor(t, y) returns
/// (||g||_inf, ||mu||) for each sample.
template <class Field, class Monitor = NoMonitor>
Trajectory integrate(Field&& field, Vec y0, const IntegratorConfig& cfg, Monitor&& mon = {}) {
    cfg.validate();
    detail::require_finite_state(y0, 0.0);
    switch (cfg.method) {
    case Method::ExplicitEuler:
        return detail::integrate_euler(field, std::move(y0), cfg, mon);
    case Method::ImplicitTRBDF2:
        return detail::integrate_trbdf2(field, std::move(y0), cfg, mon);
    case Method::AdaptiveRK:
    default:
        return detail::integrate_rk45(field, std::move(y0), cfg, mon);
    }
}

/// Apply a first-order update w <- step(t, w, h) euler_substeps times per
/// grid interval (h = dt_sample / euler_substeps). Kept apart from
/// `integrate` so first-order models never use adaptive stepping.
template <class Step, class Monitor = NoMonitor>
Trajectory integrate_euler_first_order(Step&& step, Vec w0, const IntegratorConfig& cfg,
                                       Monitor&& mon = {}) {
    cfg.validate();
    detail::require_finite_state(w0, 0.0);
    Trajectory tr;
    const std::size_t n = cfg.n_intervals();
    const std::size_t sub = cfg.euler_substeps;
    const double h = cfg.dt_sample / static_cast<double>(sub);
    detail::record(tr, 0.0, w0, mon, 0, 0);
    Vec w = std::move(w0);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t s = 0; s < sub; ++s) {
            const double t = sub == 1 ? cfg.grid_time(k)
                                      : cfg.grid_time(k) + static_cast<double>(s) * h;
            w = step(t, w, h);
            ++tr.n_steps;
            ++tr.n_evals;
        }
        detail::require_finite_state(w, cfg.grid_time(k + 1));
        detail::record(tr, cfg.grid_time(k + 1), w, mon, sub, 0);
    }
    return tr;
}

}  // namespace cogact
