#pragma once

// CSV/JSON artifacts of an experiment. Floats are written with %.17g so
// every value reads back bit-exact.
//
//   runs.csv            seed,status,acc,loss,acc2,loss2,g_norm_final,error
//   timing.csv          seed,wall_time,n_steps,n_rejected,n_evals,max_multiplier_residual
//   summary.json        setup echo plus mean/std of each metric
//   trajectory_<s>.csv  t,<weights w_to_from>,<units x_j>,g_inf
//   final_weights.csv   seed,<weights w_to_from>
//   compare.csv         record,key,max_weight_deviation,d_acc,d_loss,d_acc2,d_loss2,d_g_norm_final
//   decision.csv        x,y,output

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "config.hpp"
#include "xorbench.hpp"

namespace cogact {

inline std::string fmt17(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string weight_name(const Edge& e) {
    return "w_" + std::to_string(e.to) + "_" + std::to_string(e.from);
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunResult>& runs) {
    os << "seed,status,acc,loss,acc2,loss2,g_norm_final,error\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : runs) {
        const Metrics m = r.ok ? r.metrics : Metrics{nan, nan, nan, nan, nan};
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << fmt17(m.acc) << ','
           << fmt17(m.loss) << ',' << fmt17(m.acc2) << ',' << fmt17(m.loss2) << ','
           << fmt17(m.g_norm_final) << ',' << err << '\n';
    }
}

inline void write_timing_csv(std::ostream& os, const std::vector<RunResult>& runs) {
    os << "seed,wall_time,n_steps,n_rejected,n_evals,max_multiplier_residual\n";
    for (const auto& r : runs) {
        os << r.seed << ',' << fmt17(r.wall_time) << ',' << r.n_steps << ',' << r.n_rejected
           << ',' << r.n_evals << ',' << fmt17(r.max_multiplier_residual) << '\n';
    }
}

inline void write_trajectory_csv(std::ostream& os, const NetworkSpec& spec, const RunResult& r) {
    os << 't';
    for (const auto& e : spec.edges()) os << ',' << weight_name(e);
    for (std::size_t j = 0; j < spec.nu(); ++j) os << ",x_" << j;
    os << ",g_inf\n";
    for (std::size_t k = 0; k < r.path.times.size(); ++k) {
        os << fmt17(r.path.times[k]);
        for (Eigen::Index e = 0; e < r.path.weights[k].size(); ++e) {
            os << ',' << fmt17(r.path.weights[k][e]);
        }
        for (Eigen::Index j = 0; j < r.path.neurons[k].size(); ++j) {
            os << ',' << fmt17(r.path.neurons[k][j]);
        }
        os << ',' << fmt17(r.path.g_inf[k]) << '\n';
    }
}

inline void write_final_weights_csv(std::ostream& os, const NetworkSpec& spec,
                                    const std::vector<RunResult>& runs) {
    os << "seed";
    for (const auto& e : spec.edges()) os << ',' << weight_name(e);
    os << '\n';
    for (const auto& r : runs) {
        if (!r.ok) continue;
        os << r.seed;
        for (Eigen::Index e = 0; e < r.w_final.size(); ++e) os << ',' << fmt17(r.w_final[e]);
        os << '\n';
    }
}

/// Final weights of `seed` from a final_weights.csv stream.
inline Vec read_final_weights(std::istream& is, const NetworkSpec& spec, std::uint64_t seed) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("final weights file is empty");
    }
    while (std::getline(is, line)) {
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        if (cell.empty() || std::stoull(cell) != seed) continue;
        Vec w(static_cast<Eigen::Index>(spec.n_edges()));
        for (Eigen::Index e = 0; e < w.size(); ++e) {
            if (!std::getline(row, cell, ',')) {
                throw std::runtime_error("final weights row for seed " + std::to_string(seed) +
                                         " is truncated");
            }
            w[e] = std::stod(cell);
        }
        return w;
    }
    throw std::runtime_error("no final weights for seed " + std::to_string(seed));
}

inline nlohmann::json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& res) {
    const auto& s = cfg.setup;
    nlohmann::json j;
    j["model"] = to_string(s.model);
    j["n_seeds"] = s.n_seeds;
    j["base_seed"] = s.base_seed;
    j["t_max"] = s.integrator.t_max;
    j["dt"] = s.integrator.dt_sample;
    j["dynamics"] = {{"m_x", s.dynamics.m_x},
                     {"m_w", s.dynamics.m_w},
                     {"theta", s.dynamics.theta},
                     {"ramp", s.dynamics.ramp_potential}};
    j["integrator"] = {{"method", to_string(s.effective_method())},
                       {"rtol", s.integrator.rtol},
                       {"atol", s.integrator.atol},
                       {"euler_substeps", s.integrator.euler_substeps}};
    if (s.model == Model::Baseline) j["eta"] = s.effective_eta();
    j["n_ok"] = res.summary.n_ok;
    j["n_failed"] = res.summary.n_failed;
    j["acc"] = stat_json(res.summary.acc);
    j["loss"] = stat_json(res.summary.loss);
    j["acc2"] = stat_json(res.summary.acc2);
    j["loss2"] = stat_json(res.summary.loss2);
    j["g_norm_final"] = stat_json(res.summary.g_norm_final);
    return j;
}

struct Comparison {
    std::vector<double> times;
    /// Max over seeds of ||w_a(t) - w_b(t)||_inf at each sample.
    std::vector<double> sample_max_dev;
    std::vector<std::uint64_t> seeds;
    /// Max over time of ||w_a(t) - w_b(t)||_inf per seed.
    std::vector<double> seed_max_dev;
    std::vector<Metrics> seed_delta;
    double max_deviation = 0.0;

    double mean_seed_max_dev() const {
        double s = 0.0;
        for (double d : seed_max_dev) s += d;
        return seed_max_dev.empty() ? 0.0 : s / static_cast<double>(seed_max_dev.size());
    }
};

/// Pair runs by seed and compare weight paths sample by sample. Both
/// experiments must share the grid and seeds; failed runs are an error.
inline Comparison compare_results(const ExperimentResult& a, const ExperimentResult& b) {
    if (a.runs.size() != b.runs.size()) {
        throw std::invalid_argument("experiments have different seed counts");
    }
    Comparison c;
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        const RunResult& ra = a.runs[i];
        const RunResult& rb = b.runs[i];
        if (ra.seed != rb.seed) {
            throw std::invalid_argument("experiments use different seeds");
        }
        if (!ra.ok || !rb.ok) {
            throw std::runtime_error("seed " + std::to_string(ra.seed) + " failed: " +
                                     (ra.ok ? rb.error : ra.error));
        }
        if (ra.path.times.size() != rb.path.times.size()) {
            throw std::invalid_argument("experiments have different sampling grids");
        }
        if (c.times.empty()) {
            c.times = ra.path.times;
            c.sample_max_dev.assign(c.times.size(), 0.0);
        } else if (c.times.size() != ra.path.times.size()) {
            throw std::invalid_argument("runs have different sampling grids");
        }
        double seed_max = 0.0;
        for (std::size_t k = 0; k < c.times.size(); ++k) {
            if (std::abs(ra.path.times[k] - rb.path.times[k]) > 1e-12) {
                throw std::invalid_argument("experiments have different sampling grids");
            }
            const double d = (ra.path.weights[k] - rb.path.weights[k]).lpNorm<Eigen::Infinity>();
            c.sample_max_dev[k] = std::max(c.sample_max_dev[k], d);
            seed_max = std::max(seed_max, d);
        }
        c.seeds.push_back(ra.seed);
        c.seed_max_dev.push_back(seed_max);
        c.seed_delta.push_back({rb.metrics.acc - ra.metrics.acc, rb.metrics.loss - ra.metrics.loss,
                                rb.metrics.acc2 - ra.metrics.acc2,
                                rb.metrics.loss2 - ra.metrics.loss2,
                                rb.metrics.g_norm_final - ra.metrics.g_norm_final});
        c.max_deviation = std::max(c.max_deviation, seed_max);
    }
    return c;
}

/// "sample" rows carry the time in `key`; "seed" rows carry the seed, its
/// maximum deviation and the metric deltas (b - a).
inline void write_compare_csv(std::ostream& os, const Comparison& c) {
    os << "record,key,max_weight_deviation,d_acc,d_loss,d_acc2,d_loss2,d_g_norm_final\n";
    for (std::size_t k = 0; k < c.times.size(); ++k) {
        os << "sample," << fmt17(c.times[k]) << ',' << fmt17(c.sample_max_dev[k]) << ",,,,,\n";
    }
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
        const Metrics& d = c.seed_delta[i];
        os << "seed," << c.seeds[i] << ',' << fmt17(c.seed_max_dev[i]) << ',' << fmt17(d.acc)
           << ',' << fmt17(d.loss) << ',' << fmt17(d.acc2) << ',' << fmt17(d.loss2) << ','
           << fmt17(d.g_norm_final) << '\n';
    }
}

struct DecisionCell {
    double x;
    double y;
    double output;
};

/// Network output over a resolution x resolution grid on [lo, hi]^2. A
/// single-cell grid samples the centre of the square.
inline std::vector<DecisionCell> decision_map(const NetworkSpec& spec, const Vec& w,
                                              std::size_t resolution, double lo = -0.25,
                                              double hi = 1.25) {
    if (resolution == 0) {
        throw std::invalid_argument("resolution must be at least 1");
    }
    auto coord = [&](std::size_t i) {
        if (resolution == 1) return 0.5 * (lo + hi);
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    };
    std::vector<DecisionCell> cells;
    cells.reserve(resolution * resolution);
    for (std::size_t iy = 0; iy < resolution; ++iy) {
        for (std::size_t ix = 0; ix < resolution; ++ix) {
            const double x = coord(ix);
            const double y = coord(iy);
            cells.push_back({x, y, detail::network_output(spec, w, x, y)});
        }
    }
    return cells;
}

inline void write_decision_csv(std::ostream& os, const std::vector<DecisionCell>& cells) {
    os << "x,y,output\n";
    for (const auto& c : cells) {
        os << fmt17(c.x) << ',' << fmt17(c.y) << ',' << fmt17(c.output) << '\n';
    }
}

}  // namespace cogact
