#pragma once

// INI experiment configuration.
//
//   [experiment]  model n_seeds base_seed t_max dt out_dir write_trajectories
//                 n_region_samples init_range threads
//   [dynamics]    m_x m_w theta ramp
//   [integrator]  method rtol atol stiff_threshold euler_substeps
//   [baseline]    eta
//   [signal]      u0 v0 radius omega a b
//   [supervision] region_radius
//
// Every key is optional. An empty file gives the default XOR setup
// (m_x = 1e-4, m_w = 1e-2, theta = 33.3, ten seeds, t_max = 150).

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "xorbench.hpp"

namespace cogact {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    ExperimentSetup setup;
    std::string out_dir = "out";
    bool write_trajectories = false;
};

inline Model parse_model(const std::string& s) {
    if (s == "second") return Model::SecondOrder;
    if (s == "first") return Model::FirstOrder;
    if (s == "baseline") return Model::Baseline;
    throw ConfigError("unknown model '" + s + "' (expected second, first or baseline)");
}

namespace detail {

using Ptree = boost::property_tree::ptree;
using KeyHandler = std::function<void(ExperimentConfig&, const std::string&)>;

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T v{};
    is >> v;
    if (is.fail() || !(is >> std::ws).eof()) {
        throw ConfigError("invalid value for " + key + ": '" + text + "'");
    }
    return v;
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
}

template <class T, class Set>
KeyHandler field(const std::string& key, Set set) {
    return [key, set](ExperimentConfig& c, const std::string& text) {
        set(c, parse_value<T>(key, text));
    };
}

inline const std::map<std::string, KeyHandler>& key_table() {
    static const std::map<std::string, KeyHandler> table = [] {
        std::map<std::string, KeyHandler> t;
        auto add = [&t](const std::string& key, KeyHandler h) { t.emplace(key, std::move(h)); };

        add("experiment.model", [](ExperimentConfig& c, const std::string& s) {
            try {
                c.setup.model = parse_model(s);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("experiment.model: ") + e.what());
            }
        });
        add("experiment.n_seeds", field<std::size_t>("experiment.n_seeds",
            [](ExperimentConfig& c, std::size_t v) { c.setup.n_seeds = v; }));
        add("experiment.base_seed", field<std::uint64_t>("experiment.base_seed",
            [](ExperimentConfig& c, std::uint64_t v) { c.setup.base_seed = v; }));
        add("experiment.t_max", field<double>("experiment.t_max",
            [](ExperimentConfig& c, double v) { c.setup.integrator.t_max = v; }));
        add("experiment.dt", field<double>("experiment.dt",
            [](ExperimentConfig& c, double v) { c.setup.integrator.dt_sample = v; }));
        add("experiment.out_dir", [](ExperimentConfig& c, const std::string& s) { c.out_dir = s; });
        add("experiment.write_trajectories", field<bool>("experiment.write_trajectories",
            [](ExperimentConfig& c, bool v) { c.write_trajectories = v; }));
        add("experiment.n_region_samples", field<std::size_t>("experiment.n_region_samples",
            [](ExperimentConfig& c, std::size_t v) { c.setup.n_region_samples = v; }));
        add("experiment.init_range", field<double>("experiment.init_range",
            [](ExperimentConfig& c, double v) { c.setup.init_range = v; }));
        add("experiment.threads", field<unsigned>("experiment.threads",
            [](ExperimentConfig& c, unsigned v) { c.setup.threads = v; }));

        add("dynamics.m_x", field<double>("dynamics.m_x",
            [](ExperimentConfig& c, double v) { c.setup.dynamics.m_x = v; }));
        add("dynamics.m_w", field<double>("dynamics.m_w",
            [](ExperimentConfig& c, double v) { c.setup.dynamics.m_w = v; }));
        add("dynamics.theta", field<double>("dynamics.theta",
            [](ExperimentConfig& c, double v) { c.setup.dynamics.theta = v; }));
        add("dynamics.ramp", field<bool>("dynamics.ramp",
            [](ExperimentConfig& c, bool v) { c.setup.dynamics.ramp_potential = v; }));

        add("integrator.method", [](ExperimentConfig& c, const std::string& s) {
            if (s == "auto") {
                c.setup.auto_method = true;
                return;
            }
            c.setup.auto_method = false;
            if (s == "euler") c.setup.integrator.method = Method::ExplicitEuler;
            else if (s == "rk45") c.setup.integrator.method = Method::AdaptiveRK;
            else if (s == "trbdf2") c.setup.integrator.method = Method::ImplicitTRBDF2;
            else throw ConfigError("invalid value for integrator.method: '" + s +
                                   "' (expected auto, euler, rk45 or trbdf2)");
        });
        add("integrator.rtol", field<double>("integrator.rtol",
            [](ExperimentConfig& c, double v) { c.setup.integrator.rtol = v; }));
        add("integrator.atol", field<double>("integrator.atol",
            [](ExperimentConfig& c, double v) { c.setup.integrator.atol = v; }));
        add("integrator.stiff_threshold", field<double>("integrator.stiff_threshold",
            [](ExperimentConfig& c, double v) { c.setup.stiff_threshold = v; }));
        add("integrator.euler_substeps", field<std::size_t>("integrator.euler_substeps",
            [](ExperimentConfig& c, std::size_t v) { c.setup.integrator.euler_substeps = v; }));

        add("baseline.eta", field<double>("baseline.eta",
            [](ExperimentConfig& c, double v) { c.setup.eta = v; }));

        add("signal.u0", field<double>("signal.u0",
            [](ExperimentConfig& c, double v) { c.setup.signal.u0 = v; }));
        add("signal.v0", field<double>("signal.v0",
            [](ExperimentConfig& c, double v) { c.setup.signal.v0 = v; }));
        add("signal.radius", field<double>("signal.radius",
            [](ExperimentConfig& c, double v) { c.setup.signal.radius = v; }));
        add("signal.omega", field<double>("signal.omega",
            [](ExperimentConfig& c, double v) { c.setup.signal.omega = v; }));
        add("signal.a", field<double>("signal.a",
            [](ExperimentConfig& c, double v) { c.setup.signal.a = v; }));
        add("signal.b", field<double>("signal.b",
            [](ExperimentConfig& c, double v) { c.setup.signal.b = v; }));

        add("supervision.region_radius", field<double>("supervision.region_radius",
            [](ExperimentConfig& c, double v) { c.setup.supervision.region_radius = v; }));
        return t;
    }();
    return table;
}

inline void check_ranges(const ExperimentConfig& c) {
    const auto& s = c.setup;
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(s.signal.b > 0.0)) throw ConfigError("signal.b must be positive");
    if (!(s.signal.radius >= 0.0)) throw ConfigError("signal.radius must be non-negative");
    if (!(s.supervision.region_radius > 0.0)) {
        throw ConfigError("supervision.region_radius must be positive");
    }
    if (s.eta && !(*s.eta > 0.0)) throw ConfigError("baseline.eta must be positive");
    if (c.out_dir.empty()) throw ConfigError("experiment.out_dir must not be empty");
}

}  // namespace detail

/// Parse INI text. Throws ConfigError naming the offending key for unknown
/// keys, malformed values and out-of-range settings.
inline ExperimentConfig parse_config(std::istream& in) {
    detail::Ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
    }

    ExperimentConfig cfg;
    const auto& table = detail::key_table();
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("unknown key: " + section + " (keys must be inside a section)");
        }
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            const auto it = table.find(full);
            if (it == table.end()) {
                throw ConfigError("unknown key: " + full);
            }
            it->second(cfg, value.get_value<std::string>());
        }
    }
    detail::check_ranges(cfg);
    return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file: " + path);
    }
    return parse_config(in);
}

}  // namespace cogact
