// cogact: run, compare and inspect XOR learning experiments.
//
// Exit status: 0 success, 1 configuration or usage error, 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cogact/config.hpp"
#include "cogact/report.hpp"
#include "cogact/selftest.hpp"

namespace fs = std::filesystem;
using namespace cogact;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericError = 2;

struct Overrides {
    std::optional<std::string> out;
    std::optional<std::size_t> seeds;
    std::optional<std::uint64_t> base_seed;
    std::optional<double> t_max;
    std::optional<std::string> model;
    std::optional<unsigned> threads;
    bool trajectories = false;

    void attach(CLI::App& app) {
        app.add_option("--out", out, "Output directory");
        app.add_option("--seeds", seeds, "Number of seeds");
        app.add_option("--base-seed", base_seed, "First seed");
        app.add_option("--t-max", t_max, "Final time");
        app.add_option("--model", model, "Learner")
            ->check(CLI::IsMember({"second", "first", "baseline"}));
        app.add_option("--threads", threads, "Worker threads (0 = all cores)");
        app.add_flag("--trajectories", trajectories, "Write trajectory_<seed>.csv files");
    }

    ExperimentConfig apply(ExperimentConfig c) const {
        if (out) c.out_dir = *out;
        if (seeds) c.setup.n_seeds = *seeds;
        if (base_seed) c.setup.base_seed = *base_seed;
        if (t_max) c.setup.integrator.t_max = *t_max;
        if (model) c.setup.model = parse_model(*model);
        if (threads) c.setup.threads = *threads;
        if (trajectories) c.write_trajectories = true;
        detail::check_ranges(c);
        return c;
    }
};

ExperimentConfig load(const std::string& path, const Overrides& ov) {
    ExperimentConfig c = path.empty() ? parse_config_string("") : load_config(path);
    return ov.apply(std::move(c));
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

void print_summary(const ExperimentConfig& c, const ExperimentResult& res) {
    const Summary& s = res.summary;
    std::printf("model=%s seeds=%zu ok=%zu failed=%zu\n", to_string(c.setup.model),
                c.setup.n_seeds, s.n_ok, s.n_failed);
    std::printf("  acc   %.3f +- %.3f   loss  %.3f +- %.3f\n", s.acc.mean, s.acc.std,
                s.loss.mean, s.loss.std);
    std::printf("  acc2  %.3f +- %.3f   loss2 %.3f +- %.3f\n", s.acc2.mean, s.acc2.std,
                s.loss2.mean, s.loss2.std);
    std::printf("  |g(T)| %.3g +- %.3g\n", s.g_norm_final.mean, s.g_norm_final.std);
}

int write_run(const ExperimentConfig& c, const ExperimentResult& res) {
    const fs::path dir(c.out_dir);
    fs::create_directories(dir);
    const NetworkSpec spec = xor_network();
    {
        auto os = open_out(dir / "runs.csv");
        write_runs_csv(os, res.runs);
    }
    {
        auto os = open_out(dir / "timing.csv");
        write_timing_csv(os, res.runs);
    }
    {
        auto os = open_out(dir / "summary.json");
        os << summary_json(c, res).dump(2) << '\n';
    }
    {
        auto os = open_out(dir / "final_weights.csv");
        write_final_weights_csv(os, spec, res.runs);
    }
    if (c.write_trajectories) {
        for (const auto& r : res.runs) {
            if (!r.ok) continue;
            auto os = open_out(dir / ("trajectory_" + std::to_string(r.seed) + ".csv"));
            write_trajectory_csv(os, spec, r);
        }
    }
    for (const auto& r : res.runs) {
        if (!r.ok) std::fprintf(stderr, "warning: seed %llu failed: %s\n",
                                static_cast<unsigned long long>(r.seed), r.error.c_str());
    }
    return res.summary.n_ok == 0 ? kNumericError : kOk;
}

int cmd_run(const std::string& config, const Overrides& ov) {
    const ExperimentConfig c = load(config, ov);
    const ExperimentResult res = run_experiment(c.setup);
    print_summary(c, res);
    return write_run(c, res);
}

int cmd_compare(const std::vector<std::string>& configs, const Overrides& ov) {
    const ExperimentConfig a = load(configs.at(0), ov);
    const ExperimentConfig b = load(configs.at(1), ov);
    const auto& ia = a.setup.integrator;
    const auto& ib = b.setup.integrator;
    if (ia.dt_sample != ib.dt_sample || ia.t_max != ib.t_max ||
        a.setup.base_seed != b.setup.base_seed || a.setup.n_seeds != b.setup.n_seeds) {
        throw ConfigError("compared configs must share dt, t_max, base_seed and n_seeds");
    }
    const ExperimentResult ra = run_experiment(a.setup);
    const ExperimentResult rb = run_experiment(b.setup);
    const Comparison cmp = compare_results(ra, rb);

    const fs::path dir(ov.out.value_or(a.out_dir));
    fs::create_directories(dir);
    auto os = open_out(dir / "compare.csv");
    write_compare_csv(os, cmp);
    std::printf("max weight deviation %.17g\n", cmp.max_deviation);
    std::printf("mean per-seed max deviation %.17g\n", cmp.mean_seed_max_dev());
    return kOk;
}

int cmd_decision_map(const std::string& run_dir, const std::string& out, std::uint64_t seed,
                     std::size_t resolution) {
    const fs::path src = fs::path(run_dir) / "final_weights.csv";
    std::ifstream in(src);
    if (!in) throw ConfigError("missing run artifact: " + src.string());
    const NetworkSpec spec = xor_network();
    Vec w;
    try {
        w = read_final_weights(in, spec, seed);
    } catch (const std::exception& e) {
        throw ConfigError(src.string() + ": " + e.what());
    }
    if (resolution == 0) throw ConfigError("resolution must be at least 1");
    const fs::path dir(out.empty() ? run_dir : out);
    fs::create_directories(dir);
    auto os = open_out(dir / "decision.csv");
    write_decision_csv(os, decision_map(spec, w, resolution));
    return kOk;
}

int cmd_selftest(std::uint64_t seed, std::size_t n) {
    bool all = true;
    for (const auto& c : run_selftest(seed, n)) {
        std::printf("%-45s %s (worst %.3g)\n", c.name.c_str(), c.ok ? "PASS" : "FAIL", c.worst);
        all = all && c.ok;
    }
    return all ? kOk : kNumericError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Second-order learning dynamics on the online XOR benchmark"};
    app.require_subcommand(1);

    std::string run_config;
    Overrides run_ov;
    auto* run = app.add_subcommand("run", "Run a multi-seed experiment");
    run->add_option("--config", run_config, "INI config (defaults when omitted)");
    run_ov.attach(*run);

    std::vector<std::string> cmp_configs;
    Overrides cmp_ov;
    auto* cmp = app.add_subcommand("compare", "Run two configs and compare weight paths");
    cmp->add_option("--config", cmp_configs, "Two INI configs")->expected(2)->required();
    cmp_ov.attach(*cmp);

    std::string dm_run;
    std::string dm_out;
    std::uint64_t dm_seed = 0;
    std::size_t dm_res = 101;
    auto* dm = app.add_subcommand("decision-map", "Network output over the input square");
    dm->add_option("--run", dm_run, "Run directory holding final_weights.csv")->required();
    dm->add_option("--out", dm_out, "Output directory (defaults to the run directory)");
    dm->add_option("--seed", dm_seed, "Seed whose final weights are used");
    dm->add_option("--resolution", dm_res, "Grid points per axis");

    std::uint64_t st_seed = 1;
    std::size_t st_n = 50;
    auto* st = app.add_subcommand("selftest", "Finite-difference derivative checks");
    st->add_option("--seed", st_seed, "Random seed");
    st->add_option("--instances", st_n, "Random networks to check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) return cmd_run(run_config, run_ov);
        if (*cmp) return cmd_compare(cmp_configs, cmp_ov);
        if (*dm) return cmd_decision_map(dm_run, dm_out, dm_seed, dm_res);
        if (*st) return cmd_selftest(st_seed, st_n);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumericError;
    }
    return kOk;
}
