// Command-line front end: one subcommand per experiment.
//
//   rrlab <experiment> [--config file.toml] [--seed N] [--out DIR] [options]
//
// Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "rrlab/harness.hpp"

namespace {

using rrlab::harness::ExperimentConfig;

struct Flags {
    std::string config_file;
    std::optional<int> n;
    std::optional<std::vector<int>> n_list;
    std::optional<std::string> law;
    std::optional<std::int64_t> trials;
    std::optional<double> M;
    std::optional<std::vector<double>> M_list;
    std::optional<std::vector<double>> delta_list;
    std::optional<double> alpha;
    std::optional<int> k;
    std::optional<std::vector<double>> points;
    std::optional<double> grid_step;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> output;
    std::optional<std::int64_t> trial_cap;
    std::optional<std::int64_t> min_events;
    std::optional<std::int64_t> csv_paths;

    ExperimentConfig to_config(std::string const& experiment) const
    {
        ExperimentConfig c;
        c.experiment = experiment;
        c.n = n;
        c.n_list = n_list;
        c.law = law;
        c.trials = trials;
        c.M = M;
        c.M_list = M_list;
        c.delta_list = delta_list;
        c.alpha = alpha;
        c.k = k;
        c.points = points;
        c.grid_step = grid_step;
        c.seed = seed;
        c.workers = workers;
        c.output = output;
        c.trial_cap = trial_cap;
        c.min_events = min_events;
        c.csv_paths = csv_paths;
        return c;
    }
};

void add_flags(CLI::App& cmd, Flags& f)
{
    cmd.add_option("--config", f.config_file, "TOML config file (flags override its values)");
    cmd.add_option("--seed", f.seed, "Master seed (required here or in the config)");
    cmd.add_option("--workers", f.workers, "Worker threads; results do not depend on it");
    cmd.add_option("--out", f.output, "Output directory (default: out, or $RRLAB_OUT_DIR)");
    cmd.add_option("--n", f.n, "Polynomial degree");
    cmd.add_option("--n-list", f.n_list, "Degrees for total-count")->delimiter(',');
    cmd.add_option("--law", f.law, "rademacher | gaussian | uniform");
    cmd.add_option("--trials", f.trials, "Trials (initial batch for repulsion)");
    cmd.add_option("--M", f.M, "Window half-width");
    cmd.add_option("--M-list", f.M_list, "Windows for near-one")->delimiter(',');
    cmd.add_option("--delta-list", f.delta_list, "Half-widths for repulsion")->delimiter(',');
    cmd.add_option("--alpha", f.alpha, "Sign-probe ratio (near-one)");
    cmd.add_option("--k", f.k, "Sign-probe point count (near-one)");
    cmd.add_option("--points", f.points, "Evaluation points for covariance")->delimiter(',');
    cmd.add_option("--grid-step", f.grid_step, "Scan or grid step");
    cmd.add_option("--trial-cap", f.trial_cap, "Rare-event trial cap");
    cmd.add_option("--min-events", f.min_events, "Rare-event target count");
    cmd.add_option("--csv-paths", f.csv_paths, "Paths written to paths.csv");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Real roots of random polynomials near +-1: Monte Carlo and Kac-Rice experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(rrlab::harness::kVersion));

    Flags flags;
    std::map<CLI::App*, std::string> names;
    for (auto e : rrlab::harness::kAllExperiments) {
        std::string const name(rrlab::harness::to_string(e));
        auto* cmd = app.add_subcommand(name, "Run the " + name + " experiment");
        add_flags(*cmd, flags);
        names[cmd] = name;
    }

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    std::string experiment;
    for (auto const& [cmd, name] : names)
        if (cmd->parsed()) experiment = name;

    ExperimentConfig cfg;
    try {
        if (!flags.config_file.empty()) cfg = rrlab::harness::load_config_file(flags.config_file);
        if (cfg.experiment && *cfg.experiment != experiment)
            throw rrlab::harness::ConfigError(
                {"config file is for experiment '" + *cfg.experiment + "', not '" + experiment + "'"});
        cfg = rrlab::harness::apply_environment(cfg);
        cfg = rrlab::harness::merge(cfg, flags.to_config(experiment));
        cfg = rrlab::harness::validate(cfg);
    } catch (rrlab::harness::ConfigError const& e) {
        for (auto const& msg : e.errors()) std::cerr << "config error: " << msg << '\n';
        return 1;
    }

    try {
        auto const result = rrlab::harness::run(cfg);
        for (auto const& f : result.files) std::cout << f.string() << '\n';
        std::fprintf(stderr, "%s finished in %.2f s\n", experiment.c_str(), result.wall_time);
    } catch (std::exception const& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
