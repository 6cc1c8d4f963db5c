#pragma once

// Named experiments: configuration, validation, execution and persistence.
// Every artifact except timing.json is a pure function of the normalized
// config and the library version.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "rrlab/gauss_limit.hpp"
#include "rrlab/kac_rice.hpp"
#include "rrlab/kernel_moments.hpp"
#include "rrlab/poly_model.hpp"
#include "rrlab/pp_stats.hpp"
#include "rrlab/root_finder.hpp"

#ifndef RRLAB_VERSION
#define RRLAB_VERSION "unknown"
#endif

namespace rrlab::harness {

inline constexpr std::string_view kVersion = RRLAB_VERSION;

/// Environment variable that overrides the output directory.
inline constexpr char const* kOutputDirEnv = "RRLAB_OUT_DIR";

enum class Experiment { covariance, roots, limit_paths, kacrice_table, repulsion, near_one, independence, total_count };

inline constexpr Experiment kAllExperiments[] = {
    Experiment::covariance, Experiment::roots,     Experiment::limit_paths,  Experiment::kacrice_table,
    Experiment::repulsion,  Experiment::near_one,  Experiment::independence, Experiment::total_count,
};

inline std::string_view to_string(Experiment e)
{
    switch (e) {
    case Experiment::covariance: return "covariance";
    case Experiment::roots: return "roots";
    case Experiment::limit_paths: return "limit-paths";
    case Experiment::kacrice_table: return "kacrice-table";
    case Experiment::repulsion: return "repulsion";
    case Experiment::near_one: return "near-one";
    case Experiment::independence: return "independence";
    case Experiment::total_count: return "total-count";
    }
    return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view name)
{
    for (auto e : kAllExperiments)
        if (to_string(e) == name) return e;
    return std::nullopt;
}

/// Raw or normalized configuration. Optional fields are "not given" until
/// validate() fills the defaults that apply to the chosen experiment.
struct ExperimentConfig {
    std::optional<std::string> experiment;
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
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors))
    {
    }
    std::vector<std::string> const& errors() const { return errors_; }

private:
    static std::string join(std::vector<std::string> const& errors)
    {
        std::string s;
        for (auto const& e : errors) s += (s.empty() ? "" : "; ") + e;
        return s;
    }
    std::vector<std::string> errors_;
};

namespace detail {

enum Field : unsigned {
    f_n = 1u << 0,
    f_n_list = 1u << 1,
    f_law = 1u << 2,
    f_trials = 1u << 3,
    f_M = 1u << 4,
    f_M_list = 1u << 5,
    f_delta_list = 1u << 6,
    f_alpha_k = 1u << 7,
    f_points = 1u << 8,
    f_grid_step = 1u << 9,
    f_rare = 1u << 10,  // trial_cap, min_events
    f_csv_paths = 1u << 11,
};

// Which optional fields each experiment reads.
inline unsigned fields_used(Experiment e)
{
    switch (e) {
    case Experiment::covariance: return f_n | f_law | f_trials | f_points;
    case Experiment::roots: return f_n | f_law | f_trials | f_M | f_grid_step;
    case Experiment::limit_paths: return f_trials | f_M | f_grid_step | f_csv_paths;
    case Experiment::kacrice_table: return f_M | f_grid_step;
    case Experiment::repulsion: return f_n | f_law | f_trials | f_delta_list | f_rare;
    case Experiment::near_one: return f_n | f_law | f_trials | f_M_list | f_alpha_k;
    case Experiment::independence: return f_n | f_law | f_trials | f_M;
    case Experiment::total_count: return f_n_list | f_law | f_trials;
    }
    return 0;
}

inline double default_M(Experiment e)
{
    switch (e) {
    case Experiment::limit_paths: return 2.0;
    case Experiment::kacrice_table: return 4.0;
    case Experiment::independence: return 2.0;
    default: return 8.0;
    }
}

}  // namespace detail

/// Problems with `c`; empty when the config is valid.
inline std::vector<std::string> validation_errors(ExperimentConfig const& c)
{
    std::vector<std::string> err;
    std::optional<Experiment> e;
    if (!c.experiment)
        err.push_back("experiment is required");
    else if (!(e = parse_experiment(*c.experiment)))
        err.push_back("unknown experiment '" + *c.experiment + "'");
    if (!c.seed) err.push_back("seed is required");
    if (c.workers && *c.workers < 1) err.push_back("workers must be >= 1");
    if (c.output && c.output->empty()) err.push_back("output must not be empty");
    if (!e) return err;

    unsigned const used = detail::fields_used(*e);
    auto reject = [&](bool given, unsigned field, char const* name) {
        if (given && !(used & field))
            err.push_back(std::string(name) + " is not used by experiment " + std::string(to_string(*e)));
    };
    reject(c.n.has_value(), detail::f_n, "n");
    reject(c.n_list.has_value(), detail::f_n_list, "n_list");
    reject(c.law.has_value(), detail::f_law, "law");
    reject(c.trials.has_value(), detail::f_trials, "trials");
    reject(c.M.has_value(), detail::f_M, "M");
    reject(c.M_list.has_value(), detail::f_M_list, "M_list");
    reject(c.delta_list.has_value(), detail::f_delta_list, "delta_list");
    reject(c.alpha.has_value() || c.k.has_value(), detail::f_alpha_k, "alpha/k");
    reject(c.points.has_value(), detail::f_points, "points");
    reject(c.grid_step.has_value(), detail::f_grid_step, "grid_step");
    reject(c.trial_cap.has_value() || c.min_events.has_value(), detail::f_rare, "trial_cap/min_events");
    reject(c.csv_paths.has_value(), detail::f_csv_paths, "csv_paths");

    int const n = c.n.value_or(2000);
    if (c.n && *c.n < 1) err.push_back("n must be >= 1");
    if (c.trials && *c.trials < 1) err.push_back("trials must be positive");
    if (c.law && !parse_law(*c.law)) err.push_back("unknown law '" + *c.law + "'");
    if (c.grid_step && !(*c.grid_step > 0.0 && *c.grid_step <= 0.5)) err.push_back("grid_step must lie in (0, 0.5]");
    if (c.M) {
        if (!(*c.M > 0.0)) err.push_back("M must be positive");
        if ((used & detail::f_n) && *c.M > 0.5 * n) err.push_back("M must not exceed n/2");
    }
    if (c.M_list) {
        if (c.M_list->empty()) err.push_back("M_list must not be empty");
        for (double M : *c.M_list) {
            if (!(M >= 0.0)) err.push_back("M_list entries must be >= 0");
            if (M > 0.5 * n) err.push_back("M_list entries must not exceed n/2");
        }
    }
    if (c.delta_list) {
        if (c.delta_list->size() < 3) err.push_back("delta_list needs at least 3 entries");
        for (double d : *c.delta_list)
            if (!(d > 0.0 && d <= 0.5 * n)) err.push_back("delta_list entries must lie in (0, n/2]");
    }
    if (c.alpha.has_value() != c.k.has_value()) err.push_back("alpha and k must be given together");
    if (c.alpha && c.k) {
        if (!(*c.alpha >= 1.0)) err.push_back("alpha must be >= 1");
        if (*c.k < 1) err.push_back("k must be >= 1");
        else if (std::pow(*c.alpha, *c.k - 1) > n) err.push_back("alpha^(k-1) must not exceed n");
    }
    if (c.points) {
        if (c.points->empty()) err.push_back("points must not be empty");
        for (double x : *c.points)
            if (!(std::abs(x) <= 0.5 * n)) err.push_back("points must lie in [-n/2, n/2]");
    }
    if (c.n_list) {
        if (c.n_list->empty()) err.push_back("n_list must not be empty");
        for (int m : *c.n_list)
            if (m < 1 || m > kMaxExactDegree) err.push_back("n_list entries must lie in [1, 200]");
    }
    if (*e == Experiment::total_count && c.law && parse_law(*c.law) != CoefficientLaw::rademacher)
        err.push_back("total-count needs the rademacher law");
    if (c.trial_cap && *c.trial_cap < 1) err.push_back("trial_cap must be positive");
    if (c.min_events && *c.min_events < 1) err.push_back("min_events must be positive");
    if (c.trial_cap && *c.trial_cap < c.trials.value_or(10000)) err.push_back("trial_cap must be >= trials");
    if (c.csv_paths && *c.csv_paths < 0) err.push_back("csv_paths must be >= 0");
    if (*e == Experiment::limit_paths && c.M) {
        double const ratio = *c.M / c.grid_step.value_or(0.01);
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) err.push_back("M / grid_step must be an integer");
    }
    return err;
}

/// Checks `c` and fills every default that applies to its experiment.
inline ExperimentConfig validate(ExperimentConfig c)
{
    if (auto err = validation_errors(c); !err.empty()) throw ConfigError(std::move(err));
    auto const e = *parse_experiment(*c.experiment);
    unsigned const used = detail::fields_used(e);
    if (!c.workers) c.workers = 1;
    if (!c.output) c.output = "out";
    if (used & detail::f_n && !c.n) c.n = 2000;
    if (used & detail::f_law && !c.law) c.law = "rademacher";
    if (c.law) c.law = std::string(to_string(*parse_law(*c.law)));
    if (used & detail::f_trials && !c.trials) c.trials = 10000;
    if (used & detail::f_M && !c.M) c.M = detail::default_M(e);
    if (used & detail::f_grid_step && !c.grid_step) c.grid_step = 0.01;
    if (used & detail::f_points && !c.points) c.points = std::vector<double>{-2, -1, 0, 1, 2};
    if (used & detail::f_delta_list && !c.delta_list) c.delta_list = std::vector<double>{0.8, 0.4, 0.2, 0.1};
    if (used & detail::f_M_list && !c.M_list) c.M_list = std::vector<double>{0, 1, 2, 4, 8, 16, 32, 64};
    if (used & detail::f_n_list && !c.n_list) c.n_list = std::vector<int>{50, 100, 200};
    if (used & detail::f_rare) {
        if (!c.trial_cap) c.trial_cap = 20000000;
        if (!c.min_events) c.min_events = 20;
    }
    if (used & detail::f_csv_paths && !c.csv_paths) c.csv_paths = 1000;
    // Defaults can still collide with given values (e.g. M = 8 with a small n).
    if (auto err = validation_errors(c); !err.empty()) throw ConfigError(std::move(err));
    return c;
}

inline nlohmann::ordered_json to_json(ExperimentConfig const& c)
{
    nlohmann::ordered_json j;
    auto put = [&](char const* key, auto const& opt) {
        if (opt) j[key] = *opt;
    };
    put("experiment", c.experiment);
    put("n", c.n);
    put("n_list", c.n_list);
    put("law", c.law);
    put("trials", c.trials);
    put("M", c.M);
    put("M_list", c.M_list);
    put("delta_list", c.delta_list);
    put("alpha", c.alpha);
    put("k", c.k);
    put("points", c.points);
    put("grid_step", c.grid_step);
    put("seed", c.seed);
    put("workers", c.workers);
    put("output", c.output);
    put("trial_cap", c.trial_cap);
    put("min_events", c.min_events);
    put("csv_paths", c.csv_paths);
    return j;
}

namespace detail {

template <typename T>
std::optional<std::vector<T>> toml_array(toml::node_view<toml::node const> node, std::string const& key,
                                         std::vector<std::string>& err)
{
    if (!node) return std::nullopt;
    auto const* arr = node.as_array();
    if (!arr) {
        err.push_back(key + " must be an array");
        return std::nullopt;
    }
    std::vector<T> out;
    for (auto const& el : *arr) {
        if (auto v = el.template value<T>())
            out.push_back(*v);
        else
            err.push_back(key + " has a non-numeric entry");
    }
    return out;
}

}  // namespace detail

/// Reads a TOML config. Keys live at top level or in an [experiment] table;
/// `experiment` may be given as `name` inside that table.
inline ExperimentConfig parse_config_toml(std::string_view text, std::string_view source = "config")
{
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (toml::parse_error const& e) {
        throw ConfigError({std::string("TOML parse error: ") + std::string(e.description())});
    }
    toml::table const* t = &root;
    std::optional<std::string> table_name;
    if (auto const* sub = root["experiment"].as_table()) {
        t = sub;
        if (auto name = (*sub)["name"].value<std::string>()) table_name = *name;
    }
    std::vector<std::string> err;
    static constexpr std::string_view known[] = {"experiment", "name",   "n",         "n_list",   "law",
                                                 "trials",     "M",      "M_list",    "delta_list", "alpha",
                                                 "k",          "points", "grid_step", "seed",     "workers",
                                                 "output",     "trial_cap", "min_events", "csv_paths"};
    for (auto const& [key, _] : *t)
        if (std::find(std::begin(known), std::end(known), key.str()) == std::end(known))
            err.push_back("unknown key '" + std::string(key.str()) + "'");

    ExperimentConfig c;
    auto view = toml::node_view<toml::node const>(t);
    c.experiment = table_name;
    if (!c.experiment) c.experiment = view["experiment"].value<std::string>();
    auto integer = [&](char const* key) -> std::optional<std::int64_t> {
        auto node = view[key];
        if (!node) return std::nullopt;
        if (auto v = node.value_exact<std::int64_t>()) return *v;
        err.push_back(std::string(key) + " must be an integer");
        return std::nullopt;
    };
    auto real = [&](char const* key) -> std::optional<double> {
        auto node = view[key];
        if (!node) return std::nullopt;
        if (auto v = node.value<double>()) return *v;
        err.push_back(std::string(key) + " must be a number");
        return std::nullopt;
    };
    if (auto v = integer("n")) c.n = static_cast<int>(*v);
    c.n_list = detail::toml_array<int>(view["n_list"], "n_list", err);
    c.law = view["law"].value<std::string>();
    c.trials = integer("trials");
    c.M = real("M");
    c.M_list = detail::toml_array<double>(view["M_list"], "M_list", err);
    c.delta_list = detail::toml_array<double>(view["delta_list"], "delta_list", err);
    c.alpha = real("alpha");
    if (auto v = integer("k")) c.k = static_cast<int>(*v);
    c.points = detail::toml_array<double>(view["points"], "points", err);
    c.grid_step = real("grid_step");
    if (auto v = integer("seed")) {
        if (*v < 0)
            err.push_back("seed must be non-negative");
        else
            c.seed = static_cast<std::uint64_t>(*v);
    }
    if (auto v = integer("workers")) c.workers = static_cast<int>(*v);
    c.output = view["output"].value<std::string>();
    c.trial_cap = integer("trial_cap");
    c.min_events = integer("min_events");
    c.csv_paths = integer("csv_paths");
    if (!err.empty()) throw ConfigError(std::move(err));
    return c;
}

inline ExperimentConfig load_config_file(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_toml(ss.str(), path.string());
}

/// Fields set in `over` replace those in `base`.
inline ExperimentConfig merge(ExperimentConfig base, ExperimentConfig const& over)
{
    auto take = [](auto& dst, auto const& src) {
        if (src) dst = src;
    };
    take(base.experiment, over.experiment);
    take(base.n, over.n);
    take(base.n_list, over.n_list);
    take(base.law, over.law);
    take(base.trials, over.trials);
    take(base.M, over.M);
    take(base.M_list, over.M_list);
    take(base.delta_list, over.delta_list);
    take(base.alpha, over.alpha);
    take(base.k, over.k);
    take(base.points, over.points);
    take(base.grid_step, over.grid_step);
    take(base.seed, over.seed);
    take(base.workers, over.workers);
    take(base.output, over.output);
    take(base.trial_cap, over.trial_cap);
    take(base.min_events, over.min_events);
    take(base.csv_paths, over.csv_paths);
    return base;
}

/// Applies the output-directory environment override, if set.
inline ExperimentConfig apply_environment(ExperimentConfig c)
{
    if (char const* dir = std::getenv(kOutputDirEnv); dir && *dir) c.output = std::string(dir);
    return c;
}

// ---------------------------------------------------------------------------
// Output

/// CSV writer; doubles are printed with %.17g so files round-trip exactly.
class CsvWriter {
public:
    CsvWriter(std::filesystem::path const& path, std::vector<std::string> const& header) : out_(path)
    {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    template <typename... Ts>
    void row(Ts const&... values)
    {
        bool first = true;
        ((out_ << (first ? "" : ",") << format(values), first = false), ...);
        out_ << '\n';
    }

    void close()
    {
        out_.close();
        if (!out_) throw std::runtime_error("write failed");
    }

private:
    static std::string format(double v)
    {
        if (std::isnan(v)) return "nan";
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
    static std::string format(std::string const& s) { return s; }
    static std::string format(char const* s) { return s; }
    template <typename T>
    static std::string format(T v)
        requires std::is_integral_v<T>
    {
        return std::to_string(v);
    }

    std::ofstream out_;
};

inline nlohmann::ordered_json to_json(Estimate const& e)
{
    nlohmann::ordered_json j;
    j["value"] = e.value;
    j["se"] = e.se;
    return j;
}

inline int side_number(Side s) { return static_cast<int>(s); }

struct RunResult {
    nlohmann::ordered_json summary;
    std::vector<std::filesystem::path> files;
    double wall_time = 0.0;
};

namespace detail {

struct Context {
    ExperimentConfig const& cfg;
    std::filesystem::path dir;
    std::uint64_t seed;
    unsigned workers;
    nlohmann::ordered_json estimates;
    std::vector<std::filesystem::path> files;

    std::filesystem::path file(std::string const& name)
    {
        files.push_back(dir / name);
        return files.back();
    }
    CoefficientLaw law() const { return *parse_law(*cfg.law); }
    std::size_t trials() const { return static_cast<std::size_t>(*cfg.trials); }
};

inline void write_roots_csv(Context& ctx, std::span<RootPointSet const> sets)
{
    CsvWriter csv(ctx.file("roots.csv"), {"trial", "side", "x", "certified"});
    for (auto const& s : sets)
        for (std::size_t i = 0; i < s.points.size(); ++i)
            csv.row(s.trial, side_number(s.side), s.points[i], static_cast<int>(s.certified[i]));
    csv.close();
}

inline nlohmann::ordered_json counts_json(IntervalCounts const& c)
{
    nlohmann::ordered_json j;
    j["side"] = side_number(c.side);
    j["interval"] = {c.interval.lo, c.interval.hi};
    j["histogram"] = c.histogram;
    j["mean"] = to_json(c.mean);
    j["variance"] = to_json(c.variance);
    j["factorial2"] = to_json(c.factorial2);
    j["p_at_least_two"] = to_json(c.p_at_least_two);
    auto const theory = expected_count(c.interval);
    j["kac_rice_mean"] = theory.value;
    j["mean_z"] = c.mean.se > 0 ? (c.mean.value - theory.value) / c.mean.se : 0.0;
    return j;
}

inline nlohmann::ordered_json ensemble_flags(std::span<RootPointSet const> sets)
{
    std::size_t uncertified = 0, points = 0;
    long tangencies = 0;
    for (auto const& s : sets) {
        points += s.points.size();
        tangencies += s.unresolved_tangencies;
        for (auto c : s.certified) uncertified += c == 0;
    }
    return {{"points", points}, {"uncertified_points", uncertified}, {"unresolved_tangencies", tangencies}};
}

inline void run_covariance(Context& ctx)
{
    auto const& xs = *ctx.cfg.points;
    std::vector<EvalPoint> pts;
    for (Side side : {Side::plus, Side::minus})
        for (int order : {0, 1})
            for (double x : xs) pts.push_back({x, order, side});
    auto const est = empirical_cov(*ctx.cfg.n, ctx.law(), ctx.trials(), ctx.seed, pts, ctx.workers);

    CsvWriter csv(ctx.file("covariance.csv"),
                  {"side_a", "order_a", "x_a", "side_b", "order_b", "x_b", "cov", "se", "theory", "z"});
    double max_same = 0.0, max_cross = 0.0;
    KernelMoments const km;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (std::size_t b = a; b < pts.size(); ++b) {
            bool const same = pts[a].side == pts[b].side;
            double const theory = same ? km.cov(pts[a].order, pts[b].order, pts[a].x, pts[b].x) : 0.0;
            auto const ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
            double const se = est.se(ia, ib);
            double const z = se > 0 ? (est.cov(ia, ib) - theory) / se : 0.0;
            (same ? max_same : max_cross) = std::max(same ? max_same : max_cross, std::abs(z));
            csv.row(side_number(pts[a].side), pts[a].order, pts[a].x, side_number(pts[b].side), pts[b].order, pts[b].x,
                    est.cov(ia, ib), se, theory, z);
        }
    }
    csv.close();
    ctx.estimates["samples"] = est.samples;
    ctx.estimates["max_abs_z_same_side"] = max_same;
    ctx.estimates["max_abs_z_cross_side"] = max_cross;
}

inline void run_roots(Context& ctx)
{
    RootFinderOptions opt;
    opt.grid_step = *ctx.cfg.grid_step;
    Side const sides[] = {Side::plus, Side::minus};
    auto const sets = scaled_root_ensemble(*ctx.cfg.n, ctx.law(), ctx.trials(), *ctx.cfg.M, sides, ctx.seed, opt,
                                           ctx.workers);
    write_roots_csv(ctx, sets);
    double const M = *ctx.cfg.M;
    std::vector<Interval> intervals{{-M, M}};
    if (M > 1.0) intervals.insert(intervals.begin(), Interval{-1.0, 1.0});
    auto const s = summarize(sets, intervals);
    for (auto const& c : s.counts) ctx.estimates["counts"].push_back(counts_json(c));
    for (auto const& c : s.cross_side)
        ctx.estimates["cross_side_corr"].push_back({{"interval", {c.interval.lo, c.interval.hi}}, {"corr", to_json(c.corr)}});
    ctx.estimates["flags"] = ensemble_flags(sets);
}

inline void run_limit_paths(Context& ctx)
{
    GridSpec const grid{*ctx.cfg.M, *ctx.cfg.grid_step, true};
    GaussianPathSampler const sampler(grid);
    auto const sets = parallel_map<RootPointSet>(ctx.trials(), ctx.workers, [&](std::size_t t) {
        auto set = roots_of_path(sampler.sample(ctx.seed, t));
        set.window = grid.M;
        return set;
    });
    auto const keep = std::min<std::size_t>(ctx.trials(), static_cast<std::size_t>(*ctx.cfg.csv_paths));
    CsvWriter paths(ctx.file("paths.csv"), {"path_id", "node", "value"});
    for (std::size_t t = 0; t < keep; ++t) {
        auto const path = sampler.sample(ctx.seed, t);
        for (std::size_t i = 0; i < path.values.size(); ++i) paths.row(t, grid.node(i), path.values[i]);
    }
    paths.close();
    write_roots_csv(ctx, sets);

    std::vector<Interval> intervals{{-grid.M, grid.M}};
    if (grid.M > 1.0) intervals.insert(intervals.begin(), Interval{-1.0, 1.0});
    auto const s = summarize(sets, intervals);
    for (auto const& c : s.counts) {
        auto j = counts_json(c);
        auto const f2 = second_factorial_moment(c.interval);
        j["kac_rice_factorial2"] = f2.value;
        j["factorial2_z"] = c.factorial2.se > 0 ? (c.factorial2.value - f2.value) / c.factorial2.se : 0.0;
        ctx.estimates["counts"].push_back(j);
    }
    ctx.estimates["flags"] = ensemble_flags(sets);
    ctx.estimates["factor_rank"] = sampler.factor().cols();
    ctx.estimates["jitter"] = sampler.jitter();
    ctx.estimates["paths_in_csv"] = keep;
}

inline void run_kacrice_table(Context& ctx)
{
    double const M = *ctx.cfg.M, h = *ctx.cfg.grid_step;
    auto const nodes = static_cast<long>(std::floor(M / h + 1e-9));
    CsvWriter rho1(ctx.file("intensity.csv"), {"x", "rho1"});
    for (long i = -nodes; i <= nodes; ++i) rho1.row(static_cast<double>(i) * h, intensity(static_cast<double>(i) * h));
    rho1.close();
    // The pair table uses at most 81 x 81 points.
    double const hp = std::max(h, M / 40.0);
    auto const pn = static_cast<long>(std::floor(M / hp + 1e-9));
    CsvWriter rho2(ctx.file("pair.csv"), {"x", "y", "rho2"});
    for (long i = -pn; i <= pn; ++i)
        for (long j = -pn; j <= pn; ++j) {
            double const x = static_cast<double>(i) * hp, y = static_cast<double>(j) * hp;
            rho2.row(x, y, pair_intensity(x, y));
        }
    rho2.close();
    auto const e = expected_count(M);
    ctx.estimates["intensity_at_zero"] = intensity(0.0);
    ctx.estimates["expected_count"] = {{"value", e.value}, {"error", e.error}};
    auto const f2 = second_factorial_moment({-1.0, 1.0});
    ctx.estimates["second_factorial_moment_unit"] = {{"value", f2.value}, {"error", f2.error}};
}

inline void run_repulsion(Context& ctx)
{
    auto const& deltas = *ctx.cfg.delta_list;
    EscalationPolicy policy;
    policy.initial_trials = ctx.trials();
    policy.trial_cap = static_cast<std::size_t>(*ctx.cfg.trial_cap);
    policy.min_events = static_cast<std::size_t>(*ctx.cfg.min_events);

    struct Family {
        char const* name;
        std::vector<ExceedanceRow> rows;
    };
    std::vector<Family> families{{"limit_paths", {}}, {"polynomial", {}}, {"poisson_null", {}}};
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        std::uint64_t const s = sweep_seed(ctx.seed, i);
        families[0].rows.push_back(path_exceedance(deltas[i], s, policy, ctx.workers));
        families[1].rows.push_back(polynomial_exceedance(*ctx.cfg.n, ctx.law(), deltas[i], s, policy, ctx.workers));
        families[2].rows.push_back(poisson_exceedance(deltas[i], s, policy, ctx.workers));
    }
    CsvWriter csv(ctx.file("exceedance.csv"),
                  {"family", "delta", "trials", "events", "p", "se", "censored", "kac_rice_factorial2", "poisson_p"});
    std::vector<double> f2(deltas.size()), pp(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        f2[i] = second_factorial_moment({-deltas[i], deltas[i]}).value;
        pp[i] = poisson_null({-deltas[i], deltas[i]}).p_more_than_one;
    }
    for (auto const& f : families)
        for (std::size_t i = 0; i < f.rows.size(); ++i) {
            auto const& r = f.rows[i];
            csv.row(std::string(f.name), r.delta, r.trials, r.events, r.p.value, r.p.se, static_cast<int>(r.censored),
                    f2[i], pp[i]);
        }
    csv.close();

    for (auto const& f : families) {
        nlohmann::ordered_json j;
        try {
            auto const fit = repulsion_slope(f.rows);
            j["slope"] = fit.slope;
            j["se"] = fit.se;
            j["ci"] = {fit.ci_lo, fit.ci_hi};
            j["dropped_deltas"] = fit.dropped_deltas;
        } catch (std::invalid_argument const& e) {
            j["error"] = e.what();
        }
        bool censored = false;
        for (auto const& r : f.rows) censored = censored || r.censored;
        j["censored"] = censored;
        ctx.estimates["slopes"][f.name] = j;
    }
    // Ratio at the smallest delta.
    std::size_t const last = static_cast<std::size_t>(
        std::min_element(deltas.begin(), deltas.end()) - deltas.begin());
    auto ratio = [&](std::size_t fam) {
        double const den = families[2].rows[last].p.value;
        return den > 0 ? families[fam].rows[last].p.value / den : std::numeric_limits<double>::quiet_NaN();
    };
    ctx.estimates["smallest_delta"] = deltas[last];
    ctx.estimates["ratio_to_poisson"] = {{"limit_paths", ratio(0)}, {"polynomial", ratio(1)}};
}

inline void run_near_one(Context& ctx)
{
    auto const rows = root_near_one_curve(*ctx.cfg.n, ctx.law(), ctx.trials(), *ctx.cfg.M_list, ctx.seed, ctx.workers);
    CsvWriter csv(ctx.file("near_one.csv"), {"M", "trials", "empty", "p_no_root", "se"});
    bool monotone = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto const& r = rows[i];
        csv.row(r.M, r.trials, r.empty, r.p_no_root.value, r.p_no_root.se);
        ctx.estimates["curve"].push_back({{"M", r.M}, {"p_no_root", to_json(r.p_no_root)}});
        for (std::size_t j = 0; j < i; ++j)
            if (rows[j].M <= r.M && r.p_no_root.value > rows[j].p_no_root.value + 1e-15) monotone = false;
    }
    csv.close();
    ctx.estimates["monotone"] = monotone;
    if (ctx.cfg.alpha && ctx.cfg.k) {
        auto const sp = sign_pattern_probe(*ctx.cfg.n, ctx.law(), ctx.trials(), *ctx.cfg.alpha, *ctx.cfg.k,
                                           sweep_seed(ctx.seed, 1), ctx.workers);
        ctx.estimates["sign_pattern"] = {{"alpha", sp.alpha},
                                         {"k", sp.k},
                                         {"p_same_sign", to_json(sp.p)},
                                         {"iid_baseline", sp.iid_baseline},
                                         {"bound", sp.bound}};
    }
}

inline void run_independence(Context& ctx)
{
    Side const sides[] = {Side::plus, Side::minus};
    double const M = *ctx.cfg.M;
    auto const sets = scaled_root_ensemble(*ctx.cfg.n, ctx.law(), ctx.trials(), M, sides, ctx.seed, {}, ctx.workers);
    CsvWriter csv(ctx.file("counts.csv"), {"trial", "plus_count", "minus_count"});
    for (std::size_t t = 0; t < ctx.trials(); ++t)
        csv.row(t, sets[2 * t].points.size(), sets[2 * t + 1].points.size());
    csv.close();
    Interval const I{-M, M};
    auto const s = summarize(sets, std::span<Interval const>(&I, 1));
    auto const c = cross_side_independence(s, I);
    ctx.estimates["interval"] = {I.lo, I.hi};
    ctx.estimates["corr"] = to_json(c.corr);
    ctx.estimates["abs_corr_over_se"] = c.corr.se > 0 ? std::abs(c.corr.value) / c.corr.se : 0.0;
    for (auto const& cc : s.counts) ctx.estimates["counts"].push_back(counts_json(cc));
    ctx.estimates["flags"] = ensemble_flags(sets);
}

inline void run_total_count(Context& ctx)
{
    auto const rows = expected_total_roots_check(*ctx.cfg.n_list, ctx.law(), ctx.trials(), ctx.seed, ctx.workers);
    CsvWriter csv(ctx.file("total_count.csv"), {"n", "trials", "mean", "se", "asymptotic", "ratio"});
    for (auto const& r : rows) {
        csv.row(r.n, r.trials, r.mean.value, r.mean.se, r.asymptotic, r.ratio);
        ctx.estimates["rows"].push_back(
            {{"n", r.n}, {"mean", to_json(r.mean)}, {"asymptotic", r.asymptotic}, {"ratio", r.ratio}});
    }
    csv.close();
}

}  // namespace detail

/// Runs a validated config, writing CSV files, summary.json and timing.json
/// into the output directory. Wall time lives only in timing.json so that
/// the remaining artifacts are byte-identical across runs.
inline RunResult run(ExperimentConfig const& config)
{
    auto const cfg = validate(config);
    auto const start = std::chrono::steady_clock::now();
    std::filesystem::path const dir(*cfg.output);
    std::filesystem::create_directories(dir);

    detail::Context ctx{cfg, dir, *cfg.seed, static_cast<unsigned>(*cfg.workers), nlohmann::ordered_json::object(), {}};
    switch (*parse_experiment(*cfg.experiment)) {
    case Experiment::covariance: detail::run_covariance(ctx); break;
    case Experiment::roots: detail::run_roots(ctx); break;
    case Experiment::limit_paths: detail::run_limit_paths(ctx); break;
    case Experiment::kacrice_table: detail::run_kacrice_table(ctx); break;
    case Experiment::repulsion: detail::run_repulsion(ctx); break;
    case Experiment::near_one: detail::run_near_one(ctx); break;
    case Experiment::independence: detail::run_independence(ctx); break;
    case Experiment::total_count: detail::run_total_count(ctx); break;
    }

    RunResult result;
    result.summary["config"] = to_json(cfg);
    result.summary["version"] = std::string(kVersion);
    result.summary["timing_file"] = "timing.json";
    result.summary["estimates"] = ctx.estimates;
    {
        std::ofstream out(ctx.file("summary.json"));
        out << result.summary.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write summary.json");
    }
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    {
        std::ofstream out(ctx.file("timing.json"));
        out << nlohmann::ordered_json{{"wall_time_s", result.wall_time}, {"workers", *cfg.workers}}.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write timing.json");
    }
    result.files = ctx.files;
    return result;
}

}  // namespace rrlab::harness
