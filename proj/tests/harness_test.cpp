#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>

#include <gtest/gtest.h>

#include "rrlab/harness.hpp"

namespace fs = std::filesystem;
using namespace rrlab::harness;

namespace {

fs::path scratch_dir(std::string const& name)
{
    auto const dir = fs::temp_directory_path() / ("rrlab_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool has_error(ConfigError const& e, std::string const& fragment)
{
    for (auto const& m : e.errors())
        if (m.find(fragment) != std::string::npos) return true;
    return false;
}

ExperimentConfig small_covariance(fs::path const& dir, int workers)
{
    ExperimentConfig c;
    c.experiment = "covariance";
    c.seed = 7;
    c.n = 200;
    c.trials = 500;
    c.points = std::vector<double>{-1, 0, 1};
    c.workers = workers;
    c.output = dir.string();
    return c;
}

int run_cli(std::string const& args)
{
    std::string const cmd = std::string(RRLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int const status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Validate, MissingSeed)
{
    ExperimentConfig c;
    c.experiment = "roots";
    try {
        validate(c);
        FAIL() << "expected ConfigError";
    } catch (ConfigError const& e) {
        EXPECT_TRUE(has_error(e, "seed is required"));
    }
}

TEST(Validate, WindowWiderThanHalfDegree)
{
    ExperimentConfig c;
    c.experiment = "roots";
    c.seed = 1;
    c.n = 10;
    c.M = 6;
    try {
        validate(c);
        FAIL() << "expected ConfigError";
    } catch (ConfigError const& e) {
        EXPECT_TRUE(has_error(e, "M must not exceed n/2"));
    }
    c.M.reset();
    // The default M = 8 also collides with n = 10.
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(Validate, FieldsForeignToExperiment)
{
    ExperimentConfig c;
    c.experiment = "kacrice-table";
    c.seed = 1;
    c.law = "gaussian";
    try {
        validate(c);
        FAIL() << "expected ConfigError";
    } catch (ConfigError const& e) {
        EXPECT_TRUE(has_error(e, "law is not used"));
    }
}

TEST(Validate, OtherContradictions)
{
    ExperimentConfig c;
    c.experiment = "near-one";
    c.seed = 1;
    c.alpha = 4.0;
    EXPECT_THROW(validate(c), ConfigError);
    c.k = 20;
    EXPECT_THROW(validate(c), ConfigError);  // 4^19 > n
    c.k = 5;
    EXPECT_NO_THROW(validate(c));

    ExperimentConfig r;
    r.experiment = "repulsion";
    r.seed = 1;
    r.delta_list = std::vector<double>{0.4, 0.2};
    EXPECT_THROW(validate(r), ConfigError);

    ExperimentConfig t;
    t.experiment = "total-count";
    t.seed = 1;
    t.law = "gaussian";
    EXPECT_THROW(validate(t), ConfigError);
    t.law.reset();
    t.n_list = std::vector<int>{300};
    EXPECT_THROW(validate(t), ConfigError);

    ExperimentConfig u;
    u.experiment = "no-such-thing";
    u.seed = 1;
    EXPECT_THROW(validate(u), ConfigError);
}

TEST(Validate, Defaults)
{
    ExperimentConfig c;
    c.experiment = "limit-paths";
    c.seed = 3;
    auto const v = validate(c);
    EXPECT_EQ(*v.grid_step, 0.01);
    EXPECT_EQ(*v.workers, 1);
    EXPECT_EQ(*v.trials, 10000);
    EXPECT_FALSE(v.n.has_value());

    ExperimentConfig r;
    r.experiment = "roots";
    r.seed = 3;
    r.law = "standard_gaussian";
    auto const w = validate(r);
    EXPECT_EQ(*w.n, 2000);
    EXPECT_EQ(*w.law, "gaussian");
    EXPECT_EQ(*w.M, 8.0);
}

TEST(ConfigFile, TomlTopLevelAndTable)
{
    auto const a = parse_config_toml("experiment = \"roots\"\nseed = 5\nn = 400\nM = 4.0\nlaw = \"uniform\"\n");
    EXPECT_EQ(*a.experiment, "roots");
    EXPECT_EQ(*a.seed, 5u);
    EXPECT_EQ(*a.n, 400);
    EXPECT_EQ(*a.M, 4.0);

    auto const b = parse_config_toml("[experiment]\nname = \"repulsion\"\nseed = 9\ndelta_list = [0.8, 0.4, 0.2]\n");
    EXPECT_EQ(*b.experiment, "repulsion");
    EXPECT_EQ(b.delta_list->size(), 3u);

    // Integers are accepted where reals are expected.
    auto const c = parse_config_toml("experiment = \"roots\"\nseed = 1\nM = 4\n");
    EXPECT_EQ(*c.M, 4.0);

    EXPECT_THROW(parse_config_toml("experiment = \"roots\"\nsede = 1\n"), ConfigError);
    EXPECT_THROW(parse_config_toml("experiment = \n"), ConfigError);
    EXPECT_THROW(parse_config_toml("seed = \"seven\"\n"), ConfigError);
}

TEST(ConfigFile, MergeAndEnvironment)
{
    auto base = parse_config_toml("experiment = \"roots\"\nseed = 5\nn = 400\noutput = \"from_file\"\n");
    ::setenv(kOutputDirEnv, "from_env", 1);
    auto env = apply_environment(base);
    ::unsetenv(kOutputDirEnv);
    EXPECT_EQ(*env.output, "from_env");

    ExperimentConfig flags;
    flags.n = 800;
    flags.output = "from_flag";
    auto const merged = merge(env, flags);
    EXPECT_EQ(*merged.n, 800);
    EXPECT_EQ(*merged.output, "from_flag");
    EXPECT_EQ(*merged.seed, 5u);
}

TEST(Run, CovarianceOutputsAreByteIdentical)
{
    auto const dir = scratch_dir("cov");
    auto snapshot = [&](int workers) {
        fs::remove_all(dir);
        auto const r = run(small_covariance(dir, workers));
        return std::tuple{slurp(dir / "covariance.csv"), slurp(dir / "summary.json"), r};
    };
    auto const [csv1, sum1, r1] = snapshot(1);
    auto const [csv2, sum2, r2] = snapshot(1);
    auto const [csv3, sum3, r3] = snapshot(3);
    EXPECT_FALSE(csv1.empty());
    EXPECT_EQ(csv1, csv2);
    EXPECT_EQ(sum1, sum2);
    EXPECT_EQ(csv1, csv3);
    EXPECT_EQ(r1.summary["estimates"], r3.summary["estimates"]);
    EXPECT_TRUE(fs::exists(dir / "timing.json"));
    EXPECT_TRUE(r1.summary["estimates"].contains("max_abs_z_same_side"));
    auto const summary = nlohmann::json::parse(sum1);
    EXPECT_EQ(summary["config"]["seed"], 7);
    EXPECT_EQ(summary["version"], std::string(kVersion));
}

TEST(Run, KacRiceTableFiles)
{
    auto const dir = scratch_dir("kr");
    ExperimentConfig c;
    c.experiment = "kacrice-table";
    c.seed = 1;
    c.M = 1.0;
    c.grid_step = 0.25;
    c.output = dir.string();
    auto const r = run(c);
    auto const intensity_csv = slurp(dir / "intensity.csv");
    EXPECT_EQ(intensity_csv.substr(0, intensity_csv.find('\n')), "x,rho1");
    auto const pair_csv = slurp(dir / "pair.csv");
    EXPECT_EQ(pair_csv.substr(0, pair_csv.find('\n')), "x,y,rho2");
    EXPECT_EQ(std::count(intensity_csv.begin(), intensity_csv.end(), '\n'), 1 + 9);
    EXPECT_NEAR(r.summary["estimates"]["expected_count"]["value"].get<double>(), 0.178022453876, 1e-9);
}

TEST(Run, RootsAndTotalCount)
{
    auto const dir = scratch_dir("roots");
    ExperimentConfig c;
    c.experiment = "roots";
    c.seed = 2;
    c.n = 300;
    c.M = 2;
    c.trials = 50;
    c.output = dir.string();
    run(c);
    auto const csv = slurp(dir / "roots.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "trial,side,x,certified");

    auto const dir2 = scratch_dir("total");
    ExperimentConfig t;
    t.experiment = "total-count";
    t.seed = 2;
    t.n_list = std::vector<int>{10, 20};
    t.trials = 20;
    t.output = dir2.string();
    auto const r = run(t);
    EXPECT_EQ(r.summary["estimates"]["rows"].size(), 2u);
}

TEST(Cli, ExitCodes)
{
    auto const dir = scratch_dir("cli");
    EXPECT_EQ(run_cli("kacrice-table --seed 1 --M 1 --grid-step 0.5 --out " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    EXPECT_EQ(run_cli("kacrice-table --M 1 --out " + dir.string()), 1);           // no seed
    EXPECT_EQ(run_cli("roots --seed 1 --n 10 --M 6 --out " + dir.string()), 1);    // M > n/2
    EXPECT_EQ(run_cli("kacrice-table --seed 1 --law gaussian"), 1);                // foreign field
    EXPECT_EQ(run_cli("no-such-experiment --seed 1"), 1);

    // An output path that is an existing regular file fails at run time.
    auto const blocker = dir / "blocker";
    std::ofstream(blocker) << "x";
    EXPECT_EQ(run_cli("kacrice-table --seed 1 --M 1 --grid-step 0.5 --out " + blocker.string()), 2);

    auto const cfg = dir / "cfg.toml";
    std::ofstream(cfg) << "experiment = \"roots\"\nseed = 1\n";
    EXPECT_EQ(run_cli("kacrice-table --config " + cfg.string()), 1);  // config names another experiment
}
