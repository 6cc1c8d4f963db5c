#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rrlab/pp_stats.hpp"

using namespace rrlab;

namespace {

RootPointSet make_set(std::uint64_t trial, std::vector<double> pts, Side side = Side::plus, double window = 2.0)
{
    RootPointSet s;
    s.trial = trial;
    s.side = side;
    s.window = window;
    s.points = std::move(pts);
    s.certified.assign(s.points.size(), 1);
    return s;
}

}  // namespace

TEST(Summarize, EmptySets)
{
    std::vector<RootPointSet> ens;
    for (int t = 0; t < 5; ++t) ens.push_back(make_set(t, {}));
    Interval const I{-1, 1};
    double const deltas[] = {0.5};
    auto const s = summarize(ens, std::span(&I, 1), deltas);
    ASSERT_EQ(s.counts.size(), 1u);
    EXPECT_EQ(s.counts[0].mean.value, 0.0);
    EXPECT_EQ(s.counts[0].p_at_least_two.value, 0.0);
    EXPECT_EQ(s.exceedance[0].p.value, 0.0);
    EXPECT_EQ(s.counts[0].histogram, std::vector<std::size_t>{5});
}

TEST(Summarize, SinglePoint)
{
    std::vector<RootPointSet> ens{make_set(0, {0.5})};
    Interval const I{0, 1};
    auto const s = summarize(ens, std::span(&I, 1));
    EXPECT_EQ(s.counts[0].mean.value, 1.0);
}

TEST(Summarize, HandBuiltCountsAndMoments)
{
    // Counts in [-1, 1]: 3, 0, 1, 2.
    std::vector<RootPointSet> ens{make_set(0, {-0.95, -0.1, 0.45, 1.5}), make_set(1, {-1.5}), make_set(2, {0.0}),
                                  make_set(3, {0.2, 0.25})};
    Interval const I{-1, 1};
    double const deltas[] = {0.3};
    auto const s = summarize(ens, std::span(&I, 1), deltas);
    auto const& c = s.counts[0];
    EXPECT_EQ(c.histogram, (std::vector<std::size_t>{1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(c.mean.value, 1.5);
    EXPECT_DOUBLE_EQ(c.variance.value, 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(c.factorial2.value, (6.0 + 0 + 0 + 2.0) / 4.0);
    EXPECT_DOUBLE_EQ(c.p_at_least_two.value, 0.5);
    // Exceedance on [-0.3, 0.3]: only trial 3 has two points.
    EXPECT_DOUBLE_EQ(s.exceedance[0].p.value, 0.25);
    // Gaps: 0.85, 0.55, 1.05 and 0.05.
    EXPECT_EQ(s.gaps[0].total, 4u);
    EXPECT_EQ(s.gaps[0].counts[0], 1u);
    EXPECT_EQ(s.gaps[0].counts[5], 1u);
    EXPECT_EQ(s.gaps[0].counts[8], 1u);
    EXPECT_EQ(s.gaps[0].counts[10], 1u);
    // Mean SE is s / sqrt(N).
    EXPECT_NEAR(c.mean.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
    EXPECT_GE(c.factorial2.value, 0.0);
}

TEST(Summarize, OrderIndependent)
{
    std::vector<RootPointSet> ens;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> pts(t % 4);
        for (auto& x : pts) x = u(rng);
        std::sort(pts.begin(), pts.end());
        ens.push_back(make_set(t, pts, Side::plus));
        ens.push_back(make_set(t, {}, Side::minus));
    }
    Interval const I{-1, 1};
    auto const a = summarize(ens, std::span(&I, 1));
    std::shuffle(ens.begin(), ens.end(), rng);
    auto const b = summarize(ens, std::span(&I, 1));
    EXPECT_EQ(a.counts[0].mean.value, b.counts[0].mean.value);
    EXPECT_EQ(a.counts[0].variance.se, b.counts[0].variance.se);
    EXPECT_EQ(a.trials, 30u);
}

TEST(Summarize, RejectsInconsistentMetadata)
{
    Interval const I{-1, 1};
    std::vector<RootPointSet> mixed{make_set(0, {}, Side::plus, 2.0), make_set(1, {}, Side::plus, 3.0)};
    EXPECT_THROW(summarize(mixed, std::span(&I, 1)), InconsistentEnsemble);
    std::vector<RootPointSet> dup{make_set(0, {}), make_set(0, {})};
    EXPECT_THROW(summarize(dup, std::span(&I, 1)), InconsistentEnsemble);
    std::vector<RootPointSet> unpaired{make_set(0, {}, Side::plus), make_set(1, {}, Side::minus)};
    EXPECT_THROW(summarize(unpaired, std::span(&I, 1)), InconsistentEnsemble);
    std::vector<RootPointSet> ok{make_set(0, {})};
    Interval const wide{-3, 3};
    EXPECT_THROW(summarize(ok, std::span(&wide, 1)), InconsistentEnsemble);
    std::vector<RootPointSet> outside{make_set(0, {2.5})};
    EXPECT_THROW(summarize(outside, std::span(&I, 1)), InconsistentEnsemble);
}

TEST(Jackknife, VarianceAndCorrelationMatchBruteForce)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> x(25), y(25);
    for (int i = 0; i < 25; ++i) {
        x[i] = nd(rng);
        y[i] = 0.3 * x[i] + nd(rng);
    }
    auto brute = [&](auto stat) {
        std::vector<double> loo;
        for (int t = 0; t < 25; ++t) {
            std::vector<double> a, b;
            for (int i = 0; i < 25; ++i)
                if (i != t) {
                    a.push_back(x[i]);
                    b.push_back(y[i]);
                }
            loo.push_back(stat(a, b));
        }
        double m = 0;
        for (double v : loo) m += v / 25;
        double ss = 0;
        for (double v : loo) ss += (v - m) * (v - m);
        return std::sqrt(24.0 / 25.0 * ss);
    };
    auto var = [](std::vector<double> const& a, std::vector<double> const&) { return variance_estimate(a).value; };
    auto cor = [](std::vector<double> const& a, std::vector<double> const& b) { return correlation_estimate(a, b).value; };
    EXPECT_NEAR(variance_estimate(x).se, brute(var), 1e-12);
    EXPECT_NEAR(correlation_estimate(x, y).se, brute(cor), 1e-12);
}

TEST(Jackknife, DoublingTrialsShrinksSe)
{
    PoissonThinning const pp({-1.0, 1.0});
    auto se_for = [&](std::size_t n) {
        std::vector<RootPointSet> ens;
        for (std::size_t t = 0; t < n; ++t) ens.push_back(pp.sample(5, t));
        Interval const I{-1, 1};
        return summarize(ens, std::span(&I, 1)).counts[0].mean.se;
    };
    double const ratio = se_for(20000) / se_for(40000);
    EXPECT_NEAR(ratio, std::sqrt(2.0), 0.05);
}

TEST(CrossSide, IdenticalSetsGiveOne)
{
    std::vector<RootPointSet> ens;
    PoissonThinning const pp({-2.0, 2.0});
    for (int t = 0; t < 200; ++t) {
        auto s = pp.sample(9, t);
        s.window = 2.0;
        ens.push_back(s);
        s.side = Side::minus;
        ens.push_back(s);
    }
    Interval const I{-2, 2};
    auto const c = cross_side_independence(summarize(ens, std::span(&I, 1)), I);
    EXPECT_NEAR(c.corr.value, 1.0, 1e-12);
}

TEST(CrossSide, IndependentSyntheticEnsembles)
{
    std::vector<RootPointSet> ens;
    PoissonThinning const pp({-2.0, 2.0});
    for (int t = 0; t < 5000; ++t) {
        auto a = pp.sample(11, t);
        auto b = pp.sample(12, t, Side::minus);
        a.window = b.window = 2.0;
        ens.push_back(a);
        ens.push_back(b);
    }
    Interval const I{-2, 2};
    auto const c = cross_side_independence(summarize(ens, std::span(&I, 1)), I);
    EXPECT_LE(std::abs(c.corr.value), 3.0 * c.corr.se);
}

TEST(PoissonThinning, MeanMatchesIntensityIntegral)
{
    PoissonThinning const pp({-1.0, 1.0});
    std::vector<double> counts;
    for (int t = 0; t < 100000; ++t) counts.push_back(static_cast<double>(pp.sample(2, t).points.size()));
    auto const m = mean_estimate(counts);
    EXPECT_LE(std::abs(m.value - expected_count(1.0).value), 3 * m.se);
}

TEST(RepulsionSlope, PoissonNullRecoversTwo)
{
    EscalationPolicy policy;
    policy.initial_trials = 20000;
    policy.min_events = 200;
    std::vector<ExceedanceRow> rows;
    std::size_t i = 0;
    for (double d : {0.8, 0.4, 0.2, 0.1}) rows.push_back(poisson_exceedance(d, sweep_seed(77, i++), policy));
    auto const fit = repulsion_slope(rows);
    EXPECT_LE(fit.ci_lo, 2.0);
    EXPECT_GE(fit.ci_hi, 1.9);  // exact Poisson slope over this range is about 1.94
    EXPECT_NEAR(fit.slope, 2.0, 0.2);
    EXPECT_FALSE(fit.dropped);
}

TEST(RepulsionSlope, DropsZeroRowsAndNeedsThree)
{
    std::vector<ExceedanceRow> rows(4);
    double const d[] = {0.8, 0.4, 0.2, 0.1};
    double const p[] = {1e-2, 2.5e-3, 6.25e-4, 0.0};
    for (int i = 0; i < 4; ++i) {
        rows[i].delta = d[i];
        rows[i].p = {p[i], p[i] * 0.1};
    }
    auto const fit = repulsion_slope(rows);
    EXPECT_TRUE(fit.dropped);
    EXPECT_EQ(fit.dropped_deltas, std::vector<double>{0.1});
    EXPECT_NEAR(fit.slope, 2.0, 1e-12);
    rows[2].p = {0.0, 0.0};
    EXPECT_THROW(repulsion_slope(rows), std::invalid_argument);
}

TEST(RepulsionSlope, LimitPathsSteeperThanPoisson)
{
    EscalationPolicy policy;
    policy.initial_trials = 20000;
    policy.trial_cap = 4000000;
    policy.min_events = 40;
    std::vector<ExceedanceRow> rows;
    std::size_t i = 0;
    for (double d : {0.8, 0.4, 0.2}) rows.push_back(path_exceedance(d, sweep_seed(5, i++), policy));
    EXPECT_GE(repulsion_slope(rows).slope, 2.5);
}

TEST(Escalation, StopsAtTargetOrCap)
{
    EscalationPolicy policy;
    policy.initial_trials = 100;
    policy.trial_cap = 1000;
    policy.min_events = 5;
    auto const rare = escalate_exceedance(0.1, Side::plus, policy, 1, [](std::size_t t) { return t % 250 == 7; });
    EXPECT_EQ(rare.trials, 1000u);
    EXPECT_TRUE(rare.censored);
    EXPECT_EQ(rare.events, 4u);
    auto const common = escalate_exceedance(0.1, Side::plus, policy, 3, [](std::size_t t) { return t % 30 == 0; });
    EXPECT_EQ(common.trials, 200u);
    EXPECT_FALSE(common.censored);
}

TEST(WindowTwoRoots, FilterAgreesWithRootFinder)
{
    for (double d : {0.8, 0.2}) {
        int disagreements = 0;
        for (int t = 0; t < 3000; ++t) {
            auto const p = sample_polynomial(100, CoefficientLaw::standard_gaussian, 17, t);
            bool const fast = window_has_two_roots(p, Side::plus, d);
            bool const slow = find_window_roots(p, Side::plus, d).points.size() >= 2;
            disagreements += fast != slow;
        }
        EXPECT_EQ(disagreements, 0);
    }
}

TEST(NearOne, ZeroWindowAndMonotone)
{
    double const Ms[] = {0, 1, 2, 4, 8};
    auto const rows = root_near_one_curve(2000, CoefficientLaw::rademacher, 200, Ms, 3);
    EXPECT_EQ(rows[0].p_no_root.value, 1.0);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i].p_no_root.value, rows[i - 1].p_no_root.value);
    EXPECT_THROW(root_near_one_curve(10, CoefficientLaw::rademacher, 5, Ms, 3), std::invalid_argument);
}

TEST(SignPattern, DegenerateCases)
{
    EXPECT_EQ(sign_pattern_probe(2000, CoefficientLaw::rademacher, 100, 4.0, 1, 1).p.value, 1.0);
    EXPECT_EQ(sign_pattern_probe(2000, CoefficientLaw::rademacher, 100, 1.0, 5, 1).p.value, 1.0);
    auto const r = sign_pattern_probe(2000, CoefficientLaw::rademacher, 100, 4.0, 5, 1);
    EXPECT_DOUBLE_EQ(r.iid_baseline, 1.0 / 16);
    EXPECT_DOUBLE_EQ(r.bound, 1.0 / 8);
    EXPECT_THROW(sign_pattern_probe(100, CoefficientLaw::rademacher, 10, 4.0, 5, 1), std::invalid_argument);
}

TEST(TotalRoots, SmallDegreeTable)
{
    int const ns[] = {100};
    auto const rows = expected_total_roots_check(ns, CoefficientLaw::rademacher, 100, 4);
    EXPECT_NEAR(rows[0].asymptotic, 2.93, 0.01);
    EXPECT_GT(rows[0].mean.value, 0.0);
    EXPECT_THROW(expected_total_roots_check(ns, CoefficientLaw::standard_gaussian, 10, 4), std::invalid_argument);
}

TEST(Escalation, IndependentOfWorkerCount)
{
    EscalationPolicy policy;
    policy.initial_trials = 2000;
    policy.min_events = 30;
    auto const a = poisson_exceedance(0.4, 21, policy, 1);
    auto const b = poisson_exceedance(0.4, 21, policy, 4);
    EXPECT_EQ(a.trials, b.trials);
    EXPECT_EQ(a.events, b.events);
}
