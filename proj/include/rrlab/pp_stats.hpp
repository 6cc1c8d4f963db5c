#pragma once

// Ensemble statistics of root point sets: counts, factorial moments, gaps,
// small-window exceedances, cross-side correlation, plus the Monte Carlo
// probes built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrlab/gauss_limit.hpp"
#include "rrlab/kac_rice.hpp"
#include "rrlab/parallel.hpp"
#include "rrlab/poly_model.hpp"
#include "rrlab/rng.hpp"
#include "rrlab/root_finder.hpp"

namespace rrlab {

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

// ---------------------------------------------------------------------------
// Jackknife helpers. All use closed-form leave-one-out statistics, O(N).

/// Mean with its jackknife SE (equal to s / sqrt(N)).
inline Estimate mean_estimate(std::span<double const> xs)
{
    auto const N = static_cast<double>(xs.size());
    if (xs.empty()) return {};
    double sum = 0.0;
    for (double x : xs) sum += x;
    double const mean = sum / N;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (N - 1.0) / N)};
}

/// Proportion of successes out of `trials`, jackknife SE.
inline Estimate proportion_estimate(std::size_t successes, std::size_t trials)
{
    if (trials == 0) return {};
    double const N = static_cast<double>(trials);
    double const p = static_cast<double>(successes) / N;
    if (trials < 2) return {p, 0.0};
    return {p, std::sqrt(p * (1.0 - p) / (N - 1.0))};
}

/// Unbiased variance with jackknife SE.
inline Estimate variance_estimate(std::span<double const> xs)
{
    std::size_t const n = xs.size();
    if (n < 2) return {};
    auto const mean = mean_estimate(xs).value;
    double const N = static_cast<double>(n);
    double s2 = 0.0;
    for (double x : xs) s2 += (x - mean) * (x - mean);
    double const var = s2 / (N - 1.0);
    if (n < 3) return {var, 0.0};
    // Removing x_t changes the centred sum of squares to s2 - (x_t - mean)^2 N / (N - 1).
    double sum = 0.0, sum_sq = 0.0;
    for (double x : xs) {
        double const u = x - mean;
        double const v = (s2 - u * u * N / (N - 1.0)) / (N - 2.0);
        sum += v;
        sum_sq += v * v;
    }
    double const m = sum / N;
    return {var, std::sqrt((N - 1.0) * std::max(0.0, sum_sq / N - m * m))};
}

/// Pearson correlation with jackknife SE. Zero-variance inputs give NaN.
inline Estimate correlation_estimate(std::span<double const> xs, std::span<double const> ys)
{
    if (xs.size() != ys.size()) throw std::invalid_argument("correlation_estimate: length mismatch");
    std::size_t const n = xs.size();
    if (n < 3) throw std::invalid_argument("correlation_estimate: need at least 3 pairs");
    double const N = static_cast<double>(n);
    double const mx = mean_estimate(xs).value, my = mean_estimate(ys).value;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double const u = xs[t] - mx, v = ys[t] - my;
        sxx += u * u;
        syy += v * v;
        sxy += u * v;
    }
    double const nan = std::numeric_limits<double>::quiet_NaN();
    if (sxx == 0.0 || syy == 0.0) return {nan, nan};
    double const r = sxy / std::sqrt(sxx * syy);
    double const k = N / (N - 1.0);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < n; ++t) {
        double const u = xs[t] - mx, v = ys[t] - my;
        double const a = sxx - k * u * u, b = syy - k * v * v, c = sxy - k * u * v;
        if (a <= 0.0 || b <= 0.0) continue;
        double const rt = c / std::sqrt(a * b);
        sum += rt;
        sum_sq += rt * rt;
        ++used;
    }
    if (used != n) return {r, nan};
    double const m = sum / N;
    return {r, std::sqrt((N - 1.0) * std::max(0.0, sum_sq / N - m * m))};
}

// ---------------------------------------------------------------------------
// Summaries

struct IntervalCounts {
    Side side = Side::plus;
    Interval interval;
    std::vector<std::size_t> histogram;  // histogram[k] = trials with k points in the interval
    Estimate mean;
    Estimate variance;
    Estimate factorial2;  // E[N (N - 1)]
    Estimate p_at_least_two;
};

struct GapHistogram {
    Side side = Side::plus;
    double bin_width = 0.1;
    std::vector<std::size_t> counts;
    std::size_t overflow = 0;
    std::size_t total = 0;
};

struct ExceedanceRow {
    Side side = Side::plus;
    double delta = 0.0;
    std::size_t trials = 0;
    std::size_t events = 0;
    Estimate p;  // P(N[-delta, delta] >= 2)
    bool censored = false;  // trial cap reached before enough events
};

struct CrossSideCorrelation {
    Interval interval;
    std::size_t trials = 0;
    Estimate corr;
};

struct PointProcessSummary {
    double window = 0.0;
    int degree = 0;
    std::size_t trials = 0;
    std::vector<Side> sides;
    std::vector<IntervalCounts> counts;
    std::vector<GapHistogram> gaps;
    std::vector<ExceedanceRow> exceedance;
    std::vector<CrossSideCorrelation> cross_side;

    IntervalCounts const& count_for(Side side, Interval I) const
    {
        for (auto const& c : counts)
            if (c.side == side && c.interval.lo == I.lo && c.interval.hi == I.hi) return c;
        throw std::out_of_range("PointProcessSummary: no such interval");
    }
};

struct SummaryOptions {
    double gap_bin_width = 0.1;
    std::size_t gap_bins = 40;
};

class InconsistentEnsemble : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::vector<double> counts_in(std::span<RootPointSet const* const> sets, Interval I)
{
    std::vector<double> out;
    out.reserve(sets.size());
    for (auto const* s : sets) out.push_back(static_cast<double>(s->count_in(I.lo, I.hi)));
    return out;
}

inline IntervalCounts interval_counts(Side side, Interval I, std::span<double const> n)
{
    IntervalCounts c;
    c.side = side;
    c.interval = I;
    std::vector<double> f2, ge2;
    f2.reserve(n.size());
    ge2.reserve(n.size());
    for (double k : n) {
        auto const idx = static_cast<std::size_t>(k);
        if (c.histogram.size() <= idx) c.histogram.resize(idx + 1, 0);
        ++c.histogram[idx];
        f2.push_back(k * (k - 1.0));
        ge2.push_back(k >= 2.0 ? 1.0 : 0.0);
    }
    c.mean = mean_estimate(n);
    c.variance = variance_estimate(n);
    c.factorial2 = mean_estimate(f2);
    std::size_t events = 0;
    for (double g : ge2) events += g > 0.0;
    c.p_at_least_two = proportion_estimate(events, n.size());
    return c;
}

}  // namespace detail

/// Summarises root sets that share window and degree. The sets may carry one
/// side or two; with two sides every trial must appear once per side and
/// cross-side correlations are reported for each interval. Input order does
/// not matter: sets are aggregated in (trial, side) order.
inline PointProcessSummary summarize(std::span<RootPointSet const> ensemble, std::span<Interval const> intervals,
                                     std::span<double const> deltas = {}, SummaryOptions const& opt = {})
{
    PointProcessSummary out;
    if (ensemble.empty()) return out;
    out.window = ensemble.front().window;
    out.degree = ensemble.front().degree;

    std::map<Side, std::map<std::uint64_t, RootPointSet const*>> by_side;
    for (auto const& s : ensemble) {
        if (s.window != out.window) throw InconsistentEnsemble("summarize: mixed windows");
        if (s.degree != out.degree) throw InconsistentEnsemble("summarize: mixed degrees");
        if (s.points.size() != s.certified.size()) throw InconsistentEnsemble("summarize: certified flags mismatch");
        if (!std::is_sorted(s.points.begin(), s.points.end()))
            throw InconsistentEnsemble("summarize: points not sorted");
        for (double x : s.points)
            if (std::abs(x) > s.window) throw InconsistentEnsemble("summarize: point outside window");
        if (!by_side[s.side].emplace(s.trial, &s).second)
            throw InconsistentEnsemble("summarize: duplicate (trial, side)");
    }
    if (by_side.size() == 2) {
        auto const& a = by_side.begin()->second;
        auto const& b = by_side.rbegin()->second;
        bool same = a.size() == b.size();
        for (auto ia = a.begin(), ib = b.begin(); same && ia != a.end(); ++ia, ++ib) same = ia->first == ib->first;
        if (!same) throw InconsistentEnsemble("summarize: sides cover different trials");
    }
    for (auto const& I : intervals)
        if (I.lo < -out.window || I.hi > out.window || I.hi < I.lo)
            throw InconsistentEnsemble("summarize: interval outside window");
    for (double d : deltas)
        if (!(d > 0.0) || d > out.window) throw InconsistentEnsemble("summarize: delta outside window");

    std::map<Side, std::vector<RootPointSet const*>> ordered;
    for (auto const& [side, sets] : by_side) {
        out.sides.push_back(side);
        for (auto const& [trial, ptr] : sets) ordered[side].push_back(ptr);
    }
    out.trials = ordered.begin()->second.size();

    for (auto side : out.sides) {
        auto const& sets = ordered[side];
        for (auto const& I : intervals) {
            auto const n = detail::counts_in(sets, I);
            out.counts.push_back(detail::interval_counts(side, I, n));
        }

        GapHistogram gh;
        gh.side = side;
        gh.bin_width = opt.gap_bin_width;
        gh.counts.assign(opt.gap_bins, 0);
        for (auto const* s : sets) {
            for (std::size_t k = 1; k < s->points.size(); ++k) {
                double const gap = s->points[k] - s->points[k - 1];
                auto const bin = static_cast<std::size_t>(gap / opt.gap_bin_width);
                if (bin < gh.counts.size())
                    ++gh.counts[bin];
                else
                    ++gh.overflow;
                ++gh.total;
            }
        }
        out.gaps.push_back(std::move(gh));

        for (double d : deltas) {
            std::size_t events = 0;
            for (auto const* s : sets) events += s->count_in(-d, d) >= 2;
            ExceedanceRow row;
            row.side = side;
            row.delta = d;
            row.trials = sets.size();
            row.events = events;
            row.p = proportion_estimate(events, sets.size());
            out.exceedance.push_back(row);
        }
    }

    if (out.sides.size() == 2 && out.trials >= 3) {
        auto const& a = ordered[out.sides[0]];
        auto const& b = ordered[out.sides[1]];
        for (auto const& I : intervals) {
            auto const na = detail::counts_in(a, I);
            auto const nb = detail::counts_in(b, I);
            out.cross_side.push_back({I, out.trials, correlation_estimate(na, nb)});
        }
    }
    return out;
}

/// Pearson correlation of the plus-side and minus-side counts in I.
inline CrossSideCorrelation cross_side_independence(PointProcessSummary const& summary, Interval I)
{
    for (auto const& c : summary.cross_side)
        if (c.interval.lo == I.lo && c.interval.hi == I.hi) return c;
    throw std::out_of_range("cross_side_independence: interval not summarised with both sides");
}

// ---------------------------------------------------------------------------
// Repulsion slope

struct SlopeFit {
    double slope = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;  // 95% normal interval
    double ci_hi = 0.0;
    double intercept = 0.0;
    std::vector<double> used_deltas;
    std::vector<double> dropped_deltas;  // zero exceedance estimates
    bool dropped = false;
};

/// Least-squares slope of log P(N[-delta, delta] >= 2) against log delta.
/// The SE propagates each row's SE through the log (delta method) and
/// treats rows as independent.
inline SlopeFit repulsion_slope(std::span<ExceedanceRow const> rows)
{
    SlopeFit fit;
    std::vector<double> u, y, vy;
    for (auto const& r : rows) {
        if (!(r.delta > 0.0)) throw std::invalid_argument("repulsion_slope: delta must be positive");
        if (r.p.value <= 0.0) {
            fit.dropped_deltas.push_back(r.delta);
            continue;
        }
        fit.used_deltas.push_back(r.delta);
        u.push_back(std::log(r.delta));
        y.push_back(std::log(r.p.value));
        double const rel = r.p.se / r.p.value;
        vy.push_back(rel * rel);
    }
    fit.dropped = !fit.dropped_deltas.empty();
    if (u.size() < 3) throw std::invalid_argument("repulsion_slope: need at least 3 deltas with nonzero exceedance");
    double const ubar = mean_estimate(u).value, ybar = mean_estimate(y).value;
    double suu = 0.0;
    for (double v : u) suu += (v - ubar) * (v - ubar);
    if (suu == 0.0) throw std::invalid_argument("repulsion_slope: deltas must differ");
    double b = 0.0, var = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double const w = (u[i] - ubar) / suu;
        b += w * y[i];
        var += w * w * vy[i];
    }
    fit.slope = b;
    fit.intercept = ybar - b * ubar;
    fit.se = std::sqrt(var);
    fit.ci_lo = b - 1.96 * fit.se;
    fit.ci_hi = b + 1.96 * fit.se;
    return fit;
}

inline SlopeFit repulsion_slope(PointProcessSummary const& summary, std::span<double const> deltas, Side side = Side::plus)
{
    std::vector<ExceedanceRow> rows;
    for (double d : deltas) {
        auto it = std::find_if(summary.exceedance.begin(), summary.exceedance.end(),
                               [&](ExceedanceRow const& r) { return r.side == side && r.delta == d; });
        if (it == summary.exceedance.end()) throw std::out_of_range("repulsion_slope: delta not in summary");
        rows.push_back(*it);
    }
    return repulsion_slope(rows);
}

// ---------------------------------------------------------------------------
// Rare-event escalation

struct EscalationPolicy {
    std::size_t initial_trials = 10000;
    std::size_t trial_cap = 20000000;
    std::size_t min_events = 20;
};

/// Runs exceeds(trial) for trials 0, 1, ... in doubling batches until
/// min_events exceedances are seen or the cap is reached. The batch sequence
/// depends only on the policy, so results do not depend on `workers`.
template <typename Exceeds>
ExceedanceRow escalate_exceedance(double delta, Side side, EscalationPolicy const& policy, unsigned workers,
                                  Exceeds&& exceeds)
{
    if (policy.initial_trials == 0 || policy.trial_cap < policy.initial_trials)
        throw std::invalid_argument("escalate_exceedance: need 0 < initial_trials <= trial_cap");
    ExceedanceRow row;
    row.side = side;
    row.delta = delta;
    std::size_t done = 0;
    std::size_t target = policy.initial_trials;
    while (true) {
        std::vector<std::uint8_t> hit(target - done, 0);
        parallel_for(hit.size(), workers, [&](std::size_t i) { hit[i] = exceeds(done + i) ? 1 : 0; });
        for (auto h : hit) row.events += h;
        done = target;
        if (row.events >= policy.min_events || done >= policy.trial_cap) break;
        target = std::min(policy.trial_cap, 2 * done);
    }
    row.trials = done;
    row.censored = row.events < policy.min_events;
    row.p = proportion_estimate(row.events, done);
    return row;
}

/// Seed for the independent stream family used by one delta of a sweep.
inline std::uint64_t sweep_seed(std::uint64_t seed, std::size_t index)
{
    return detail::splitmix64(seed ^ (0x5bd1e995ULL * (index + 1)));
}

/// True when g_n (or h_n) has at least two roots in [-delta, delta]. Two
/// roots force a zero of the derivative, so samples whose Taylor expansion
/// keeps |a_1| above the rest of the derivative series are skipped without
/// running the root finder.
inline bool window_has_two_roots(PolynomialSample const& p, Side side, double delta, RootFinderOptions const& opt = {})
{
    auto const patch = detail::make_patch(p, side, -delta, delta, opt);
    auto const& a = patch.taylor;
    if (a.size() > 2) {
        double rest = 0.0, rpow = 1.0;
        for (std::size_t j = 2; j < a.size(); ++j) {
            rest += static_cast<double>(j) * std::abs(a[j]) * rpow * delta;
            rpow *= delta;
        }
        // 1e-9 relative slack covers the truncated tail and rounding.
        double const scale = std::abs(a[1]) + rest;
        if (std::abs(a[1]) > rest + 1e-9 * scale) return false;
    }
    return find_window_roots(p, side, delta, opt).count_in(-delta, delta) >= 2;
}

/// Exceedance of g_n roots in [-delta, delta] with trial escalation.
inline ExceedanceRow polynomial_exceedance(int n, CoefficientLaw law, double delta, std::uint64_t seed,
                                           EscalationPolicy const& policy, unsigned workers = 1,
                                           RootFinderOptions const& opt = {})
{
    return escalate_exceedance(delta, Side::plus, policy, workers, [&](std::size_t t) {
        return window_has_two_roots(sample_polynomial(n, law, seed, t), Side::plus, delta, opt);
    });
}

/// Grid used for small-window path exceedances: 40 intervals with derivatives.
inline GridSpec exceedance_grid(double delta) { return {delta, delta / 20.0, true}; }

/// Exceedance of limit-path zeros in [-delta, delta] with trial escalation.
inline ExceedanceRow path_exceedance(double delta, std::uint64_t seed, EscalationPolicy const& policy,
                                     unsigned workers = 1)
{
    GaussianPathSampler const sampler(exceedance_grid(delta));
    return escalate_exceedance(delta, Side::plus, policy, workers, [&](std::size_t t) {
        return roots_of_path(sampler.sample(seed, t)).count_in(-delta, delta) >= 2;
    });
}

// ---------------------------------------------------------------------------
// Synthetic Poisson process with intensity rho_1

/// Inhomogeneous Poisson process with intensity `intensity` restricted to I,
/// drawn by thinning a homogeneous process at rate `bound`.
class PoissonThinning {
public:
    explicit PoissonThinning(Interval I, std::function<double(double)> rate = intensity) : I_(I), rate_(std::move(rate))
    {
        if (!(I.hi >= I.lo)) throw std::invalid_argument("PoissonThinning: empty interval");
        double m = 0.0;
        for (int k = 0; k <= 400; ++k) m = std::max(m, rate_(I.lo + (I.hi - I.lo) * k / 400.0));
        bound_ = 1.05 * m;
    }

    RootPointSet sample(std::uint64_t seed, std::uint64_t trial, Side side = Side::plus) const
    {
        Engine rng = make_engine(seed, trial, kSynthetic);
        RootPointSet s;
        s.side = side;
        s.trial = trial;
        s.window = std::max(std::abs(I_.lo), std::abs(I_.hi));
        if (I_.length() <= 0.0) return s;
        std::poisson_distribution<long> count(bound_ * I_.length());
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        long const N = count(rng);
        for (long k = 0; k < N; ++k) {
            double const x = I_.lo + I_.length() * unit(rng);
            double const r = rate_(x);
            if (r > bound_) throw std::logic_error("PoissonThinning: intensity exceeds thinning bound");
            if (unit(rng) * bound_ < r) s.points.push_back(x);
        }
        std::sort(s.points.begin(), s.points.end());
        s.certified.assign(s.points.size(), 1);
        return s;
    }

    double bound() const { return bound_; }

private:
    Interval I_;
    std::function<double(double)> rate_;
    double bound_ = 0.0;
};

/// Exceedance of the matched-mean Poisson process with trial escalation.
inline ExceedanceRow poisson_exceedance(double delta, std::uint64_t seed, EscalationPolicy const& policy,
                                        unsigned workers = 1)
{
    PoissonThinning const pp({-delta, delta});
    return escalate_exceedance(delta, Side::plus, policy, workers,
                               [&](std::size_t t) { return pp.sample(seed, t).points.size() >= 2; });
}

// ---------------------------------------------------------------------------
// Probes

struct NearOneRow {
    double M = 0.0;
    std::size_t trials = 0;
    std::size_t empty = 0;  // trials with no root in [-M, M]
    Estimate p_no_root;
};

/// P(no root of g_n in [-M, M]) for each M, i.e. no root of f_n in
/// [1 - M/n, 1 + M/n], from one first-root distance per trial.
inline std::vector<NearOneRow> root_near_one_curve(int n, CoefficientLaw law, std::size_t trials,
                                                   std::span<double const> Ms, std::uint64_t seed,
                                                   unsigned workers = 1, RootFinderOptions const& opt = {})
{
    if (Ms.empty()) return {};
    double const Mmax = *std::max_element(Ms.begin(), Ms.end());
    if (*std::min_element(Ms.begin(), Ms.end()) < 0.0 || Mmax > 0.5 * n)
        throw std::invalid_argument("root_near_one_curve: M must lie in [0, n/2]");
    auto const dist = parallel_map<double>(trials, workers, [&](std::size_t t) {
        return first_root_distance(sample_polynomial(n, law, seed, t), Side::plus, Mmax, opt);
    });
    std::vector<NearOneRow> rows;
    for (double M : Ms) {
        NearOneRow r;
        r.M = M;
        r.trials = trials;
        for (double d : dist) r.empty += d > M;
        r.p_no_root = proportion_estimate(r.empty, trials);
        rows.push_back(r);
    }
    return rows;
}

struct SignPatternResult {
    int k = 0;
    double alpha = 0.0;
    std::size_t trials = 0;
    std::size_t same_sign = 0;
    Estimate p;
    double iid_baseline = 0.0;  // 2^{-k+1}
    double bound = 0.0;         // 2^{-k+2}
};

/// Probability that g_n(alpha^{j-1}), j = 1..k, all share a sign.
inline SignPatternResult sign_pattern_probe(int n, CoefficientLaw law, std::size_t trials, double alpha, int k,
                                            std::uint64_t seed, unsigned workers = 1)
{
    if (k < 1) throw std::invalid_argument("sign_pattern_probe: k must be >= 1");
    if (!(alpha >= 1.0)) throw std::invalid_argument("sign_pattern_probe: alpha must be >= 1");
    if (std::pow(alpha, k - 1) > n) throw std::invalid_argument("sign_pattern_probe: alpha^(k-1) exceeds n");
    std::vector<double> xs;
    for (int j = 0; j < k; ++j) xs.push_back(std::pow(alpha, j));
    auto const same = parallel_map<std::uint8_t>(trials, workers, [&](std::size_t t) -> std::uint8_t {
        auto const p = sample_polynomial(n, law, seed, t);
        bool pos = true, neg = true;
        for (double x : xs) {
            double const v = eval_scaled(p, x, Side::plus, 0);
            pos = pos && v >= 0.0;
            neg = neg && v <= 0.0;
        }
        return (pos || neg) ? 1 : 0;
    });
    SignPatternResult r;
    r.k = k;
    r.alpha = alpha;
    r.trials = trials;
    for (auto s : same) r.same_sign += s;
    r.p = proportion_estimate(r.same_sign, trials);
    r.iid_baseline = std::ldexp(1.0, -k + 1);
    r.bound = std::ldexp(1.0, -k + 2);
    return r;
}

struct TotalRootsRow {
    int n = 0;
    std::size_t trials = 0;
    Estimate mean;
    double asymptotic = 0.0;  // (2/pi) ln n
    double ratio = 0.0;
};

/// Mean exact number of real roots of f_n against (2/pi) ln n.
inline std::vector<TotalRootsRow> expected_total_roots_check(std::span<int const> ns, CoefficientLaw law,
                                                             std::size_t trials, std::uint64_t seed,
                                                             unsigned workers = 1)
{
    if (law != CoefficientLaw::rademacher)
        throw std::invalid_argument("expected_total_roots_check: exact counting needs the rademacher law");
    std::vector<TotalRootsRow> rows;
    for (int n : ns) {
        if (n < 1 || n > kMaxExactDegree) throw std::invalid_argument("expected_total_roots_check: n must be in [1, 200]");
        auto const counts = parallel_map<double>(trials, workers, [&](std::size_t t) {
            return static_cast<double>(count_real_roots_exact(integer_coefficients(sample_polynomial(n, law, seed, t))));
        });
        TotalRootsRow r;
        r.n = n;
        r.trials = trials;
        r.mean = mean_estimate(counts);
        r.asymptotic = 2.0 / std::numbers::pi * std::log(static_cast<double>(n));
        r.ratio = r.mean.value / r.asymptotic;
        rows.push_back(r);
    }
    return rows;
}

struct MaxDerivativeRow {
    int n = 0;
    double M = 0.0;
    int order = 0;
    std::size_t trials = 0;
    Estimate mean_max;  // E max over the grid of |g_n^{(order)}|
    double bound = 0.0; // e^M
};

/// Ensemble mean of max |g_n^{(j)}| over the grid {i step} in [-M, M], j = 0..max_order.
inline std::vector<MaxDerivativeRow> max_derivative_check(int n, CoefficientLaw law, std::size_t trials, double M,
                                                          int max_order, double step, std::uint64_t seed,
                                                          unsigned workers = 1)
{
    if (max_order < 0 || max_order > 2) throw std::invalid_argument("max_derivative_check: order must be 0..2");
    if (!(M > 0.0) || M > 0.5 * n) throw std::invalid_argument("max_derivative_check: M must lie in (0, n/2]");
    if (!(step > 0.0)) throw std::invalid_argument("max_derivative_check: step must be positive");
    auto const K = static_cast<std::size_t>(max_order) + 1;
    auto const nodes = static_cast<long>(std::floor(M / step + 1e-9));
    RootFinderOptions opt;
    opt.taylor_tol = 1e-20;  // extra terms for second derivatives
    std::vector<double> maxima(trials * K, 0.0);
    parallel_for(trials, workers, [&](std::size_t t) {
        auto const p = sample_polynomial(n, law, seed, t);
        std::vector<detail::Patch> patches;
        for (double a = -M; a < M; a += 1.0) patches.push_back(detail::make_patch(p, Side::plus, a, std::min(M, a + 1.0), opt));
        for (long i = -nodes; i <= nodes; ++i) {
            double const x = static_cast<double>(i) * step;
            auto const idx = std::min(patches.size() - 1, static_cast<std::size_t>(std::max(0.0, std::floor(x + M))));
            for (std::size_t j = 0; j < K; ++j) {
                double const v = std::abs(patches[idx].derivative(static_cast<int>(j), x));
                maxima[t * K + j] = std::max(maxima[t * K + j], v);
            }
        }
    });
    std::vector<MaxDerivativeRow> rows;
    for (std::size_t j = 0; j < K; ++j) {
        std::vector<double> col(trials);
        for (std::size_t t = 0; t < trials; ++t) col[t] = maxima[t * K + j];
        rows.push_back({n, M, static_cast<int>(j), trials, mean_estimate(col), std::exp(M)});
    }
    return rows;
}

}  // namespace rrlab
