#pragma once

// Real roots of f_n near +1 and -1 in the rescaled coordinate x = n(|r| - 1),
// plus exact Sturm counting of all real roots for integer coefficients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/multiprecision/gmp.hpp>

#include "rrlab/parallel.hpp"
#include "rrlab/poly_model.hpp"

namespace rrlab {

struct RootFinderOptions {
    double grid_step = 1e-2;
    double x_tol = 1e-10;
    /// |g_n(root)| must be below value_tol * sd(g_n(root)).
    double value_tol = 1e-8;
    /// Interior extrema with |g| below tangency_tol * sd are reported as unresolved.
    double tangency_tol = 1e-12;
    /// Width of the Taylor patches tiling the window.
    double patch_width = 1.0;
    int max_taylor_order = 48;
    double taylor_tol = 1e-17;
    int subsample = 10;
};

struct RootPointSet {
    Side side = Side::plus;
    double window = 0.0;
    int degree = 0;
    std::uint64_t trial = 0;
    std::vector<double> points;           // strictly increasing
    std::vector<std::uint8_t> certified;  // per point
    int unresolved_tangencies = 0;

    std::size_t count_in(double lo, double hi) const
    {
        auto const first = std::lower_bound(points.begin(), points.end(), lo);
        auto const last = std::upper_bound(points.begin(), points.end(), hi);
        return static_cast<std::size_t>(last - first);
    }
};

/// Standard deviation of g_n(x) (equivalently h_n(x)) for unit-variance coefficients.
inline double scaled_sd(int n, double x)
{
    double const z = 1.0 + x / n;
    double const z2 = z * z;
    double sum;
    if (std::abs(z2 - 1.0) < 1e-8) {
        sum = n + 1.0 + (z2 - 1.0) * n * (n + 1.0) / 2.0;
    } else {
        sum = (std::pow(z2, n + 1) - 1.0) / (z2 - 1.0);
    }
    return std::sqrt(sum / n);
}

namespace detail {

struct Patch {
    double lo = 0.0;
    double hi = 0.0;
    double center = 0.0;
    std::vector<double> taylor;  // in powers of (x - center)

    double value(double x) const
    {
        double const u = x - center;
        double s = 0.0;
        for (auto it = taylor.rbegin(); it != taylor.rend(); ++it) s = s * u + *it;
        return s;
    }

    double slope(double x) const { return derivative(1, x); }

    double derivative(int order, double x) const
    {
        double const u = x - center;
        double s = 0.0;
        for (std::size_t j = taylor.size(); j-- > static_cast<std::size_t>(order);) {
            double f = 1.0;
            for (int i = 0; i < order; ++i) f *= static_cast<double>(j) - i;
            s = s * u + f * taylor[j];
        }
        return s;
    }
};

// Taylor patch of g_n / h_n on [lo, hi]. The order starts from the bound
// radius^J / J! <= taylor_tol and is doubled until the last two terms are
// negligible against the sum of term magnitudes at the patch radius.
inline Patch make_patch(PolynomialSample const& p, Side side, double lo, double hi, RootFinderOptions const& opt)
{
    Patch patch{lo, hi, 0.5 * (lo + hi), {}};
    double const radius = 0.5 * (hi - lo);
    int order = 2;
    for (double bound = radius * radius / 2.0; bound > opt.taylor_tol && order < opt.max_taylor_order;)
        bound *= radius / ++order;
    order += 2;
    for (;;) {
        patch.taylor = local_expansion(p, side, patch.center, std::min(order, opt.max_taylor_order));
        double magnitude = 0.0, rpow = 1.0;
        std::vector<double> terms;
        for (double a : patch.taylor) {
            terms.push_back(std::abs(a) * rpow);
            magnitude += terms.back();
            rpow *= radius;
        }
        std::size_t const m = terms.size();
        bool const converged =
            m < 3 || (terms[m - 1] <= opt.taylor_tol * 10 * magnitude && terms[m - 2] <= opt.taylor_tol * 10 * magnitude);
        if (converged || order >= opt.max_taylor_order || static_cast<int>(m) <= order) return patch;
        order *= 2;
    }
}

inline int sign(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

}  // namespace detail

namespace detail {

class WindowScanner {
public:
    WindowScanner(PolynomialSample const& p, Side side, double lo, double hi, RootFinderOptions const& opt)
        : p_(p), side_(side), opt_(opt)
    {
        result_.side = side;
        result_.window = std::max(std::abs(lo), std::abs(hi));
        result_.degree = p.degree;
        result_.trial = p.trial;
        build_patches(lo, hi);
        build_nodes(lo, hi);
    }

    RootPointSet run()
    {
        std::vector<double> roots;
        std::vector<std::uint8_t> cert;
        auto emit = [&](double x, bool ok) {
            roots.push_back(x);
            cert.push_back(ok ? 1 : 0);
        };
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (values_[i] == 0.0) emit(nodes_[i], true);
            if (i + 1 == nodes_.size()) break;
            double const a = nodes_[i], b = nodes_[i + 1];
            double const fa = values_[i], fb = values_[i + 1];
            if (fa == 0.0 || fb == 0.0) continue;
            if (sign(fa) != sign(fb)) {
                auto [x, ok] = refine(a, b);
                emit(x, ok);
                continue;
            }
            scan_for_pair(i, emit);
        }
        // Order and drop duplicates produced by zero-valued nodes.
        std::vector<std::size_t> order(roots.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](auto l, auto r) { return roots[l] < roots[r]; });
        for (auto k : order) {
            if (!result_.points.empty() && roots[k] - result_.points.back() <= opt_.x_tol) continue;
            result_.points.push_back(roots[k]);
            result_.certified.push_back(cert[k]);
        }
        return std::move(result_);
    }

private:
    double exact(double x) const { return eval_scaled(p_, x, side_, 0); }

    Patch const& patch_for(double x) const
    {
        for (auto const& pt : patches_)
            if (x < pt.hi) return pt;
        return patches_.back();
    }

    // Patches and nodes sit on global lattices (multiples of patch_width and
    // grid_step), so overlapping scans see identical brackets.
    void build_patches(double lo, double hi)
    {
        double const w = opt_.patch_width;
        auto const first = static_cast<long>(std::floor(lo / w));
        auto const last = static_cast<long>(std::ceil(hi / w));
        for (long k = first; k < last; ++k) {
            double const a = std::max(lo, static_cast<double>(k) * w);
            double const b = std::min(hi, static_cast<double>(k + 1) * w);
            if (b > a) patches_.push_back(make_patch(p_, side_, a, b, opt_));
        }
        if (patches_.empty()) patches_.push_back(make_patch(p_, side_, lo, hi, opt_));
    }

    void build_nodes(double lo, double hi)
    {
        double const h = opt_.grid_step;
        auto const imin = static_cast<long>(std::ceil(lo / h));
        auto const imax = static_cast<long>(std::floor(hi / h));
        if (static_cast<double>(imin) * h > lo) nodes_.push_back(lo);
        for (long i = imin; i <= imax; ++i) nodes_.push_back(static_cast<double>(i) * h);
        if (static_cast<double>(imax) * h < hi) nodes_.push_back(hi);
        values_.reserve(nodes_.size());
        slopes_.reserve(nodes_.size());
        for (double x : nodes_) {
            auto const& pt = patch_for(x);
            double v = pt.value(x);
            // Near-zero node values are re-evaluated from the coefficients so
            // an exact zero (possible for integer coefficients) is recognised.
            if (std::abs(v) <= 1e-10 * scaled_sd(p_.degree, x)) v = exact(x);
            values_.push_back(v);
            slopes_.push_back(pt.slope(x));
        }
    }

    // Bisection runs on the Taylor patch; the final bracket must then show a
    // sign change of the exact evaluation, otherwise the whole bisection is
    // repeated on the exact evaluation.
    std::pair<double, bool> refine(double a, double b) const
    {
        auto const& pt = patch_for(a);
        auto bisect = [&](auto&& f, double lo, double hi) {
            double flo = f(lo);
            while (hi - lo > opt_.x_tol) {
                double const mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                double const fm = f(mid);
                if (fm == 0.0) return std::pair{mid, mid};
                if (sign(fm) == sign(flo)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return std::pair{lo, hi};
        };
        auto certify = [&](double lo, double hi) {
            double const x = 0.5 * (lo + hi);
            double const fx = exact(x);
            if (fx == 0.0) return std::pair{x, true};
            bool const straddles = lo == hi || sign(exact(lo)) != sign(exact(hi));
            bool const small = std::abs(fx) <= opt_.value_tol * scaled_sd(p_.degree, x);
            return std::pair{x, straddles && small};
        };

        double const fa = exact(a), fb = exact(b);
        if (fa == 0.0) return {a, true};
        if (fb == 0.0) return {b, true};
        if (sign(pt.value(a)) != sign(pt.value(b))) {
            auto const [lo, hi] = bisect([&](double x) { return pt.value(x); }, a, b);
            auto const r = certify(lo, hi);
            if (r.second) return r;
        }
        if (sign(fa) != sign(fb)) {
            auto const [lo, hi] = bisect([&](double x) { return exact(x); }, a, b);
            return certify(lo, hi);
        }
        return {0.5 * (a + b), false};
    }

    // Same-sign neighbours whose slopes point towards zero from both ends may
    // hide two close roots.
    template <typename Emit>
    void scan_for_pair(std::size_t i, Emit& emit)
    {
        double const a = nodes_[i], b = nodes_[i + 1];
        double const fa = values_[i], fb = values_[i + 1];
        double const da = slopes_[i], db = slopes_[i + 1];
        int const s = sign(fa);
        bool const turning = (s > 0 && da < 0 && db > 0) || (s < 0 && da > 0 && db < 0);
        if (!turning) return;
        if (std::min(std::abs(fa), std::abs(fb)) > 0.5 * (std::abs(da) + std::abs(db)) * (b - a)) return;

        auto const& pt = patch_for(a);
        int const m = std::max(2, opt_.subsample);
        double prev_x = a, prev_f = fa;
        bool found = false;
        for (int k = 1; k <= m; ++k) {
            double const x = (k == m) ? b : a + (b - a) * k / m;
            double const f = (k == m) ? fb : pt.value(x);
            if (sign(f) != sign(prev_f) && f != 0.0) {
                auto [r, ok] = refine(prev_x, x);
                emit(r, ok);
                found = true;
            }
            prev_x = x;
            prev_f = f;
        }
        if (found) return;

        // Locate the interior extremum and decide from its exact value.
        double lo = a, hi = b, slo = da;
        for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
            double const mid = 0.5 * (lo + hi);
            double const sm = pt.slope(mid);
            if (sign(sm) == sign(slo)) {
                lo = mid;
                slo = sm;
            } else {
                hi = mid;
            }
        }
        double const xm = 0.5 * (lo + hi);
        double const fm = exact(xm);
        if (fm == 0.0) {
            emit(xm, true);
        } else if (sign(fm) != s) {
            auto [r1, ok1] = refine(a, xm);
            emit(r1, ok1);
            auto [r2, ok2] = refine(xm, b);
            emit(r2, ok2);
        } else if (std::abs(fm) <= opt_.tangency_tol * scaled_sd(p_.degree, xm)) {
            ++result_.unresolved_tangencies;
        }
    }

    PolynomialSample const& p_;
    Side side_;
    RootFinderOptions const& opt_;
    std::vector<Patch> patches_;
    std::vector<double> nodes_, values_, slopes_;
    RootPointSet result_;
};

}  // namespace detail

/// Roots of g_n (Side::plus) or h_n (Side::minus) in [-M, M].
inline RootPointSet find_window_roots(PolynomialSample const& p, Side side, double window,
                                      RootFinderOptions const& opt = {})
{
    if (!(window >= 0.0) || window > 0.5 * p.degree)
        throw std::invalid_argument("find_window_roots: window must satisfy 0 <= M <= n/2");
    if (!(opt.grid_step > 0.0) || !(opt.x_tol > 0.0))
        throw std::invalid_argument("find_window_roots: grid_step and x_tol must be positive");
    if (window == 0.0) {
        RootPointSet empty;
        empty.side = side;
        empty.degree = p.degree;
        empty.trial = p.trial;
        if (eval_scaled(p, 0.0, side, 0) == 0.0) {
            empty.points.push_back(0.0);
            empty.certified.push_back(1);
        }
        return empty;
    }
    auto out = detail::WindowScanner(p, side, -window, window, opt).run();
    out.window = window;
    return out;
}

/// Smallest |x| over roots in [-M, M], or +infinity when there is none.
/// Scans unit bands outward from 0 and stops at the first band pair with a root.
inline double first_root_distance(PolynomialSample const& p, Side side, double window,
                                  RootFinderOptions const& opt = {})
{
    if (!(window >= 0.0) || window > 0.5 * p.degree)
        throw std::invalid_argument("first_root_distance: window must satisfy 0 <= M <= n/2");
    if (eval_scaled(p, 0.0, side, 0) == 0.0) return 0.0;
    double const w = opt.patch_width;
    double best = std::numeric_limits<double>::infinity();
    for (double r = 0.0; r < window; r += w) {
        double const outer = std::min(window, r + w);
        for (auto [lo, hi] : {std::pair{r, outer}, std::pair{-outer, -r}}) {
            auto const set = detail::WindowScanner(p, side, lo, hi, opt).run();
            for (double x : set.points) best = std::min(best, std::abs(x));
        }
        if (best <= outer) return best;
    }
    return best;
}

/// Root sets for trials 0..trials-1, ordered by (trial, side) in the order
/// the sides are given.
inline std::vector<RootPointSet> scaled_root_ensemble(int n, CoefficientLaw law, std::size_t trials, double window,
                                                      std::span<Side const> sides, std::uint64_t seed,
                                                      RootFinderOptions const& opt = {}, unsigned workers = 1)
{
    std::vector<RootPointSet> out(trials * sides.size());
    parallel_for(trials, workers, [&](std::size_t t) {
        auto const p = sample_polynomial(n, law, seed, t);
        for (std::size_t s = 0; s < sides.size(); ++s) out[t * sides.size() + s] = find_window_roots(p, sides[s], window, opt);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Exact counting

using BigInt = boost::multiprecision::mpz_int;

/// Integer polynomial, coefficients low to high, no trailing zeros.
using IntPoly = std::vector<BigInt>;

/// A rational point num/den with den > 0.
struct Rational {
    BigInt num;
    BigInt den = 1;
};

inline constexpr int kMaxExactDegree = 200;

namespace detail {

inline void trim(IntPoly& p)
{
    while (!p.empty() && p.back() == 0) p.pop_back();
}

inline int degree(IntPoly const& p) { return static_cast<int>(p.size()) - 1; }

inline IntPoly derivative(IntPoly const& p)
{
    IntPoly d;
    for (std::size_t k = 1; k < p.size(); ++k) d.push_back(p[k] * static_cast<long>(k));
    trim(d);
    return d;
}

inline IntPoly primitive_part(IntPoly p)
{
    BigInt g = 0;
    for (auto const& c : p) {
        g = boost::multiprecision::gcd(g, c);
        if (g == 1) return p;
    }
    if (g > 1)
        for (auto& c : p) c /= g;
    return p;
}

// |lc(b)|^(deg a - deg b + 1) * a mod b: a positive multiple of the true
// remainder, with exactly the power that makes subresultant division exact.
inline IntPoly positive_pseudo_remainder(IntPoly a, IntPoly const& b)
{
    BigInt const lc = b.back();
    BigInt const alc = boost::multiprecision::abs(lc);
    int const db = degree(b);
    int steps = degree(a) - db + 1;
    while (!a.empty() && degree(a) >= db) {
        int const shift = degree(a) - db;
        BigInt const q = lc > 0 ? BigInt(a.back()) : BigInt(-a.back());
        for (auto& c : a) c *= alc;
        for (int k = 0; k <= db; ++k) a[static_cast<std::size_t>(k + shift)] -= q * b[static_cast<std::size_t>(k)];
        a.pop_back();  // leading term cancels exactly
        trim(a);
        --steps;
    }
    if (steps > 0) {
        BigInt f = boost::multiprecision::pow(alc, static_cast<unsigned>(steps));
        for (auto& c : a) c *= f;
    }
    return a;
}

inline int sign_at_infinity(IntPoly const& p, bool negative)
{
    int s = p.back() > 0 ? 1 : -1;
    if (negative && degree(p) % 2 == 1) s = -s;
    return s;
}

inline int sign_at(IntPoly const& p, Rational const& x)
{
    // den^deg p(num/den) by Horner in integers.
    BigInt acc = 0;
    BigInt denpow = 1;
    for (auto it = p.rbegin(); it != p.rend(); ++it) {
        acc = acc * x.num + *it * denpow;
        denpow *= x.den;
    }
    return acc > 0 ? 1 : (acc < 0 ? -1 : 0);
}

template <typename SignFn>
int variations(std::vector<IntPoly> const& chain, SignFn&& sign_of_poly)
{
    int count = 0, last = 0;
    for (auto const& q : chain) {
        int const s = sign_of_poly(q);
        if (s == 0) continue;
        if (last != 0 && s != last) ++count;
        last = s;
    }
    return count;
}

}  // namespace detail

/// Sturm sequence p, p', -rem(p, p'), ... with every element scaled by a
/// positive factor. The factors follow the subresultant recurrence
///   beta_1 = 1,  beta_i = |lc(S_{i-1})| psi_i^{d_i},
///   psi_1 = 1,   psi_i = |lc(S_{i-1})|^{d_{i-1}} / psi_{i-1}^{d_{i-1}-1},
/// which keeps coefficient growth linear without content computations.
inline std::vector<IntPoly> sturm_chain(IntPoly p)
{
    detail::trim(p);
    if (p.empty()) throw std::invalid_argument("sturm_chain: zero polynomial");
    if (detail::degree(p) > kMaxExactDegree) throw std::invalid_argument("sturm_chain: degree above 200");
    std::vector<IntPoly> chain{detail::primitive_part(std::move(p))};
    IntPoly d = detail::derivative(chain.front());
    if (d.empty()) return chain;
    chain.push_back(std::move(d));

    BigInt psi = 1;
    int prev_delta = 0;
    for (std::size_t i = 1; detail::degree(chain[i]) > 0; ++i) {
        IntPoly const& a = chain[i - 1];
        IntPoly const& b = chain[i];
        int const delta = detail::degree(a) - detail::degree(b);
        BigInt beta = 1;
        if (i >= 2) {
            BigInt const g = boost::multiprecision::abs(a.back());
            if (prev_delta == 0) {
                psi = 1;
            } else {
                psi = boost::multiprecision::pow(g, static_cast<unsigned>(prev_delta)) /
                      boost::multiprecision::pow(psi, static_cast<unsigned>(prev_delta - 1));
            }
            beta = g * boost::multiprecision::pow(psi, static_cast<unsigned>(delta));
        }
        IntPoly r = detail::positive_pseudo_remainder(a, b);
        if (r.empty()) break;
        for (auto& c : r) c = -(c / beta);
        chain.push_back(std::move(r));
        prev_delta = delta;
    }
    return chain;
}

/// Number of distinct real roots of the integer polynomial (coefficients low to high).
inline int count_real_roots_exact(std::span<long const> coeffs)
{
    IntPoly p(coeffs.begin(), coeffs.end());
    auto const chain = sturm_chain(std::move(p));
    int const at_minus = detail::variations(chain, [](IntPoly const& q) { return detail::sign_at_infinity(q, true); });
    int const at_plus = detail::variations(chain, [](IntPoly const& q) { return detail::sign_at_infinity(q, false); });
    return at_minus - at_plus;
}

/// Distinct real roots in the half-open interval (lo, hi].
inline int count_real_roots_exact(std::span<long const> coeffs, Rational const& lo, Rational const& hi)
{
    IntPoly p(coeffs.begin(), coeffs.end());
    auto const chain = sturm_chain(std::move(p));
    int const va = detail::variations(chain, [&](IntPoly const& q) { return detail::sign_at(q, lo); });
    int const vb = detail::variations(chain, [&](IntPoly const& q) { return detail::sign_at(q, hi); });
    return va - vb;
}

inline std::vector<long> integer_coefficients(PolynomialSample const& p)
{
    std::vector<long> out;
    out.reserve(p.coefficients.size());
    for (double c : p.coefficients) {
        if (c != std::round(c)) throw std::invalid_argument("integer_coefficients: non-integer coefficient");
        out.push_back(static_cast<long>(c));
    }
    return out;
}

}  // namespace rrlab
