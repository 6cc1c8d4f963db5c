#pragma once

// First and second Kac-Rice densities of the zero set of the limit process g
// and the moments of zero counts they imply.

#include <algorithm>
#include <array>
#include <utility>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rrlab/kernel_moments.hpp"

namespace rrlab {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

/// rho_1(x) = E[|g'(x)| | g(x) = 0] / sqrt(2 pi Var g(x)).
///
/// With v the conditional variance of g'(x) given g(x), E|g'| = sqrt(2v/pi),
/// so rho_1 = sqrt(v / K00) / pi.
inline double intensity(double x)
{
    KernelMoments const km;
    double const s = 2.0 * x;
    double const k00 = km.exp_moment(0, s);
    double const k01 = km.exp_moment(1, s);
    double const k11 = km.exp_moment(2, s);
    double const v = k11 - k01 * k01 / k00;
    return std::sqrt(std::max(v, 0.0) / k00) / std::numbers::pi;
}

/// Same density, conditioning g(x) on g'(x) instead: v = K00 - K01^2/K11
/// is the conditional variance of g, and det = K00 K11 - K01^2 gives
/// rho_1 = sqrt(det) / (pi K00).
inline double intensity_via_determinant(double x)
{
    KernelMoments const km;
    double const s = 2.0 * x;
    double const k00 = km.exp_moment(0, s);
    double const k01 = km.exp_moment(1, s);
    double const k11 = km.exp_moment(2, s);
    return std::sqrt(std::max(k00 * k11 - k01 * k01, 0.0)) / (std::numbers::pi * k00);
}

/// (g'(x), g'(y)) conditioned on g(x) = g(y) = 0.
struct ConditionedPair {
    double x = 0.0;
    double y = 0.0;
    Eigen::Matrix2d conditional_cov = Eigen::Matrix2d::Zero();
    double det_sigma = 0.0;  // det Cov(g(x), g(y))
};

/// Below this separation pair_intensity is extended by zero.
inline constexpr double kDiagonalSeparation = 1e-6;

namespace detail {

// (e^u - 1)/u, (e^u - 1 - u)/u^2 and (u e^u - e^u + 1)/u^2: the scaled
// divided differences of s -> e^{st} at (x, y), (x, x, y) and (x, y, y).
struct DividedExp {
    double d1, d2x, d2y;
};

inline DividedExp divided_exp(double u)
{
    if (std::abs(u) < 0.5) {
        double d1 = 0.0, d2x = 0.0, d2y = 0.0;
        double power = 1.0;  // u^k
        double f1 = 1.0;     // (k+1)!
        for (int k = 0; k < 24; ++k) {
            double const f2 = f1 * (k + 2);
            d1 += power / f1;
            d2x += power / f2;
            d2y += power * (k + 1) / f2;
            power *= u;
            f1 = f2;
        }
        return {d1, d2x, d2y};
    }
    double const em1 = std::expm1(u);
    double const d1 = em1 / u;
    return {d1, (em1 - u) / (u * u), (u * (em1 + 1.0) - em1) / (u * u)};
}

// Gauss-Legendre rule on [0, 1] with four 30-point panels.
struct UnitRule {
    std::array<double, 120> t{};
    std::array<double, 120> w{};
    UnitRule()
    {
        using G = boost::math::quadrature::gauss<double, 30>;
        auto const& ab = G::abscissa();
        auto const& wt = G::weights();
        std::size_t k = 0;
        for (int panel = 0; panel < 4; ++panel) {
            double const lo = panel * 0.25;
            double const half = 0.125;
            for (std::size_t i = 0; i < ab.size(); ++i) {
                t[k] = lo + half * (1.0 + ab[i]);
                w[k++] = half * wt[i];
                if (ab[i] != 0.0) {
                    t[k] = lo + half * (1.0 - ab[i]);
                    w[k++] = half * wt[i];
                }
            }
        }
    }
};

inline UnitRule const& unit_rule()
{
    static UnitRule const rule;
    return rule;
}

// Gram matrix of g(x), D[x,y]g, D[x,x,y]g, D[x,y,y]g as L^2[0,1] inner
// products of e^{xt}, t e^{xt} d1, t^2 e^{xt} d2x, t^2 e^{xt} d2y (u = (y-x)t).
inline Eigen::Matrix4d newton_gram(double x, double y)
{
    auto const& rule = unit_rule();
    double const d = y - x;
    Eigen::Matrix4d G = Eigen::Matrix4d::Zero();
    for (std::size_t k = 0; k < rule.t.size(); ++k) {
        double const t = rule.t[k];
        double const e = std::exp(x * t);
        auto const dd = divided_exp(d * t);
        Eigen::Vector4d f(e, t * e * dd.d1, t * t * e * dd.d2x, t * t * e * dd.d2y);
        G.noalias() += rule.w[k] * f * f.transpose();
    }
    return G;
}

// E|XY| for a centred bivariate normal.
inline double abs_product_mean(double var_x, double var_y, double cov_xy)
{
    double const sx = std::sqrt(std::max(var_x, 0.0));
    double const sy = std::sqrt(std::max(var_y, 0.0));
    if (sx == 0.0 || sy == 0.0) return 0.0;
    double const rho = std::clamp(cov_xy / (sx * sy), -1.0, 1.0);
    return 2.0 / std::numbers::pi * sx * sy * (std::sqrt(1.0 - rho * rho) + rho * std::asin(rho));
}

}  // namespace detail

/// Conditioning in the Newton basis: with d = y - x,
///   g'(x) = D[x,y]g - d D[x,x,y]g,  g'(y) = D[x,y]g + d D[x,y,y]g,
/// and {g(x) = g(y) = 0} = {g(x) = D[x,y]g = 0}, so the conditional
/// covariance is d^2 times the Schur complement of the second divided
/// differences, and det Sigma = d^2 det Cov(g(x), D[x,y]g). Every factor
/// stays O(1) as y -> x.
inline ConditionedPair condition_pair(double x, double y)
{
    Eigen::Matrix4d const G = detail::newton_gram(x, y);
    Eigen::Matrix2d const A = G.topLeftCorner<2, 2>();
    Eigen::Matrix2d const B = G.topRightCorner<2, 2>();
    Eigen::Matrix2d S = G.bottomRightCorner<2, 2>() - B.transpose() * A.inverse() * B;
    S = 0.5 * (S + S.transpose()).eval();
    double const d = y - x;
    ConditionedPair out;
    out.x = x;
    out.y = y;
    out.conditional_cov << d * d * S(0, 0), -d * d * S(0, 1), -d * d * S(1, 0), d * d * S(1, 1);
    out.det_sigma = d * d * A.determinant();
    return out;
}

/// rho_2(x, y) = E[|g'(x) g'(y)| | g(x) = g(y) = 0] / (2 pi sqrt(det Sigma)).
inline double pair_intensity(double x, double y)
{
    if (x > y) std::swap(x, y);  // exact symmetry
    double const d = y - x;
    if (std::abs(d) < kDiagonalSeparation) return 0.0;
    Eigen::Matrix4d const G = detail::newton_gram(x, y);
    Eigen::Matrix2d const A = G.topLeftCorner<2, 2>();
    Eigen::Matrix2d const B = G.topRightCorner<2, 2>();
    Eigen::Matrix2d const S = G.bottomRightCorner<2, 2>() - B.transpose() * A.inverse() * B;
    // d^2 from E|XY| against |d| from sqrt(det Sigma).
    double const e = detail::abs_product_mean(S(0, 0), S(1, 1), -S(0, 1));
    return std::abs(d) * e / (2.0 * std::numbers::pi * std::sqrt(A.determinant()));
}

/// rho_2 by direct conditioning on the 4x4 covariance of
/// (g(x), g(y), g'(x), g'(y)) built from the kernel. Loses accuracy as
/// |x - y| -> 0; kept as an independent route for moderate separations.
inline double pair_intensity_direct(double x, double y)
{
    KernelMoments const km;
    std::array<std::pair<int, double>, 4> const f{{{0, x}, {0, y}, {1, x}, {1, y}}};
    Eigen::Matrix4d C;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) C(a, b) = km.cov(f[a].first, f[b].first, f[a].second, f[b].second);
    Eigen::Matrix2d const A = C.topLeftCorner<2, 2>();
    Eigen::Matrix2d const B = C.topRightCorner<2, 2>();
    Eigen::Matrix2d const S = C.bottomRightCorner<2, 2>() - B.transpose() * A.inverse() * B;
    double const e = detail::abs_product_mean(S(0, 0), S(1, 1), S(0, 1));
    return e / (2.0 * std::numbers::pi * std::sqrt(A.determinant()));
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

/// E nu([lo, hi]) = integral of rho_1.
inline QuadratureResult expected_count(Interval I, double rel_tol = 1e-9)
{
    if (!(I.hi > I.lo)) return {};
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    QuadratureResult r;
    auto piece = [&](double a, double b) {
        double err = 0.0;
        double const v = GK::integrate(intensity, a, b, 15, rel_tol * 1e-2, &err);
        r.value += v;
        r.error += err;
    };
    if (I.lo < 0.0 && I.hi > 0.0) {
        piece(I.lo, 0.0);
        piece(0.0, I.hi);
    } else {
        piece(I.lo, I.hi);
    }
    return r;
}

inline QuadratureResult expected_count(double M, double rel_tol = 1e-9) { return expected_count({-M, M}, rel_tol); }

/// E[nu(I)(nu(I) - 1)] = double integral of rho_2 over I^2, computed as
/// twice the integral over {y < x}; the inner integrand is smooth there.
inline QuadratureResult second_factorial_moment(Interval I, double rel_tol = 1e-6)
{
    if (!(I.hi > I.lo)) return {};
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    double inner_error = 0.0;
    auto inner = [&](double x) {
        if (x - I.lo <= 0.0) return 0.0;
        double err = 0.0;
        double const v = GK::integrate([x](double y) { return pair_intensity(x, y); }, I.lo, x, 12,
                                       rel_tol * 1e-2, &err);
        inner_error += err;
        return v;
    };
    double outer_error = 0.0;
    double const v = GK::integrate(inner, I.lo, I.hi, 12, rel_tol * 1e-1, &outer_error);
    return {2.0 * v, 2.0 * outer_error};
}

struct PoissonSummary {
    double mean = 0.0;
    double p0 = 0.0;
    double p1 = 0.0;
    double p_more_than_one = 0.0;
};

inline PoissonSummary poisson_from_mean(double m)
{
    if (!(m >= 0.0)) throw std::invalid_argument("poisson_from_mean: negative mean");
    PoissonSummary s;
    s.mean = m;
    s.p0 = std::exp(-m);
    s.p1 = m * s.p0;
    s.p_more_than_one = -std::expm1(-m) - s.p1;
    if (m < 1e-3) {
        // 1 - e^{-m}(1 + m) = m^2/2 - m^3/3 + m^4/8 - ...
        s.p_more_than_one = m * m * (0.5 - m / 3.0 + m * m / 8.0 - m * m * m / 30.0);
    }
    return s;
}

/// Poisson process with the same mean measure as nu, restricted to I.
inline PoissonSummary poisson_null(Interval I) { return poisson_from_mean(expected_count(I).value); }

}  // namespace rrlab
