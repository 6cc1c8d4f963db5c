#pragma once

// Exponential moments I_k(s) = int_0^1 t^k e^{st} dt and the covariance
// kernel of the limiting Gaussian process built from them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rrlab {

/// Highest moment order supported by exp_moment.
inline constexpr int kMaxMomentOrder = 8;

/// Highest derivative order accepted by cov().
inline constexpr int kMaxDerivativeOrder = 2;

struct KernelMoments {
    /// Below this |s| the Taylor series in s is used directly.
    double s_small = 0.5;

    double exp_moment(int k, double s) const;
    double cov(int i, int j, double x, double y) const;
    double correlation(double x, double y) const;
};

namespace detail {

// sum_m s^m / (m! (k+m+1)); all terms positive for s >= 0.
inline double moment_taylor(int k, double s)
{
    double term = 1.0;  // s^m / m!
    double sum = 1.0 / (k + 1);
    for (int m = 1; m < 2000; ++m) {
        term *= s / m;
        double const add = term / (k + m + 1);
        sum += add;
        if (std::abs(add) <= 1e-17 * std::abs(sum) && m > std::abs(s)) break;
    }
    return sum;
}

// I_k(s) = e^s / (k+1) * sum_m u^m / ((k+2)(k+3)...(k+m+1)) with u = -s >= 0.
inline double moment_kummer_negative(int k, double s)
{
    double const u = -s;
    double term = 1.0;
    double sum = 1.0;
    for (int m = 1; m < 4000; ++m) {
        term *= u / (k + m + 1);
        sum += term;
        if (term <= 1e-17 * sum) break;
    }
    return std::exp(s) * sum / (k + 1);
}

}  // namespace detail

/// I_k(s) with relative error ~1e-15 for k <= kMaxMomentOrder.
///
/// |s| < s_small uses the Taylor series. Otherwise the upward recurrence
/// s I_k = e^s - k I_{k-1} is used from I_0 = expm1(s)/s when |s| >= 2k,
/// where each step damps errors; for the remaining (k, s) a positive-term
/// series is summed instead (Taylor for s > 0, Kummer form for s < 0).
inline double KernelMoments::exp_moment(int k, double s) const
{
    if (!std::isfinite(s)) {
        throw std::invalid_argument("exp_moment: non-finite argument s");
    }
    if (k < 0 || k > kMaxMomentOrder) {
        throw std::invalid_argument("exp_moment: order " + std::to_string(k) +
                                    " outside [0, " + std::to_string(kMaxMomentOrder) + "]");
    }
    if (std::abs(s) < s_small) return detail::moment_taylor(k, s);
    if (std::abs(s) >= 2.0 * k) {
        double const es = std::exp(s);
        double value = std::expm1(s) / s;
        for (int j = 1; j <= k; ++j) value = (es - j * value) / s;
        return value;
    }
    return s > 0 ? detail::moment_taylor(k, s) : detail::moment_kummer_negative(k, s);
}

/// Limit of E g_n^{(i)}(x) g_n^{(j)}(y): I_{i+j}(x + y).
inline double KernelMoments::cov(int i, int j, double x, double y) const
{
    if (i < 0 || j < 0 || i > kMaxDerivativeOrder || j > kMaxDerivativeOrder) {
        throw std::invalid_argument("cov: derivative order outside [0, 2]");
    }
    if (!std::isfinite(x) || !std::isfinite(y)) {
        throw std::invalid_argument("cov: non-finite point");
    }
    return exp_moment(i + j, x + y);
}

namespace detail {

// log I_0(s) without overflow for large positive s.
inline double log_moment0(double s)
{
    if (std::abs(s) < 0.5) return std::log(moment_taylor(0, s));
    if (s > 0) return s + std::log(-std::expm1(-s)) - std::log(s);
    return std::log(std::expm1(s) / s);
}

}  // namespace detail

/// Correlation of g(x) and g(y), computed in logs so large arguments do not overflow.
inline double KernelMoments::correlation(double x, double y) const
{
    if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("correlation: non-finite point");
    if (x == y) return 1.0;
    double const log_c = detail::log_moment0(x + y) - 0.5 * (detail::log_moment0(2.0 * x) + detail::log_moment0(2.0 * y));
    return std::min(std::exp(log_c), 1.0);
}

inline double exp_moment(int k, double s) { return KernelMoments{}.exp_moment(k, s); }
inline double kernel_cov(int i, int j, double x, double y) { return KernelMoments{}.cov(i, j, x, y); }
inline double kernel_correlation(double x, double y) { return KernelMoments{}.correlation(x, y); }

}  // namespace rrlab
