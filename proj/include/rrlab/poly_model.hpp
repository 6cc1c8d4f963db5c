#pragma once

// Random polynomials f_n(z) = sum_k eps_k z^k and their rescalings
//   g_n(x) = n^{-1/2} f_n(1 + x/n),   h_n(x) = n^{-1/2} f_n(-1 - x/n).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

#include "rrlab/parallel.hpp"
#include "rrlab/rng.hpp"

namespace rrlab {

enum class CoefficientLaw { rademacher, standard_gaussian, uniform_unit_variance };

inline std::string_view to_string(CoefficientLaw law)
{
    switch (law) {
    case CoefficientLaw::rademacher: return "rademacher";
    case CoefficientLaw::standard_gaussian: return "gaussian";
    case CoefficientLaw::uniform_unit_variance: return "uniform";
    }
    return "?";
}

inline std::optional<CoefficientLaw> parse_law(std::string_view name)
{
    if (name == "rademacher") return CoefficientLaw::rademacher;
    if (name == "gaussian" || name == "standard_gaussian") return CoefficientLaw::standard_gaussian;
    if (name == "uniform" || name == "uniform_unit_variance") return CoefficientLaw::uniform_unit_variance;
    return std::nullopt;
}

/// Which neighbourhood of the unit circle is being zoomed into.
enum class Side : int { plus = 1, minus = -1 };

inline double sign_of(Side side) { return static_cast<double>(static_cast<int>(side)); }

struct PolynomialSample {
    int degree = 0;
    std::vector<double> coefficients;  // eps_0 .. eps_n
    CoefficientLaw law = CoefficientLaw::rademacher;
    std::uint64_t seed = 0;
    std::uint64_t trial = 0;
};

class EvaluationOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Draws eps_0..eps_n i.i.d. from `law` using the stream (seed, trial).
inline PolynomialSample sample_polynomial(int n, CoefficientLaw law, std::uint64_t seed, std::uint64_t trial)
{
    if (n < 1) throw std::invalid_argument("sample_polynomial: degree must be >= 1");
    PolynomialSample p;
    p.degree = n;
    p.law = law;
    p.seed = seed;
    p.trial = trial;
    p.coefficients.resize(static_cast<std::size_t>(n) + 1);
    Engine rng = make_engine(seed, trial, kCoefficients);
    switch (law) {
    case CoefficientLaw::rademacher: {
        std::uint64_t bits = 0;
        int left = 0;
        for (auto& c : p.coefficients) {
            if (left == 0) {
                bits = rng();
                left = 64;
            }
            c = (bits & 1U) ? 1.0 : -1.0;
            bits >>= 1;
            --left;
        }
        break;
    }
    case CoefficientLaw::standard_gaussian: {
        boost::random::normal_distribution<double> normal;
        for (auto& c : p.coefficients) c = normal(rng);
        break;
    }
    case CoefficientLaw::uniform_unit_variance: {
        std::uniform_real_distribution<double> uniform(-std::sqrt(3.0), std::sqrt(3.0));
        for (auto& c : p.coefficients) c = uniform(rng);
        break;
    }
    }
    return p;
}

namespace detail {

inline void two_sum(double a, double b, double& s, double& e)
{
    s = a + b;
    double const t = s - a;
    e = (a - (s - t)) + (b - t);
}

inline void two_product(double a, double b, double& p, double& e)
{
    p = a * b;
    e = std::fma(a, b, -p);
}

// Compensated Horner of sum_{r >= order} (r)_order c_r z^{r - order}.
inline double compensated_derivative_sum(std::span<double const> c, int order, double z)
{
    int const n = static_cast<int>(c.size()) - 1;
    if (order > n) return 0.0;
    auto falling = [order](int r) {
        double f = 1.0;
        for (int i = 0; i < order; ++i) f *= static_cast<double>(r - i);
        return f;
    };
    double s = falling(n) * c[static_cast<std::size_t>(n)];
    double err = 0.0;
    for (int r = n - 1; r >= order; --r) {
        double p = 0.0, pe = 0.0, se = 0.0;
        two_product(s, z, p, pe);
        two_sum(p, falling(r) * c[static_cast<std::size_t>(r)], s, se);
        err = err * z + (pe + se);
    }
    return s + err;
}

}  // namespace detail

/// g_n^{(order)}(x) for Side::plus, h_n^{(order)}(x) for Side::minus.
inline double eval_scaled(PolynomialSample const& p, double x, Side side, int order)
{
    int const n = p.degree;
    if (order < 0 || order > 2) throw std::invalid_argument("eval_scaled: order must be 0, 1 or 2");
    if (!(std::abs(x) <= n)) throw std::invalid_argument("eval_scaled: |x| must not exceed n");
    double const z = sign_of(side) * (1.0 + x / n);
    double const sum = detail::compensated_derivative_sum(p.coefficients, order, z);
    // chain rule: d/dx z = side / n
    double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < order; ++i) scale *= sign_of(side) / n;
    double const value = scale * sum;
    if (!std::isfinite(value)) throw EvaluationOverflow("eval_scaled: non-finite value at x = " + std::to_string(x));
    return value;
}

/// Taylor coefficients a_0..a_J of u -> g_n(center + u) (h_n for Side::minus):
///   a_j = n^{-1/2} (side/n)^j sum_r eps_r C(r, j) z0^(r-j),  z0 = side (1 + center/n),
/// accumulated over r with the Pascal update T_j <- z0 T_j + T_{j-1}. The
/// terms never cancel inside T, and the j-loop has no carried dependency.
inline std::vector<double> local_expansion(PolynomialSample const& p, Side side, double center, int max_order)
{
    int const n = p.degree;
    auto const J = static_cast<std::size_t>(std::min(max_order, n)) + 1;
    double const z0 = sign_of(side) * (1.0 + center / n);
    std::vector<double> T(J, 0.0);
    std::vector<double> acc(J, 0.0);
    T[0] = 1.0;
    for (int r = 0; r <= n; ++r) {
        double const e = p.coefficients[static_cast<std::size_t>(r)];
        for (std::size_t j = 0; j < J; ++j) acc[j] += e * T[j];
        for (std::size_t j = J - 1; j >= 1; --j) T[j] = z0 * T[j] + T[j - 1];
        T[0] *= z0;
    }
    std::vector<double> out(static_cast<std::size_t>(max_order) + 1, 0.0);
    double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t j = 0; j < J; ++j) {
        out[j] = scale * acc[j];
        scale *= sign_of(side) / n;
    }
    return out;
}

/// One evaluated feature of a sample: g_n^{(order)}(x) or h_n^{(order)}(x).
struct EvalPoint {
    double x = 0.0;
    int order = 0;
    Side side = Side::plus;
};

struct CovarianceEstimate {
    Eigen::MatrixXd cov;  // unbiased sample covariance
    Eigen::MatrixXd se;   // jackknife standard errors
    std::size_t samples = 0;
};

/// Sample covariance of the columns of `values` (one row per trial) with
/// leave-one-out jackknife standard errors per entry.
inline CovarianceEstimate covariance_with_jackknife(Eigen::MatrixXd const& values)
{
    auto const N = values.rows();
    auto const F = values.cols();
    if (N < 3) throw std::invalid_argument("empirical_cov: need at least 3 samples");
    Eigen::RowVectorXd const mean = values.colwise().mean();
    Eigen::MatrixXd const centered = values.rowwise() - mean;
    double const nn = static_cast<double>(N);

    CovarianceEstimate est;
    est.samples = static_cast<std::size_t>(N);
    est.cov = (centered.transpose() * centered) / (nn - 1.0);
    est.se = Eigen::MatrixXd::Zero(F, F);
    // Deleting trial t from the centred cross sum S_ab leaves
    // S_ab - u_t v_t N / (N - 1).
    for (Eigen::Index a = 0; a < F; ++a) {
        for (Eigen::Index b = a; b < F; ++b) {
            double const sab = est.cov(a, b) * (nn - 1.0);
            double sum = 0.0, sum_sq = 0.0;
            for (Eigen::Index t = 0; t < N; ++t) {
                double const u = centered(t, a);
                double const v = centered(t, b);
                double const s_del = sab - u * v * nn / (nn - 1.0);
                double const c = s_del / (nn - 2.0);
                sum += c;
                sum_sq += c * c;
            }
            double const m = sum / nn;
            double const var = std::max(0.0, sum_sq / nn - m * m);
            est.se(a, b) = est.se(b, a) = std::sqrt((nn - 1.0) * var);
        }
    }
    return est;
}

/// Evaluates every point for every sample in the ensemble.
inline Eigen::MatrixXd evaluate_features(std::span<PolynomialSample const> ensemble, std::span<EvalPoint const> points)
{
    Eigen::MatrixXd values(static_cast<Eigen::Index>(ensemble.size()), static_cast<Eigen::Index>(points.size()));
    for (std::size_t t = 0; t < ensemble.size(); ++t)
        for (std::size_t f = 0; f < points.size(); ++f)
            values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f)) =
                eval_scaled(ensemble[t], points[f].x, points[f].side, points[f].order);
    return values;
}

inline CovarianceEstimate empirical_cov(std::span<PolynomialSample const> ensemble, std::span<EvalPoint const> points)
{
    if (ensemble.empty()) throw std::invalid_argument("empirical_cov: empty ensemble");
    for (auto const& p : ensemble)
        if (p.degree != ensemble.front().degree) throw std::invalid_argument("empirical_cov: mixed degrees");
    return covariance_with_jackknife(evaluate_features(ensemble, points));
}

/// Streaming form: samples trials 0..trials-1 of (n, law, seed) without
/// keeping the coefficient vectors.
inline CovarianceEstimate empirical_cov(int n, CoefficientLaw law, std::size_t trials, std::uint64_t seed,
                                        std::span<EvalPoint const> points, unsigned workers = 1)
{
    if (trials == 0) throw std::invalid_argument("empirical_cov: empty ensemble");
    Eigen::MatrixXd values(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(points.size()));
    parallel_for(trials, workers, [&](std::size_t t) {
        auto const p = sample_polynomial(n, law, seed, t);
        for (std::size_t f = 0; f < points.size(); ++f)
            values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f)) =
                eval_scaled(p, points[f].x, points[f].side, points[f].order);
    });
    return covariance_with_jackknife(values);
}

/// E|g_n^{(l)}(0)|^2 = n^{-2l-1} sum_k (k)_l^2, exactly as a finite sum.
inline double derivative_variance_at_zero(int n, int order)
{
    double sum = 0.0;
    for (int k = 0; k <= n; ++k) {
        double f = 1.0;
        for (int i = 0; i < order; ++i) f *= static_cast<double>(k - i);
        sum += f * f;
    }
    return sum / std::pow(static_cast<double>(n), 2 * order + 1);
}

}  // namespace rrlab
