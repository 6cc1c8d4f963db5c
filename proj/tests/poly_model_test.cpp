#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <boost/multiprecision/gmp.hpp>
#include <gtest/gtest.h>

#include "rrlab/kernel_moments.hpp"
#include "rrlab/poly_model.hpp"

using namespace rrlab;

namespace {

PolynomialSample make_poly(std::vector<double> coeffs)
{
    PolynomialSample p;
    p.degree = static_cast<int>(coeffs.size()) - 1;
    p.coefficients = std::move(coeffs);
    return p;
}

}  // namespace

TEST(SamplePolynomial, RademacherSupport)
{
    auto const p = sample_polynomial(3, CoefficientLaw::rademacher, 1, 0);
    ASSERT_EQ(p.coefficients.size(), 4u);
    for (double c : p.coefficients) EXPECT_TRUE(c == 1.0 || c == -1.0);
}

TEST(SamplePolynomial, GaussianMeanNearZero)
{
    int const n = 10000;
    auto const p = sample_polynomial(n, CoefficientLaw::standard_gaussian, 5, 0);
    double sum = 0.0;
    for (double c : p.coefficients) sum += c;
    EXPECT_LE(std::abs(sum / (n + 1)), 5.0 / std::sqrt(n));
}

TEST(SamplePolynomial, DeterministicPerStream)
{
    for (auto law : {CoefficientLaw::rademacher, CoefficientLaw::standard_gaussian, CoefficientLaw::uniform_unit_variance}) {
        auto const a = sample_polynomial(50, law, 9, 4);
        auto const b = sample_polynomial(50, law, 9, 4);
        auto const c = sample_polynomial(50, law, 9, 5);
        EXPECT_EQ(a.coefficients, b.coefficients);
        EXPECT_NE(a.coefficients, c.coefficients);
    }
}

TEST(SamplePolynomial, UnitVarianceLaws)
{
    for (auto law : {CoefficientLaw::rademacher, CoefficientLaw::standard_gaussian, CoefficientLaw::uniform_unit_variance}) {
        auto const p = sample_polynomial(200000, law, 2, 0);
        double s = 0.0, s2 = 0.0, big = 0.0;
        for (double c : p.coefficients) {
            s += c;
            s2 += c * c;
            big = std::max(big, std::abs(c));
        }
        double const N = static_cast<double>(p.coefficients.size());
        EXPECT_NEAR(s / N, 0.0, 0.02);
        EXPECT_NEAR(s2 / N, 1.0, 0.02);
        if (law == CoefficientLaw::uniform_unit_variance) EXPECT_LE(big, std::sqrt(3.0));
    }
    EXPECT_THROW(sample_polynomial(0, CoefficientLaw::rademacher, 1, 0), std::invalid_argument);
}

TEST(SamplePolynomial, LawNames)
{
    for (auto law : {CoefficientLaw::rademacher, CoefficientLaw::standard_gaussian, CoefficientLaw::uniform_unit_variance})
        EXPECT_EQ(parse_law(to_string(law)), law);
    EXPECT_FALSE(parse_law("cauchy").has_value());
}

TEST(EvalScaled, SmallExamples)
{
    EXPECT_DOUBLE_EQ(eval_scaled(make_poly({1, 1}), 0.0, Side::plus, 0), 2.0);
    auto const q = make_poly({1, -1, 1});
    EXPECT_NEAR(eval_scaled(q, 0.0, Side::plus, 0), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(eval_scaled(q, 0.0, Side::plus, 1), std::pow(2.0, -1.5), 1e-15);
}

TEST(EvalScaled, MinusSideIsTrueDerivativeOfH)
{
    // h(x) = n^{-1/2} f(-1 - x/n); compare with central differences.
    auto const p = sample_polynomial(40, CoefficientLaw::standard_gaussian, 3, 1);
    for (double x : {-3.0, 0.0, 2.5}) {
        double const h = 1e-4;
        double const d1 = (eval_scaled(p, x + h, Side::minus, 0) - eval_scaled(p, x - h, Side::minus, 0)) / (2 * h);
        double const d2 = (eval_scaled(p, x + h, Side::minus, 1) - eval_scaled(p, x - h, Side::minus, 1)) / (2 * h);
        EXPECT_NEAR(eval_scaled(p, x, Side::minus, 1), d1, 1e-6 * (1 + std::abs(d1)));
        EXPECT_NEAR(eval_scaled(p, x, Side::minus, 2), d2, 1e-6 * (1 + std::abs(d2)));
    }
}

TEST(EvalScaled, Preconditions)
{
    auto const p = make_poly({1, 1, 1});
    EXPECT_THROW(eval_scaled(p, 0.0, Side::plus, 3), std::invalid_argument);
    EXPECT_THROW(eval_scaled(p, 2.5, Side::plus, 0), std::invalid_argument);
    auto const big = sample_polynomial(2000, CoefficientLaw::rademacher, 1, 0);
    EXPECT_THROW(eval_scaled(big, 2000.0, Side::plus, 0), EvaluationOverflow);
}

TEST(EvalScaled, MatchesExactRationalHorner)
{
    using boost::multiprecision::mpq_rational;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> xd(-5.0, 5.0);
    double worst = 0.0;
    for (int n = 1; n <= 30; ++n) {
        for (int trial = 0; trial < 20; ++trial) {
            auto const p = sample_polynomial(n, CoefficientLaw::rademacher, 100 + n, trial);
            double const x = std::clamp(xd(rng), -1.0 * n, 1.0 * n);
            for (Side side : {Side::plus, Side::minus}) {
                // The evaluation point z is itself rounded; the oracle uses that same double.
                double const z = sign_of(side) * (1.0 + x / n);
                mpq_rational acc = 0;
                for (int r = n; r >= 0; --r) acc = acc * mpq_rational(z) + static_cast<int>(p.coefficients[r]);
                double const exact = static_cast<double>(acc) / std::sqrt(static_cast<double>(n));
                double const got = eval_scaled(p, x, side, 0);
                if (exact != 0.0) worst = std::max(worst, std::abs(got - exact) / std::abs(exact));
            }
        }
    }
    EXPECT_LE(worst, 1e-13);
}

TEST(EvalScaled, VarianceIdentityAtZero)
{
    for (int n : {1, 5, 20, 100})
        for (int l = 0; l <= 2; ++l) {
            double sum = 0.0;
            for (int k = 0; k <= n; ++k) {
                double f = 1.0;
                for (int i = 0; i < l; ++i) f *= k - i;
                sum += f * f;
            }
            double const v = derivative_variance_at_zero(n, l);
            EXPECT_NEAR(v, sum / std::pow(n, 2 * l + 1), 1e-14 * v);
            EXPECT_LE(v, (n + 1.0) / n * (1.0 + 1e-12));  // each (k)_l <= n^l
        }
    // Tends to I_{2l}(0) = 1/(2l+1).
    EXPECT_NEAR(derivative_variance_at_zero(100000, 1), 1.0 / 3.0, 1e-4);
}

TEST(LocalExpansion, MatchesDirectDerivatives)
{
    auto const p = sample_polynomial(2000, CoefficientLaw::standard_gaussian, 3, 0);
    for (Side side : {Side::plus, Side::minus})
        for (double c : {-7.0, 0.0, 5.0}) {
            auto const a = local_expansion(p, side, c, 4);
            ASSERT_EQ(a.size(), 5u);
            for (int j = 0; j <= 2; ++j) {
                double const fact = j == 2 ? 2.0 : 1.0;
                double const d = eval_scaled(p, c, side, j);
                EXPECT_NEAR(fact * a[j], d, 1e-11 * (1.0 + std::abs(d))) << j;
            }
        }
}

TEST(EmpiricalCov, GaussianVarianceAtZero)
{
    EvalPoint const pt{0.0, 0, Side::plus};
    auto const est = empirical_cov(1000, CoefficientLaw::standard_gaussian, 5000, 21, std::span(&pt, 1));
    EXPECT_LE(std::abs(est.cov(0, 0) - 1.0), 3.0 * est.se(0, 0));
}

TEST(EmpiricalCov, LimitKernelAndCrossSide)
{
    std::vector<EvalPoint> pts{{0.0, 0, Side::plus}, {0.0, 0, Side::minus}, {1.0, 0, Side::plus}, {0.0, 2, Side::plus}};
    auto const est = empirical_cov(2000, CoefficientLaw::rademacher, 10000, 33, pts);
    EXPECT_LE(std::abs(est.cov(0, 1)), 3.0 * est.se(0, 1));
    EXPECT_LE(std::abs(est.cov(2, 2) - exp_moment(0, 2.0)), 3.0 * est.se(2, 2));
    EXPECT_LE(std::abs(est.cov(3, 3) - 0.2), 3.0 * est.se(3, 3));
}

TEST(EmpiricalCov, EnsembleFormAndErrors)
{
    std::vector<PolynomialSample> ens;
    for (int t = 0; t < 50; ++t) ens.push_back(sample_polynomial(30, CoefficientLaw::standard_gaussian, 4, t));
    std::vector<EvalPoint> pts{{0.0, 0, Side::plus}, {1.0, 1, Side::minus}};
    auto const a = empirical_cov(ens, pts);
    auto const b = empirical_cov(30, CoefficientLaw::standard_gaussian, 50, 4, pts, 3);
    EXPECT_TRUE(a.cov.isApprox(b.cov, 1e-14));
    EXPECT_EQ(a.cov(0, 1), a.cov(1, 0));
    EXPECT_THROW(empirical_cov(std::span<PolynomialSample const>{}, pts), std::invalid_argument);
    ens.push_back(sample_polynomial(31, CoefficientLaw::standard_gaussian, 4, 99));
    EXPECT_THROW(empirical_cov(ens, pts), std::invalid_argument);
}

TEST(CovarianceJackknife, MatchesBruteForceLeaveOneOut)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd v(40, 2);
    for (int i = 0; i < 40; ++i) {
        v(i, 0) = nd(rng);
        v(i, 1) = 0.5 * v(i, 0) + nd(rng);
    }
    auto const est = covariance_with_jackknife(v);
    std::vector<double> loo;
    for (int t = 0; t < 40; ++t) {
        Eigen::MatrixXd w(39, 2);
        for (int i = 0, r = 0; i < 40; ++i)
            if (i != t) w.row(r++) = v.row(i);
        Eigen::MatrixXd const c = w.rowwise() - w.colwise().mean();
        loo.push_back((c.col(0).dot(c.col(1))) / 38.0);
    }
    double m = 0.0;
    for (double x : loo) m += x / 40.0;
    double ss = 0.0;
    for (double x : loo) ss += (x - m) * (x - m);
    EXPECT_NEAR(est.se(0, 1), std::sqrt(39.0 / 40.0 * ss), 1e-12);
}

TEST(MomentBound, GridMaxBelowExpM)
{
    // Light version: the acceptance suite runs the full configuration.
    int const n = 100;
    for (double M : {1.0, 2.0}) {
        std::vector<double> maxima(3, 0.0);
        int const trials = 200;
        for (int t = 0; t < trials; ++t) {
            auto const p = sample_polynomial(n, CoefficientLaw::rademacher, 8, t);
            for (int j = 0; j <= 2; ++j) {
                double mx = 0.0;
                for (int i = -static_cast<int>(M * 100); i <= static_cast<int>(M * 100); ++i)
                    mx = std::max(mx, std::abs(eval_scaled(p, i / 100.0, Side::plus, j)));
                maxima[j] += mx / trials;
            }
        }
        for (int j = 0; j <= 2; ++j) EXPECT_LE(maxima[j], std::exp(M)) << "M=" << M << " j=" << j;
    }
}
