#pragma once

// Grid samples of the limiting Gaussian process g with covariance
// E g(x) g(y) = I_0(x + y), and the zeros of those samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

#include "rrlab/kernel_moments.hpp"
#include "rrlab/parallel.hpp"
#include "rrlab/rng.hpp"
#include "rrlab/root_finder.hpp"

namespace rrlab {

struct GridSpec {
    double M = 1.0;
    double step = 0.01;
    bool include_derivative = false;

    long half_count() const { return std::lround(M / step); }
    std::size_t size() const { return static_cast<std::size_t>(2 * half_count() + 1); }
    double node(std::size_t i) const { return static_cast<double>(static_cast<long>(i) - half_count()) * step; }

    void validate() const
    {
        if (!(step > 0.0)) throw std::invalid_argument("GridSpec: step must be positive");
        if (!(M >= 0.0)) throw std::invalid_argument("GridSpec: M must be non-negative");
        double const ratio = M / step;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
            throw std::invalid_argument("GridSpec: M / step must be an integer");
    }
};

struct PathSample {
    GridSpec grid;
    std::uint64_t path_id = 0;
    std::vector<double> values;
    std::vector<double> derivatives;  // empty unless grid.include_derivative
};

class FactorizationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Covariance of (g^{(o)}(x)) over all (x, o) pairs, order-major:
/// index = order_index * points.size() + point_index.
inline Eigen::MatrixXd gram_matrix(std::span<double const> points, std::span<int const> orders)
{
    std::vector<double> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("gram_matrix: duplicate points");
    for (int o : orders)
        if (o < 0 || o > 2) throw std::invalid_argument("gram_matrix: order outside [0, 2]");

    KernelMoments const km;
    auto const P = static_cast<Eigen::Index>(points.size());
    auto const dim = P * static_cast<Eigen::Index>(orders.size());
    Eigen::MatrixXd G(dim, dim);
    for (Eigen::Index a = 0; a < dim; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
            double const v = km.cov(orders[static_cast<std::size_t>(a / P)], orders[static_cast<std::size_t>(b / P)],
                                    points[static_cast<std::size_t>(a % P)], points[static_cast<std::size_t>(b % P)]);
            G(a, b) = G(b, a) = v;
        }
    }
    return G;
}

inline double min_eigenvalue(Eigen::MatrixXd const& G)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

struct CovarianceFactor {
    Eigen::MatrixXd factor;  // F with F F^T = G up to rounding
    double jitter = 0.0;
};

/// Symmetric factor of a covariance matrix G via its eigendecomposition.
///
/// The decomposition runs on the correlation matrix C = S^{-1} G S^{-1},
/// S = diag(sqrt(G_ii)), and the factor is scaled back by S. Kernel
/// variances span many orders of magnitude over wide grids, and a cutoff
/// relative to the largest eigenvalue of G itself would erase the
/// low-variance nodes. Eigenvalues of C below 64 dim eps of the largest are
/// rounding noise and are dropped. If the decomposition fails or shows a
/// clearly negative eigenvalue, a diagonal jitter of 1e-12 (C has unit
/// diagonal, so this is 1e-12 trace / dim) is added to C and escalated
/// tenfold up to three times.
inline CovarianceFactor factor_covariance(Eigen::MatrixXd const& G)
{
    auto const dim = G.rows();
    Eigen::VectorXd scale = G.diagonal().cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < dim; ++i)
        if (!(scale(i) > 0.0)) scale(i) = 1.0;
    Eigen::MatrixXd const C = scale.cwiseInverse().asDiagonal() * G * scale.cwiseInverse().asDiagonal();
    double const base = 1e-12 * C.trace() / static_cast<double>(dim);
    for (int attempt = 0; attempt <= 3; ++attempt) {
        Eigen::MatrixXd A = C;
        double const jitter = attempt == 0 ? 0.0 : base * std::pow(10.0, attempt - 1);
        A.diagonal().array() += jitter;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        if (es.info() != Eigen::Success) continue;
        Eigen::VectorXd const lambda = es.eigenvalues();
        double const lmax = lambda.maxCoeff();
        if (!(lmax > 0.0) || lambda.minCoeff() < -1e-10 * A.trace()) continue;
        double const cut = 64.0 * static_cast<double>(dim) * std::numeric_limits<double>::epsilon() * lmax;
        std::vector<Eigen::Index> keep;
        for (Eigen::Index k = dim - 1; k >= 0; --k)
            if (lambda(k) > cut) keep.push_back(k);
        CovarianceFactor out;
        out.jitter = jitter;
        out.factor.resize(dim, static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c)
            out.factor.col(static_cast<Eigen::Index>(c)) =
                scale.asDiagonal() * es.eigenvectors().col(keep[c]) * std::sqrt(lambda(keep[c]));
        return out;
    }
    throw FactorizationFailure("factor_covariance: factorization failed after jitter escalation");
}

/// Draws grid paths of g (and g' when requested) from factor_covariance of the Gram matrix.
class GaussianPathSampler {
public:
    explicit GaussianPathSampler(GridSpec grid) : grid_(grid)
    {
        grid_.validate();
        std::vector<double> xs(grid_.size());
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = grid_.node(i);
        std::vector<int> orders{0};
        if (grid_.include_derivative) orders.push_back(1);
        gram_ = gram_matrix(xs, orders);
        auto f = factor_covariance(gram_);
        factor_ = std::move(f.factor);
        jitter_ = f.jitter;
    }

    GridSpec const& grid() const { return grid_; }
    Eigen::MatrixXd const& gram() const { return gram_; }
    Eigen::MatrixXd const& factor() const { return factor_; }
    double jitter() const { return jitter_; }

    PathSample sample(std::uint64_t seed, std::uint64_t path_id) const
    {
        Engine rng = make_engine(seed, path_id, kGaussianPaths);
        boost::random::normal_distribution<double> normal;
        Eigen::VectorXd z(factor_.cols());
        for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
        Eigen::VectorXd const v = factor_ * z;

        PathSample path;
        path.grid = grid_;
        path.path_id = path_id;
        auto const P = static_cast<Eigen::Index>(grid_.size());
        path.values.assign(v.data(), v.data() + P);
        if (grid_.include_derivative) path.derivatives.assign(v.data() + P, v.data() + 2 * P);
        return path;
    }

private:
    GridSpec grid_;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd factor_;
    double jitter_ = 0.0;
};

inline std::vector<PathSample> sample_paths(GridSpec const& grid, std::size_t count, std::uint64_t seed,
                                            unsigned workers = 1)
{
    GaussianPathSampler const sampler(grid);
    return parallel_map<PathSample>(count, workers, [&](std::size_t i) { return sampler.sample(seed, i); });
}

namespace detail {

// Root of the cubic Hermite interpolant on [a, b] by bisection; requires
// fa and fb of opposite sign.
inline double hermite_root(double a, double b, double fa, double fb, double da, double db)
{
    double const h = b - a;
    auto H = [&](double x) {
        double const t = (x - a) / h;
        double const t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * fa + (t3 - 2 * t2 + t) * h * da + (-2 * t3 + 3 * t2) * fb + (t3 - t2) * h * db;
    };
    double lo = a, hi = b, flo = fa;
    for (int it = 0; it < 100 && hi - lo > 1e-14 * std::max(1.0, std::abs(a)); ++it) {
        double const mid = 0.5 * (lo + hi);
        double const fm = H(mid);
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Zeros of a grid path: sign changes located by linear interpolation (cubic
/// Hermite when derivatives are present). A same-sign node that is a local
/// minimum of |value| is tested for a hidden pair: with derivatives via the
/// turning slopes, otherwise via the parabola through the three nodes.
/// Pairs found that way are reported uncertified.
inline RootPointSet roots_of_path(PathSample const& path)
{
    RootPointSet out;
    out.side = Side::plus;
    out.window = path.grid.M;
    out.trial = path.path_id;
    auto const& v = path.values;
    bool const deriv = !path.derivatives.empty();
    auto const& d = path.derivatives;
    std::size_t const P = v.size();
    auto x = [&](std::size_t i) { return path.grid.node(i); };
    auto push = [&](double r, bool ok) {
        out.points.push_back(r);
        out.certified.push_back(ok ? 1 : 0);
    };

    for (std::size_t i = 0; i + 1 < P; ++i) {
        double const a = x(i), b = x(i + 1);
        if (v[i] == 0.0) {
            push(a, true);
            continue;
        }
        if (v[i + 1] == 0.0) continue;
        if ((v[i] > 0) != (v[i + 1] > 0)) {
            double const r = deriv ? detail::hermite_root(a, b, v[i], v[i + 1], d[i], d[i + 1])
                                   : a + (b - a) * v[i] / (v[i] - v[i + 1]);
            push(r, true);
            continue;
        }
        if (deriv) {
            bool const turning = (v[i] > 0 && d[i] < 0 && d[i + 1] > 0) || (v[i] < 0 && d[i] > 0 && d[i + 1] < 0);
            if (!turning) continue;
            // Turning point of the Hermite cubic in t = (x - a)/h; a sign flip
            // there brackets one root on each side.
            double const h = b - a;
            double const c1 = h * d[i];
            double const c2 = -3 * v[i] - 2 * h * d[i] + 3 * v[i + 1] - h * d[i + 1];
            double const c3 = 2 * v[i] + h * d[i] - 2 * v[i + 1] + h * d[i + 1];
            auto H = [&](double t) { return v[i] + t * (c1 + t * (c2 + t * c3)); };
            std::vector<double> crit;
            if (c3 == 0.0) {
                if (c2 != 0.0) crit.push_back(-c1 / (2 * c2));
            } else if (double const disc = c2 * c2 - 3 * c3 * c1; disc >= 0.0) {
                double const q = -(c2 + std::copysign(std::sqrt(disc), c2));
                crit.push_back(q / (3 * c3));
                if (q != 0.0) crit.push_back(c1 / q);
            }
            double tm = -1.0;
            for (double t : crit)
                if (t > 0.0 && t < 1.0 && H(t) != 0.0 && (H(t) > 0) != (v[i] > 0)) tm = t;
            if (tm < 0.0) continue;
            auto bisect = [&](double lo, double hi) {
                bool const lo_sign = H(lo) > 0;
                for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
                    double const mid = 0.5 * (lo + hi);
                    ((H(mid) > 0) == lo_sign ? lo : hi) = mid;
                }
                return a + h * 0.5 * (lo + hi);
            };
            push(bisect(0.0, tm), false);
            push(bisect(tm, 1.0), false);
        } else if (i > 0) {
            // Parabola through nodes i-1, i, i+1 when node i is the closest to zero.
            double const y0 = v[i - 1], y1 = v[i], y2 = v[i + 1];
            if ((y0 > 0) != (y1 > 0)) continue;
            if (!(std::abs(y1) < std::abs(y0) && std::abs(y1) <= std::abs(y2))) continue;
            double const h = b - a;
            double const A = (y0 - 2 * y1 + y2) / (2 * h * h);
            double const B = (y2 - y0) / (2 * h);
            double const disc = B * B - 4 * A * y1;
            if (A == 0.0 || disc <= 0.0) continue;
            double const sq = std::sqrt(disc);
            for (double u : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
                if (u > -h && u < h) push(a + u, false);
            }
        }
    }
    if (P > 0 && v[P - 1] == 0.0) push(x(P - 1), true);

    std::vector<std::size_t> order(out.points.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](auto l, auto r) { return out.points[l] < out.points[r]; });
    RootPointSet sorted = out;
    sorted.points.clear();
    sorted.certified.clear();
    for (auto k : order) {
        sorted.points.push_back(out.points[k]);
        sorted.certified.push_back(out.certified[k]);
    }
    return sorted;
}

}  // namespace rrlab
