#pragma once

// Consensus-acceleration polynomial filters p(x) = sum_k a_k x^k with
// p(1) = 1, designed to minimize max_i |p(lambda_i)|^2 over sample points
// drawn from a spectral density's filtering region.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "grid.hpp"
#include "netmodel.hpp"
#include "rng.hpp"

namespace asymspec {

enum class FilterMethod { trivial, mean, proposed, oracle };

inline const char* to_string(FilterMethod m) {
    switch (m) {
    case FilterMethod::trivial: return "trivial";
    case FilterMethod::mean: return "mean";
    case FilterMethod::proposed: return "proposed";
    case FilterMethod::oracle: return "oracle";
    }
    return "?";
}

inline FilterMethod parse_filter_method(const std::string& s) {
    if (s == "trivial") return FilterMethod::trivial;
    if (s == "mean") return FilterMethod::mean;
    if (s == "proposed") return FilterMethod::proposed;
    if (s == "oracle") return FilterMethod::oracle;
    throw config_error("unknown filter method '" + s + "'");
}

struct FilterSpec {
    int degree = 1;
    std::vector<double> coefficients; // a_0 .. a_d
    double epsilon = 0.0;             // max |p(lambda)|^2 over the design points
    FilterMethod method = FilterMethod::proposed;
    /// Set when the design points can all be annihilated exactly and the
    /// minimax problem carries no information (epsilon = 0).
    bool degenerate = false;
};

/// p(lambda) by Horner's rule.
inline cplx response(const std::vector<double>& a, cplx lambda) {
    cplx acc = 0.0;
    for (auto it = a.rbegin(); it != a.rend(); ++it) acc = acc * lambda + *it;
    return acc;
}

inline cplx response(const FilterSpec& f, cplx lambda) { return response(f.coefficients, lambda); }

/// Detection threshold for the filtering region: absolute density, or a
/// fraction of the field maximum.
struct Threshold {
    double value = 0.02;
    bool relative = true;

    double resolve(const DensityField& field) const { return relative ? value * field.max_value() : value; }
};

struct SampleRegion {
    double kappa = 0.1;
    double tau = 0.0; // absolute threshold applied
    std::vector<cplx> points;
};

// ---------------------------------------------------------------------------

struct QuadraticForm {
    Eigen::MatrixXd matrix;
    cplx lambda;
};

/// Q(lambda) = (V^* V + conj(V)^* conj(V)) / 2 with V = [lambda^0 .. lambda^d].
/// Entry (j, k) is Re(conj(lambda^j) lambda^k), i.e. Q = r r^T + s s^T with
/// r, s the real and imaginary parts of V.
inline QuadraticForm build_quadratic(cplx lambda, int degree) {
    if (degree < 1) throw config_error("filter degree must be at least 1");
    Eigen::VectorXd re(degree + 1), im(degree + 1);
    cplx power = 1.0;
    for (int k = 0; k <= degree; ++k) {
        re(k) = power.real();
        im(k) = power.imag();
        power *= lambda;
    }
    return {re * re.transpose() + im * im.transpose(), lambda};
}

// ---------------------------------------------------------------------------

namespace detail {

/// Canonical representative of {lambda, conj(lambda)}: imaginary part >= 0.
inline cplx upper(cplx z) { return {z.real(), std::abs(z.imag())}; }

inline std::vector<cplx> dedup_conjugates(const std::vector<cplx>& points, double tol = 1e-12) {
    std::vector<cplx> pts;
    pts.reserve(points.size());
    for (const auto& p : points) pts.push_back(upper(p));
    std::sort(pts.begin(), pts.end(), [](cplx a, cplx b) {
        return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    });
    std::vector<cplx> out;
    for (const auto& p : pts) {
        bool dup = false;
        for (auto it = out.rbegin(); it != out.rend() && p.real() - it->real() <= tol; ++it)
            if (std::abs(p - *it) <= tol) {
                dup = true;
                break;
            }
        if (!dup) out.push_back(p);
    }
    return out;
}

/// Real and imaginary parts of the Vandermonde rows, one pair per point.
struct DesignRows {
    Eigen::MatrixXd re; // points x (d+1)
    Eigen::MatrixXd im;

    DesignRows(const std::vector<cplx>& pts, int degree)
        : re(static_cast<Eigen::Index>(pts.size()), degree + 1), im(static_cast<Eigen::Index>(pts.size()), degree + 1) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            cplx power = 1.0;
            for (int k = 0; k <= degree; ++k) {
                re(static_cast<Eigen::Index>(i), k) = power.real();
                im(static_cast<Eigen::Index>(i), k) = power.imag();
                power *= pts[i];
            }
        }
    }

    Eigen::VectorXd values(const Eigen::VectorXd& a) const {
        const Eigen::VectorXd x = re * a, y = im * a;
        return x.cwiseAbs2() + y.cwiseAbs2();
    }
    double max_value(const Eigen::VectorXd& a) const { return values(a).maxCoeff(); }
};

/// Exact annihilation: a with sum 1 and p(lambda_i) = 0 for every point,
/// when the interpolation system is consistent.
inline bool try_annihilate(const std::vector<cplx>& pts, int degree, Eigen::VectorXd& a) {
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    rows.push_back(Eigen::VectorXd::Ones(degree + 1));
    rhs.push_back(1.0);
    for (const auto& p : pts) {
        Eigen::VectorXd r(degree + 1), s(degree + 1);
        cplx power = 1.0;
        for (int k = 0; k <= degree; ++k) {
            r(k) = power.real();
            s(k) = power.imag();
            power *= p;
        }
        rows.push_back(r);
        rhs.push_back(0.0);
        if (p.imag() != 0.0) {
            rows.push_back(s);
            rhs.push_back(0.0);
        }
    }
    if (static_cast<int>(rows.size()) > degree + 1) return false;
    Eigen::MatrixXd sys(static_cast<Eigen::Index>(rows.size()), degree + 1);
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sys.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        b(static_cast<Eigen::Index>(i)) = rhs[i];
    }
    a = sys.completeOrthogonalDecomposition().solve(b);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (sys * a - b).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

/// Orthonormal basis of {x : 1^T x = 0} (columns).
inline Eigen::MatrixXd sum_zero_basis(int n) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Ones(n, 1));
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    return q.rightCols(n - 1);
}

/// min_{a: 1^T a = 1} max_i a^T Q_i a by a log-barrier interior point method
/// in the variables (x, t), a = a0 + N x:
///   minimize mu t - sum_i log(t - f_i(x)).
inline Eigen::VectorXd barrier_minimax(const DesignRows& rows, int degree) {
    const int n = degree + 1;
    const auto m = rows.re.rows();
    const Eigen::MatrixXd basis = sum_zero_basis(n);
    const Eigen::MatrixXd rb = rows.re * basis, ib = rows.im * basis; // m x d

    // Start from the least-squares filter: minimize sum_i f_i on the slice.
    const Eigen::VectorXd a_uniform = Eigen::VectorXd::Constant(n, 1.0 / n);
    Eigen::MatrixXd stacked(2 * m, n - 1);
    stacked << rb, ib;
    Eigen::VectorXd target(2 * m);
    target << -(rows.re * a_uniform), -(rows.im * a_uniform);
    const Eigen::VectorXd x0 = stacked.completeOrthogonalDecomposition().solve(target);
    const Eigen::VectorXd a0 = a_uniform + basis * x0;

    const Eigen::VectorXd p0 = rows.re * a0, q0 = rows.im * a0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n - 1);
    auto residuals = [&](const Eigen::VectorXd& xv, Eigen::VectorXd& p, Eigen::VectorXd& q) {
        p = p0 + rb * xv;
        q = q0 + ib * xv;
    };
    Eigen::VectorXd p, q;
    residuals(x, p, q);
    double fmax = (p.cwiseAbs2() + q.cwiseAbs2()).maxCoeff();
    double t = 2.0 * fmax + 1e-300;
    double mu = static_cast<double>(m) / std::max(t, 1e-300);

    const int dim = n; // x (n - 1) plus t
    for (int outer = 0; outer < 80; ++outer) {
        for (int inner = 0; inner < 100; ++inner) {
            residuals(x, p, q);
            const Eigen::VectorXd f = p.cwiseAbs2() + q.cwiseAbs2();
            const Eigen::VectorXd slack = (t - f.array()).matrix();
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
            Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
            for (Eigen::Index i = 0; i < m; ++i) {
                const double g = 1.0 / slack(i);
                Eigen::VectorXd df(dim);
                df.head(n - 1) = 2.0 * (p(i) * rb.row(i).transpose() + q(i) * ib.row(i).transpose());
                df(n - 1) = -1.0;
                grad += g * df;
                hess += g * g * df * df.transpose();
                hess.topLeftCorner(n - 1, n - 1).noalias() +=
                    g * 2.0 * (rb.row(i).transpose() * rb.row(i) + ib.row(i).transpose() * ib.row(i));
            }
            grad(n - 1) += mu;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
            Eigen::VectorXd step = ldlt.solve(-grad);
            if (!step.allFinite() || ldlt.info() != Eigen::Success)
                step = hess.completeOrthogonalDecomposition().solve(-grad);
            const double decrement = -grad.dot(step);
            if (!(decrement > 1e-14)) break;

            auto objective = [&](const Eigen::VectorXd& xv, double tv) {
                Eigen::VectorXd pp, qq;
                residuals(xv, pp, qq);
                const Eigen::ArrayXd s = tv - (pp.cwiseAbs2() + qq.cwiseAbs2()).array();
                if ((s <= 0.0).any()) return std::numeric_limits<double>::infinity();
                return mu * tv - s.log().sum();
            };
            const double f0 = objective(x, t);
            double alpha = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
                const Eigen::VectorXd xn = x + alpha * step.head(n - 1);
                const double tn = t + alpha * step(n - 1);
                const double fn = objective(xn, tn);
                if (fn <= f0 - 0.25 * alpha * decrement) {
                    x = xn;
                    t = tn;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        residuals(x, p, q);
        fmax = (p.cwiseAbs2() + q.cwiseAbs2()).maxCoeff();
        // Duality gap of the centered point is m / mu.
        if (static_cast<double>(m) / mu <= 1e-14 * fmax) break;
        mu *= 8.0;
    }
    return a0 + basis * x;
}

} // namespace detail

/// Minimax filter on the given points:
///   min eps  s.t.  1^T a = 1,  a^T Q(lambda_i) a <= eps for all i.
/// Points are reduced to one representative per conjugate pair first, so
/// duplicated or conjugated inputs give identical designs.
inline FilterSpec design_filter(const std::vector<cplx>& points, int degree,
                                FilterMethod method = FilterMethod::proposed) {
    if (degree < 1) throw config_error("filter degree must be at least 1");
    const std::vector<cplx> pts = detail::dedup_conjugates(points);
    if (pts.empty()) throw config_error("filter design needs at least one sample point");

    const detail::DesignRows rows(pts, degree);
    FilterSpec spec;
    spec.degree = degree;
    spec.method = method;
    Eigen::VectorXd a;
    if (detail::try_annihilate(pts, degree, a)) {
        spec.degenerate = true;
    } else {
        a = detail::barrier_minimax(rows, degree);
    }
    // Remove the rounding drift in the affine constraint.
    a.array() += (1.0 - a.sum()) / static_cast<double>(a.size());
    spec.coefficients.assign(a.data(), a.data() + a.size());
    spec.epsilon = rows.max_value(a);
    return spec;
}

inline FilterSpec design_filter(const SampleRegion& region, int degree) {
    if (region.points.empty()) throw config_error("sample region is empty");
    return design_filter(region.points, degree, FilterMethod::proposed);
}

/// Independent cross-check: projected subgradient descent with Polyak steps
/// against a decreasing estimate of the optimum. Slow and approximate.
inline FilterSpec design_filter_subgradient(const std::vector<cplx>& points, int degree, int iterations = 20000) {
    const std::vector<cplx> pts = detail::dedup_conjugates(points);
    if (pts.empty()) throw config_error("filter design needs at least one sample point");
    const detail::DesignRows rows(pts, degree);
    const int n = degree + 1;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    a(degree) = 1.0;
    Eigen::VectorXd best = a;
    double best_value = rows.max_value(a);
    for (int k = 0; k < iterations; ++k) {
        const Eigen::VectorXd vals = rows.values(a);
        Eigen::Index worst = 0;
        const double fa = vals.maxCoeff(&worst);
        if (fa < best_value) {
            best_value = fa;
            best = a;
        }
        const double pr = rows.re.row(worst).dot(a), pi = rows.im.row(worst).dot(a);
        Eigen::VectorXd g = 2.0 * (pr * rows.re.row(worst).transpose() + pi * rows.im.row(worst).transpose());
        g.array() -= g.mean(); // project onto the sum-zero subspace
        const double gn = g.squaredNorm();
        if (gn == 0.0) break;
        const double target = best_value * (1.0 - 1.0 / (10.0 + k));
        a -= ((fa - target) / gn) * g;
    }
    FilterSpec spec;
    spec.degree = degree;
    spec.coefficients.assign(best.data(), best.data() + best.size());
    spec.epsilon = best_value;
    return spec;
}

/// Largest decrease of the design objective found among random feasible
/// perturbations of the given magnitude (<= 0 means none improved).
inline double local_improvement(const FilterSpec& filter, const std::vector<cplx>& points, int trials = 200,
                                double magnitude = 1e-4, std::uint64_t seed = 7) {
    const std::vector<cplx> pts = detail::dedup_conjugates(points);
    const detail::DesignRows rows(pts, filter.degree);
    const Eigen::Map<const Eigen::VectorXd> a(filter.coefficients.data(),
                                              static_cast<Eigen::Index>(filter.coefficients.size()));
    const double base = rows.max_value(a);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < trials; ++k) {
        Eigen::VectorXd d(a.size());
        for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = gauss(rng);
        d.array() -= d.mean();
        d *= magnitude / d.norm();
        best = std::max(best, base - rows.max_value(a + d));
    }
    return best;
}

// ---------------------------------------------------------------------------

namespace detail {

/// Farthest-point selection of `count` points from `pool`, seeded with the
/// already chosen points (or pool[0] when none are chosen).
inline void farthest_point_fill(const std::vector<cplx>& pool, std::size_t count, std::vector<cplx>& chosen) {
    if (pool.empty() || count == 0) return;
    std::vector<double> dist(pool.size(), std::numeric_limits<double>::infinity());
    auto absorb = [&](cplx c) {
        for (std::size_t i = 0; i < pool.size(); ++i) dist[i] = std::min(dist[i], std::abs(pool[i] - c));
    };
    for (const auto& c : chosen) absorb(c);
    std::size_t added = 0;
    if (chosen.empty()) {
        chosen.push_back(pool[0]);
        absorb(pool[0]);
        ++added;
    }
    while (added < count) {
        const auto it = std::max_element(dist.begin(), dist.end());
        if (*it <= 0.0) break;
        const cplx c = pool[static_cast<std::size_t>(it - dist.begin())];
        chosen.push_back(c);
        absorb(c);
        ++added;
    }
}

} // namespace detail

/// Grid points with density > tau and |p - 1| > kappa, one per conjugate pair.
/// At most `max_points` are kept: the region's boundary points first (a
/// polynomial's maximum modulus over a region is attained there), then
/// interior points by farthest-point selection.
inline SampleRegion extract_region(const DensityField& field, double kappa, Threshold threshold,
                                   std::size_t max_points = 400) {
    if (!(kappa > 0.0)) throw config_error("kappa must be positive");
    const GridSpec& g = field.grid;
    const double tau = threshold.resolve(field);
    auto inside = [&](int i, int j) {
        return field.at(i, j) > tau && std::abs(g.point(i, j) - 1.0) > kappa;
    };

    std::vector<cplx> boundary, interior;
    for (int i = 0; i < g.n_t; ++i) {
        for (int j = 0; j < g.n_s; ++j) {
            if (g.s(j) < -1e-12 * g.hs()) continue; // lower half mirrors the upper
            if (!inside(i, j)) continue;
            const bool edge = i == 0 || j == 0 || i + 1 == g.n_t || j + 1 == g.n_s || !inside(i - 1, j) ||
                              !inside(i + 1, j) || !inside(i, j - 1) || !inside(i, j + 1);
            cplx p = g.point(i, j);
            if (std::abs(p.imag()) < 1e-12 * g.hs()) p = {p.real(), 0.0};
            (edge ? boundary : interior).push_back(p);
        }
    }
    if (boundary.empty() && interior.empty())
        throw config_error("filtering region is empty (tau too high or kappa too large)");

    SampleRegion region;
    region.kappa = kappa;
    region.tau = tau;
    if (boundary.size() + interior.size() <= max_points) {
        region.points = boundary;
        region.points.insert(region.points.end(), interior.begin(), interior.end());
        return region;
    }
    if (boundary.size() >= max_points) {
        detail::farthest_point_fill(boundary, max_points, region.points);
        return region;
    }
    region.points = boundary;
    detail::farthest_point_fill(interior, max_points - boundary.size(), region.points);
    return region;
}

// ---------------------------------------------------------------------------

inline FilterSpec trivial_filter(int degree) {
    if (degree < 1) throw config_error("filter degree must be at least 1");
    FilterSpec f;
    f.degree = degree;
    f.coefficients.assign(static_cast<std::size_t>(degree) + 1, 0.0);
    f.coefficients.back() = 1.0;
    f.method = FilterMethod::trivial;
    f.epsilon = 0.0;
    return f;
}

/// Eigenvalues farther than kappa from 1.
inline std::vector<cplx> outside_kappa(const std::vector<cplx>& eigs, double kappa) {
    std::vector<cplx> out;
    for (const auto& e : eigs)
        if (std::abs(e - 1.0) > kappa) out.push_back(e);
    return out;
}

/// Filter designed on the distinct eigenvalues of the mean iteration matrix.
/// With K distinct eigenvalues (including 1), degrees d >= K leave the
/// problem with nothing to trade off; such designs are flagged degenerate.
inline FilterSpec mean_filter(const MeanSpectrum& iteration_spectrum, int degree, double kappa) {
    const MeanSpectrum distinct = iteration_spectrum.distinct();
    const auto pts = outside_kappa(distinct.values, kappa);
    if (pts.empty()) throw config_error("mean spectrum has no eigenvalue outside the kappa disk");
    FilterSpec f = design_filter(pts, degree, FilterMethod::mean);
    f.degenerate = degree >= static_cast<int>(distinct.values.size());
    return f;
}

/// Filter designed on the realized eigenvalues of one network.
inline FilterSpec oracle_filter(const std::vector<cplx>& realized, int degree, double kappa) {
    const auto pts = outside_kappa(realized, kappa);
    if (pts.empty()) throw config_error("no realized eigenvalue outside the kappa disk");
    return design_filter(pts, degree, FilterMethod::oracle);
}

} // namespace asymspec
