#pragma once

// Girko's K25 canonical equations for random matrices with independent
// entries, and the density approximation built from them.
//
// For a node-transitive variance profile and a normal mean matrix the
// per-node system collapses to two scalars (c1, c2):
//
//   c1 = u + V_row * mean_r 1 / (c2 + |lambda_r - z|^2 / c1)
//   c2 = 1 + V_col * mean_r 1 / (c1 + |lambda_r - z|^2 / c2)
//   m  =            mean_r 1 / (c1 + |lambda_r - z|^2 / c2)
//
// and the density is -(1/4pi) Laplacian_z of Phi(z) = int_beta^uMax m du.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "grid.hpp"
#include "netmodel.hpp"
#include "parallel.hpp"

namespace asymspec {

struct CanonicalPair {
    double c1 = 0.0;
    double c2 = 0.0;
    double u = 0.0;
    cplx z = 0.0;
    int iterations = 0;
};

struct SolverOptions {
    double tolerance = 1e-10;
    int max_iterations = 10000;
    double damping = 0.5; // fixed-point fallback weight
};

namespace detail {

/// Squared distances |lambda_r - z|^2 and weights for one z.
struct SpectrumAt {
    std::vector<double> dist2;
    std::vector<double> weight;

    SpectrumAt(const MeanSpectrum& spectrum, cplx z) {
        dist2.reserve(spectrum.values.size());
        weight.reserve(spectrum.values.size());
        for (std::size_t r = 0; r < spectrum.values.size(); ++r) {
            dist2.push_back(std::norm(spectrum.values[r] - z));
            weight.push_back(spectrum.weight(r));
        }
    }
};

struct PairMap {
    double f1, f2;             // F(c)
    double d11, d12, d21, d22; // dF_i / dc_j
};

inline PairMap evaluate_pair(double u, double v_row, double v_col, const SpectrumAt& sp,
                             double c1, double c2, bool with_jacobian) {
    double s1 = 0, s2 = 0, a11 = 0, a12 = 0, a21 = 0, a22 = 0;
    for (std::size_t r = 0; r < sp.dist2.size(); ++r) {
        const double w = sp.weight[r], d2 = sp.dist2[r];
        const double a = 1.0 / (c2 + d2 / c1);
        const double b = 1.0 / (c1 + d2 / c2);
        s1 += w * a;
        s2 += w * b;
        if (with_jacobian) {
            a11 += w * a * a * d2 / (c1 * c1);
            a12 -= w * a * a;
            a21 -= w * b * b;
            a22 += w * b * b * d2 / (c2 * c2);
        }
    }
    return {u + v_row * s1, 1.0 + v_col * s2, v_row * a11, v_row * a12, v_col * a21, v_col * a22};
}

inline double log_residual(const PairMap& f, double c1, double c2) {
    return std::max(std::abs(std::log(f.f1 / c1)), std::abs(std::log(f.f2 / c2)));
}

} // namespace detail

/// Solves the reduced canonical pair at (u, z).
///
/// Newton's method in (ln c1, ln c2) with a residual line search; a damped
/// fixed-point step is taken whenever the Newton step fails to reduce the
/// residual. Converged when |ln F(c) - ln c| < tolerance componentwise.
inline CanonicalPair solve_pair(double u, cplx z, double v_row, double v_col,
                                const MeanSpectrum& spectrum,
                                std::optional<std::array<double, 2>> start = std::nullopt,
                                const SolverOptions& opt = {}) {
    if (!(u > 0.0)) throw numerical_error("solve_pair: u must be positive");
    if (v_row < 0.0 || v_col < 0.0) throw numerical_error("solve_pair: negative variance sum");
    if (spectrum.values.empty()) throw numerical_error("solve_pair: empty spectrum");

    const detail::SpectrumAt sp(spectrum, z);
    double c1 = start ? (*start)[0] : u + 1.0;
    double c2 = start ? (*start)[1] : 2.0;

    CanonicalPair out;
    out.u = u;
    out.z = z;
    int polish = 0; // Newton steps taken after reaching the tolerance
    for (int it = 0; it < opt.max_iterations; ++it) {
        const auto f = detail::evaluate_pair(u, v_row, v_col, sp, c1, c2, true);
        const double r1 = std::log(f.f1 / c1), r2 = std::log(f.f2 / c2);
        const double err = std::max(std::abs(r1), std::abs(r2));
        out.c1 = c1;
        out.c2 = c2;
        out.iterations = it;
        const bool converged = err < opt.tolerance;
        if (err == 0.0 || (converged && polish >= 2)) return out;

        // Jacobian of r = ln F(c) - ln c with respect to ln c.
        const double j11 = f.d11 * c1 / f.f1 - 1.0, j12 = f.d12 * c2 / f.f1;
        const double j21 = f.d21 * c1 / f.f2, j22 = f.d22 * c2 / f.f2 - 1.0;
        const double det = j11 * j22 - j12 * j21;
        double x1 = -(j22 * r1 - j12 * r2) / det;
        double x2 = -(-j21 * r1 + j11 * r2) / det;

        bool accepted = false;
        if (std::isfinite(x1) && std::isfinite(x2)) {
            x1 = std::clamp(x1, -2.0, 2.0);
            x2 = std::clamp(x2, -2.0, 2.0);
            for (double step = 1.0; step > 1e-9; step *= 0.5) {
                const double n1 = c1 * std::exp(step * x1), n2 = c2 * std::exp(step * x2);
                const auto g = detail::evaluate_pair(u, v_row, v_col, sp, n1, n2, false);
                if (detail::log_residual(g, n1, n2) < err) {
                    c1 = n1;
                    c2 = n2;
                    accepted = true;
                    break;
                }
            }
        }
        if (converged) {
            // Past the tolerance, keep polishing only while Newton improves.
            if (!accepted) return out;
            ++polish;
            continue;
        }
        if (!accepted) {
            c1 = (1.0 - opt.damping) * c1 + opt.damping * f.f1;
            c2 = (1.0 - opt.damping) * c2 + opt.damping * f.f2;
        }
    }
    throw numerical_error("solve_pair: no convergence at u=" + std::to_string(u) + " z=(" +
                          std::to_string(z.real()) + "," + std::to_string(z.imag()) + ")");
}

/// m(u, z) = mean_r 1 / (c1 + |lambda_r - z|^2 / c2).
inline double m_value(const CanonicalPair& pair, cplx z, const MeanSpectrum& spectrum) {
    double m = 0.0;
    for (std::size_t r = 0; r < spectrum.values.size(); ++r)
        m += spectrum.weight(r) / (pair.c1 + std::norm(spectrum.values[r] - z) / pair.c2);
    return m;
}

struct QuadratureOptions {
    double beta = 1e-6;
    double u_max = 1e2;
    int nodes = 200;
    SolverOptions solver{};
};

struct PhiResult {
    double value = 0.0;
    double dm_du_at_beta = 0.0; // one-sided difference over the two smallest nodes
    int max_iterations = 0;
};

/// Phi(z) = int_beta^uMax m(u, z) du.
///
/// Nodes are equally spaced in ln u and m(u) u d(ln u) is integrated by the
/// trapezoid rule with fourth-order end corrections (weights 3/8, 7/6, 23/24
/// at each end). The pair is solved from uMax downwards, each node
/// warm-started from the previous one.
inline PhiResult phi_integral_detail(cplx z, double v_row, double v_col, const MeanSpectrum& spectrum,
                                     const QuadratureOptions& q = {}) {
    if (!(q.beta > 0.0 && q.beta < q.u_max)) throw config_error("quadrature needs 0 < beta < uMax");
    if (q.nodes < 6) throw config_error("quadrature needs at least six nodes");
    const double x_hi = std::log(q.u_max), x_lo = std::log(q.beta);
    const double dx = (x_hi - x_lo) / (q.nodes - 1);

    PhiResult res;
    std::optional<std::array<double, 2>> start;
    double sum = 0.0, m_prev = 0.0, u_prev = 0.0;
    for (int k = 0; k < q.nodes; ++k) {
        const double u = k + 1 == q.nodes ? q.beta : std::exp(x_hi - k * dx);
        const CanonicalPair pair = solve_pair(u, z, v_row, v_col, spectrum, start, q.solver);
        start = std::array<double, 2>{pair.c1, pair.c2};
        res.max_iterations = std::max(res.max_iterations, pair.iterations);
        const double m = m_value(pair, z, spectrum);
        static constexpr double end_weights[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
        const int from_end = std::min(k, q.nodes - 1 - k);
        const double w = from_end < 3 ? end_weights[from_end] : 1.0;
        sum += w * m * u;
        if (k + 1 == q.nodes) res.dm_du_at_beta = (m - m_prev) / (u - u_prev);
        m_prev = m;
        u_prev = u;
    }
    res.value = sum * dx;
    return res;
}

inline double phi_integral(cplx z, double v_row, double v_col, const MeanSpectrum& spectrum,
                           double beta = 1e-6, double u_max = 1e2, int nodes = 200) {
    QuadratureOptions q;
    q.beta = beta;
    q.u_max = u_max;
    q.nodes = nodes;
    return phi_integral_detail(z, v_row, v_col, spectrum, q).value;
}

struct DensityOptions {
    QuadratureOptions quadrature{};
    /// Points with |dm/du| at beta above factor / beta^2 are treated as
    /// lying in the region where the limit density vanishes.
    double divergence_factor = 10.0;
    /// Negative values above -clip_fraction * max are noise and clipped
    /// silently; more negative values are clipped and counted.
    double clip_fraction = 1e-3;
    unsigned workers = 1;
};

/// Default grid: bounding box of the spectrum padded by 3 sqrt(V_row) (at
/// least 0.1) on every side.
inline GridSpec default_grid(const MeanSpectrum& spectrum, double v_row, int n_t = 201, int n_s = 201) {
    double t0 = std::numeric_limits<double>::infinity(), t1 = -t0, s0 = t0, s1 = -t0;
    for (const auto& v : spectrum.values) {
        t0 = std::min(t0, v.real());
        t1 = std::max(t1, v.real());
        s0 = std::min(s0, v.imag());
        s1 = std::max(s1, v.imag());
    }
    const double pad = std::max(3.0 * std::sqrt(v_row), 0.1);
    // Conjugate-closed spectra give a box symmetric in s; enforce it exactly.
    const double s_abs = std::max(std::abs(s0), std::abs(s1)) + pad;
    return GridSpec{t0 - pad, t1 + pad, -s_abs, s_abs, n_t, n_s};
}

/// Approximate spectral density of a matrix with mean spectrum `spectrum`
/// (normal mean) and node-transitive variance sums on `grid`.
inline DensityField density_field(double v_row, double v_col, const MeanSpectrum& spectrum,
                                  const GridSpec& grid, const DensityOptions& opt = {}) {
    grid.validate();
    DensityField field;
    field.grid = grid;
    field.beta = opt.quadrature.beta;
    field.u_max = opt.quadrature.u_max;
    field.quadrature_nodes = opt.quadrature.nodes;

    const std::size_t n = grid.size();
    std::vector<double> phi(n, 0.0);
    std::vector<double> slope(n, 0.0);
    // One row of constant t per work item.
    parallel_for(static_cast<std::size_t>(grid.n_t), opt.workers, [&](std::size_t i) {
        for (int j = 0; j < grid.n_s; ++j) {
            const std::size_t k = grid.index(static_cast<int>(i), j);
            const auto res = phi_integral_detail(grid.point(static_cast<int>(i), j), v_row, v_col,
                                                 spectrum, opt.quadrature);
            phi[k] = res.value;
            slope[k] = res.dm_du_at_beta;
        }
    });

    field.values.assign(n, 0.0);
    field.support.assign(n, 0);
    const double ht2 = grid.ht() * grid.ht(), hs2 = grid.hs() * grid.hs();
    const double divergence_limit = opt.divergence_factor / (opt.quadrature.beta * opt.quadrature.beta);
    for (int i = 1; i + 1 < grid.n_t; ++i) {
        for (int j = 1; j + 1 < grid.n_s; ++j) {
            const std::size_t k = grid.index(i, j);
            const double lap = (phi[grid.index(i + 1, j)] - 2.0 * phi[k] + phi[grid.index(i - 1, j)]) / ht2 +
                               (phi[grid.index(i, j + 1)] - 2.0 * phi[k] + phi[grid.index(i, j - 1)]) / hs2;
            const double f = -lap / (4.0 * std::numbers::pi);
            if (!std::isfinite(f) || std::abs(slope[k]) > divergence_limit) {
                ++field.masked_points;
                continue;
            }
            field.values[k] = f;
            field.support[k] = 1;
        }
    }

    const double peak = field.max_value();
    for (double& v : field.values) {
        if (v >= 0.0) continue;
        ++field.clipped_negatives;
        if (v < -opt.clip_fraction * peak) ++field.flagged_negatives;
        field.clipped_mass += v * grid.cell_area();
        v = 0.0;
    }
    return field;
}

/// Pushes a density of Xi forward to W = 1 + alpha (Xi - 1):
/// f_W(x, y) = f_Xi((x - 1)/alpha + 1, y / alpha) / alpha^2.
/// Grid nodes map onto grid nodes, so mass is preserved exactly.
inline DensityField transform_to_iteration(const DensityField& xi, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw config_error("alpha must lie in (0, 1]");
    DensityField w = xi;
    if (alpha == 1.0) return w;
    w.grid.t_min = 1.0 + alpha * (xi.grid.t_min - 1.0);
    w.grid.t_max = 1.0 + alpha * (xi.grid.t_max - 1.0);
    w.grid.s_min = alpha * xi.grid.s_min;
    w.grid.s_max = alpha * xi.grid.s_max;
    const double jac = 1.0 / (alpha * alpha);
    for (double& v : w.values) v *= jac;
    w.clipped_mass = xi.clipped_mass;
    return w;
}

/// Whether the scalar reduction applies to the model: circulant theta,
/// normal mean and equal variance sums.
inline void require_scalar_reduction(const BlockModel& model, const VarianceProfile& vp) {
    if (!model.transitive)
        throw config_error("model is not node-transitive (theta is not invariant under cyclic relabeling)");
    if (!model.normal) throw config_error("theta is not a normal matrix");
    if (!vp.transitive) throw config_error("variance profile row and column sums differ");
}

/// Density of Xi = A / gamma for a block model on its default (or given) grid.
inline DensityField approximate_density(const BlockModel& model, std::optional<GridSpec> grid = std::nullopt,
                                        const DensityOptions& opt = {}) {
    const VarianceProfile vp = variance_profile(model);
    require_scalar_reduction(model, vp);
    const MeanSpectrum spectrum = mean_spectrum(model, SpectrumScale::scaled).distinct();
    const GridSpec g = grid ? *grid : default_grid(spectrum, vp.row_sum);
    return density_field(vp.row_sum, vp.col_sum, spectrum, g, opt);
}

// ---------------------------------------------------------------------------
// Full per-node system, used as an oracle for the scalar reduction.

struct GeneralSolution {
    Eigen::VectorXd c1;
    Eigen::VectorXd c2;
    double m = 0.0;
    int iterations = 0;
};

inline constexpr int kGeneralOracleMaxNodes = 200;

namespace detail {

struct GeneralMap {
    Eigen::VectorXd f1, f2;
    double m;
};

inline GeneralMap evaluate_general(const Eigen::MatrixXd& sigma2, const Eigen::MatrixXcd& bz, double u,
                                   const Eigen::VectorXd& c1, const Eigen::VectorXd& c2) {
    const auto n = bz.rows();
    const Eigen::MatrixXcd ident = Eigen::MatrixXcd::Identity(n, n);
    // (C2 + Bz^* C1^-1 Bz)^-1 and (C1 + Bz C2^-1 Bz^*)^-1 diagonals.
    Eigen::MatrixXcd g1 = bz.adjoint() * c1.cwiseInverse().cast<cplx>().asDiagonal() * bz;
    g1.diagonal() += c2.cast<cplx>();
    Eigen::MatrixXcd g2 = bz * c2.cwiseInverse().cast<cplx>().asDiagonal() * bz.adjoint();
    g2.diagonal() += c1.cast<cplx>();
    const Eigen::VectorXd d1 = g1.llt().solve(ident).diagonal().real();
    const Eigen::VectorXd d2 = g2.llt().solve(ident).diagonal().real();
    GeneralMap out;
    out.f1 = (sigma2 * d1).array() + u;
    out.f2 = (sigma2.transpose() * d2).array() + 1.0;
    out.m = d2.mean();
    return out;
}

} // namespace detail

/// Solves the full diagonal system for C1, C2 at (u, z) and returns
/// m = tr (C1 + (B - z)C2^-1(B - z)^*)^-1 / N.
///
/// Newton in log coordinates with a forward-difference Jacobian, falling
/// back to damped fixed-point steps. Refuses N > 200.
inline GeneralSolution general_canonical(const Eigen::MatrixXd& sigma2, const Eigen::MatrixXd& b, double u,
                                         cplx z, const SolverOptions& opt = {}) {
    const auto n = b.rows();
    if (b.cols() != n || sigma2.rows() != n || sigma2.cols() != n)
        throw config_error("general_canonical: dimension mismatch");
    if (n > kGeneralOracleMaxNodes) throw config_error("general_canonical is an oracle limited to N <= 200");
    if (!(u > 0.0)) throw numerical_error("general_canonical: u must be positive");

    Eigen::MatrixXcd bz = b.cast<cplx>();
    bz.diagonal().array() -= z;

    const auto dim = 2 * n;
    Eigen::VectorXd x(dim); // ln c1, ln c2
    x.head(n).setConstant(std::log(u + 1.0));
    x.tail(n).setConstant(std::log(2.0));

    auto residual = [&](const Eigen::VectorXd& lx, double* m = nullptr) {
        const Eigen::VectorXd c1 = lx.head(n).array().exp(), c2 = lx.tail(n).array().exp();
        const auto f = detail::evaluate_general(sigma2, bz, u, c1, c2);
        if (m) *m = f.m;
        Eigen::VectorXd r(dim);
        r.head(n) = f.f1.array().log() - lx.head(n).array();
        r.tail(n) = f.f2.array().log() - lx.tail(n).array();
        return r;
    };

    GeneralSolution sol;
    auto finish = [&](int it) {
        sol.iterations = it;
        sol.c1 = x.head(n).array().exp();
        sol.c2 = x.tail(n).array().exp();
        residual(x, &sol.m);
        return sol;
    };
    Eigen::VectorXd r = residual(x);
    int polish = 0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const double err = r.cwiseAbs().maxCoeff();
        const bool converged = err < opt.tolerance;
        if (err == 0.0 || (converged && polish >= 3)) return finish(it);
        Eigen::MatrixXd jac(dim, dim);
        const double h = 1e-7;
        for (Eigen::Index k = 0; k < dim; ++k) {
            Eigen::VectorXd xp = x;
            xp(k) += h;
            jac.col(k) = (residual(xp) - r) / h;
        }
        Eigen::VectorXd step = jac.partialPivLu().solve(-r);
        bool accepted = false;
        if (step.allFinite()) {
            step = step.cwiseMax(-2.0).cwiseMin(2.0);
            for (double t = 1.0; t > 1e-9; t *= 0.5) {
                const Eigen::VectorXd xn = x + t * step;
                const Eigen::VectorXd rn = residual(xn);
                if (rn.cwiseAbs().maxCoeff() < err) {
                    x = xn;
                    r = rn;
                    accepted = true;
                    break;
                }
            }
        }
        if (converged) {
            if (!accepted) return finish(it);
            ++polish;
            continue;
        }
        if (!accepted) {
            const Eigen::VectorXd c = x.array().exp();
            const Eigen::VectorXd fc = (r.array() + x.array()).exp();
            x = ((1.0 - opt.damping) * c + opt.damping * fc).array().log();
            r = residual(x);
        }
    }
    throw numerical_error("general_canonical: no convergence");
}

} // namespace asymspec
