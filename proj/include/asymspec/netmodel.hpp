#pragma once

// Directed stochastic block models: parameters, mean matrix, variance
// profile, analytic mean spectrum, sampled adjacency and the consensus
// iteration matrix W = (1 - alpha) I + alpha D^-1 A.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"

namespace asymspec {

using cplx = std::complex<double>;

/// Shorthand for a circulant link-probability matrix: `diag` inside each
/// population, `next` from population i to population i+1 (mod M).
struct CyclicTheta {
    double diag = 0.0;
    double next = 0.0;
};

struct ModelConfig {
    int populations = 0;      // M
    int population_size = 0;  // S
    std::variant<Eigen::MatrixXd, CyclicTheta> theta;
    double alpha = 1.0;
};

struct BlockModel {
    int populations = 0;
    int population_size = 0;
    Eigen::MatrixXd theta;
    double alpha = 1.0;

    // Diagnostics filled in by build_model.
    bool transitive = false;       // theta invariant under simultaneous cyclic shifts
    double normality_defect = 0.0; // max |theta theta^T - theta^T theta|
    bool normal = false;

    int nodes() const { return populations * population_size; }
    int population_of(int node) const { return node / population_size; }
    /// Link probability for the ordered node pair (i, j), i != j.
    double link_probability(int i, int j) const {
        return theta(population_of(i), population_of(j));
    }
};

inline constexpr double kNormalityTolerance = 1e-12;

inline Eigen::MatrixXd cyclic_theta(int populations, CyclicTheta c) {
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(populations, populations);
    for (int i = 0; i < populations; ++i) {
        theta(i, i) += c.diag;
        theta(i, (i + 1) % populations) += c.next;
    }
    return theta;
}

inline bool is_circulant(const Eigen::MatrixXd& theta) {
    const auto m = theta.rows();
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            if (theta(i, j) != theta((i + 1) % m, (j + 1) % m)) return false;
    return true;
}

inline double normality_defect(const Eigen::MatrixXd& a) {
    return (a * a.transpose() - a.transpose() * a).cwiseAbs().maxCoeff();
}

inline BlockModel build_model(const ModelConfig& config) {
    if (config.populations < 1 || config.population_size < 1)
        throw config_error("M and S must be positive integers");
    if (static_cast<long>(config.populations) * config.population_size < 2)
        throw config_error("model needs at least two nodes (M*S >= 2)");
    if (!(config.alpha > 0.0 && config.alpha <= 1.0))
        throw config_error("alpha must lie in (0, 1]");

    BlockModel model;
    model.populations = config.populations;
    model.population_size = config.population_size;
    model.alpha = config.alpha;
    if (const auto* c = std::get_if<CyclicTheta>(&config.theta)) {
        model.theta = cyclic_theta(config.populations, *c);
    } else {
        model.theta = std::get<Eigen::MatrixXd>(config.theta);
    }
    if (model.theta.rows() != model.theta.cols())
        throw config_error("theta must be square");
    if (model.theta.rows() != config.populations)
        throw config_error("theta must be M x M");
    for (Eigen::Index i = 0; i < model.theta.size(); ++i) {
        const double p = model.theta.data()[i];
        if (!(p >= 0.0 && p <= 1.0))
            throw config_error("link probability " + std::to_string(p) + " outside [0, 1]");
    }
    model.transitive = is_circulant(model.theta);
    model.normality_defect = normality_defect(model.theta);
    model.normal = model.normality_defect <= kNormalityTolerance;
    return model;
}

/// gamma = S * sum_j theta(0, j) - theta(0, 0): expected out-degree of a
/// node in population 0 (no self-loops).
inline double expected_row_sum(const BlockModel& model) {
    const double gamma =
        model.population_size * model.theta.row(0).sum() - model.theta(0, 0);
    if (!(gamma > 0.0))
        throw config_error("expected row sum is not positive; the graph is empty");
    return gamma;
}

/// B_N = theta (x) 1_{SxS} - theta(0,0) I.
inline Eigen::MatrixXd mean_matrix(const BlockModel& model) {
    const int n = model.nodes();
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            b(i, j) = model.link_probability(i, j);
    b.diagonal().array() -= model.theta(0, 0);
    return b;
}

enum class SpectrumScale { raw, scaled, iteration };

inline const char* to_string(SpectrumScale s) {
    switch (s) {
    case SpectrumScale::raw: return "raw";
    case SpectrumScale::scaled: return "scaled";
    case SpectrumScale::iteration: return "iteration";
    }
    return "?";
}

/// Eigenvalues of a mean matrix with multiplicities.
struct MeanSpectrum {
    std::vector<cplx> values;
    std::vector<long> multiplicity;
    double gamma = 1.0;
    SpectrumScale scale = SpectrumScale::raw;

    long total() const {
        long n = 0;
        for (long m : multiplicity) n += m;
        return n;
    }
    double weight(std::size_t r) const {
        return static_cast<double>(multiplicity[r]) / static_cast<double>(total());
    }
    /// Distinct values; entries closer than `tol` (relative to the spectral
    /// scale) are merged.
    MeanSpectrum distinct(double tol = 1e-10) const;
};

inline MeanSpectrum MeanSpectrum::distinct(double tol) const {
    double scale_ref = 1.0;
    for (const auto& v : values) scale_ref = std::max(scale_ref, std::abs(v));
    MeanSpectrum out;
    out.gamma = gamma;
    out.scale = scale;
    for (std::size_t r = 0; r < values.size(); ++r) {
        bool merged = false;
        for (std::size_t q = 0; q < out.values.size(); ++q) {
            if (std::abs(out.values[q] - values[r]) <= tol * scale_ref) {
                out.multiplicity[q] += multiplicity[r];
                merged = true;
                break;
            }
        }
        if (!merged) {
            out.values.push_back(values[r]);
            out.multiplicity.push_back(multiplicity[r]);
        }
    }
    return out;
}

/// Eigenvalues of theta. Circulant theta uses the DFT of its first row,
/// lambda_k = sum_j theta(0, j) w^{jk}, w = exp(2 pi i / M).
inline std::vector<cplx> theta_eigenvalues(const Eigen::MatrixXd& theta) {
    const auto m = theta.rows();
    std::vector<cplx> out;
    out.reserve(static_cast<std::size_t>(m));
    if (is_circulant(theta)) {
        for (Eigen::Index k = 0; k < m; ++k) {
            cplx acc = 0.0;
            for (Eigen::Index j = 0; j < m; ++j)
                acc += theta(0, j) * std::polar(1.0, 2.0 * std::numbers::pi * double(j * k) / double(m));
            out.push_back(acc);
        }
    } else {
        Eigen::EigenSolver<Eigen::MatrixXd> es(theta, false);
        for (Eigen::Index k = 0; k < m; ++k) out.push_back(es.eigenvalues()(k));
    }
    return out;
}

/// Spectrum of B_N lifted from theta through the Kronecker structure:
/// S lambda_k(theta) - theta_11 once each, and -theta_11 with multiplicity
/// M (S - 1). `scaled` divides by gamma; `iteration` maps to
/// 1 + alpha (lambda / gamma - 1), the spectrum of the mean iteration matrix.
inline MeanSpectrum mean_spectrum(const BlockModel& model, SpectrumScale scale) {
    const double gamma = expected_row_sum(model);
    const double diag = model.theta(0, 0);
    const double s = model.population_size;
    MeanSpectrum sp;
    sp.gamma = gamma;
    sp.scale = scale;
    for (const cplx& lam : theta_eigenvalues(model.theta)) {
        sp.values.push_back(s * lam - diag);
        sp.multiplicity.push_back(1);
    }
    const long degenerate = static_cast<long>(model.populations) * (model.population_size - 1);
    if (degenerate > 0) {
        sp.values.emplace_back(-diag, 0.0);
        sp.multiplicity.push_back(degenerate);
    }
    for (auto& v : sp.values) {
        switch (scale) {
        case SpectrumScale::raw: break;
        case SpectrumScale::scaled: v /= gamma; break;
        case SpectrumScale::iteration: v = 1.0 + model.alpha * (v / gamma - 1.0); break;
        }
    }
    return sp;
}

/// Second moments of the centralized, scaled matrix Xi = A / gamma.
struct VarianceProfile {
    double row_sum = 0.0;
    double col_sum = 0.0;
    Eigen::MatrixXd block_variances; // M x M, per-entry variance of Xi
    bool transitive = false;         // row_sum == col_sum within 1e-12
};

inline VarianceProfile variance_profile(const BlockModel& model) {
    const double gamma = expected_row_sum(model);
    const double g2 = gamma * gamma;
    const Eigen::MatrixXd bern = model.theta.array() * (1.0 - model.theta.array());
    const double s = model.population_size;
    VarianceProfile vp;
    vp.block_variances = bern / g2;
    vp.row_sum = (s * bern.row(0).sum() - bern(0, 0)) / g2;
    vp.col_sum = (s * bern.col(0).sum() - bern(0, 0)) / g2;
    vp.transitive = std::abs(vp.row_sum - vp.col_sum) <= 1e-12 && model.transitive;
    return vp;
}

/// Per-entry variance matrix of Xi (N x N, zero diagonal).
inline Eigen::MatrixXd entry_variances(const BlockModel& model) {
    const VarianceProfile vp = variance_profile(model);
    const int n = model.nodes();
    Eigen::MatrixXd sigma2(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            sigma2(i, j) = i == j ? 0.0 : vp.block_variances(model.population_of(i), model.population_of(j));
    return sigma2;
}

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Adjacency {
    BinaryMatrix entries;
    std::uint64_t seed = 0;
};

inline Adjacency sample_adjacency(const BlockModel& model, std::uint64_t seed) {
    const int n = model.nodes();
    Adjacency adj;
    adj.seed = seed;
    adj.entries = BinaryMatrix::Zero(n, n);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double p = model.link_probability(i, j);
            if (p > 0.0 && uniform01(rng) < p) adj.entries(i, j) = 1;
        }
    return adj;
}

struct IterationMatrix {
    Eigen::MatrixXd entries;
    double alpha = 1.0;
    int repaired_rows = 0; // zero out-degree rows replaced by a self-loop
};

inline IterationMatrix iteration_matrix(const Adjacency& adj, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw config_error("alpha must lie in (0, 1]");
    const auto n = adj.entries.rows();
    IterationMatrix w;
    w.alpha = alpha;
    w.entries = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double degree = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) degree += adj.entries(i, j);
        if (degree == 0.0) {
            w.entries(i, i) = 1.0;
            ++w.repaired_rows;
            continue;
        }
        for (Eigen::Index j = 0; j < n; ++j)
            if (adj.entries(i, j)) w.entries(i, j) = alpha / degree;
        w.entries(i, i) += 1.0 - alpha;
    }
    return w;
}

} // namespace asymspec
