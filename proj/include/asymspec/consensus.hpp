#pragma once

// Filtered consensus on realized networks: Perron vectors, the consensus
// projector J = 1 l^T, convergence rates (1/d) ln rho(p(W) - J) and the
// Monte-Carlo comparison harness.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "filterdesign.hpp"
#include "grid.hpp"
#include "netmodel.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace asymspec {

/// Closed communicating classes of the chain with transition support W > 0.
struct ChainStructure {
    int closed_classes = 0;
    int period = 1; // of the closed class when there is exactly one
    bool ergodic() const { return closed_classes == 1 && period == 1; }
};

namespace detail {

/// Tarjan's strongly connected components on i -> j when W(i, j) > 0.
inline std::vector<int> strong_components(const Eigen::MatrixXd& w, int& count) {
    const int n = static_cast<int>(w.rows());
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (w(i, j) > 0.0) adj[i].push_back(j);

    std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
    std::vector<char> on_stack(n, 0);
    int next_index = 0;
    count = 0;
    // Iterative DFS: (node, next edge position).
    std::vector<std::pair<int, std::size_t>> dfs;
    for (int root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        dfs.emplace_back(root, 0);
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!dfs.empty()) {
            auto& [v, pos] = dfs.back();
            if (pos < adj[v].size()) {
                const int u = adj[v][pos++];
                if (index[u] < 0) {
                    index[u] = low[u] = next_index++;
                    stack.push_back(u);
                    on_stack[u] = 1;
                    dfs.emplace_back(u, 0);
                } else if (on_stack[u]) {
                    low[v] = std::min(low[v], index[u]);
                }
                continue;
            }
            if (low[v] == index[v]) {
                int u;
                do {
                    u = stack.back();
                    stack.pop_back();
                    on_stack[u] = 0;
                    comp[u] = count;
                } while (u != v);
                ++count;
            }
            const int finished = v;
            dfs.pop_back();
            if (!dfs.empty()) low[dfs.back().first] = std::min(low[dfs.back().first], low[finished]);
        }
    }
    return comp;
}

} // namespace detail

inline ChainStructure chain_structure(const Eigen::MatrixXd& w) {
    const int n = static_cast<int>(w.rows());
    int count = 0;
    const std::vector<int> comp = detail::strong_components(w, count);
    std::vector<char> leaks(static_cast<std::size_t>(count), 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (w(i, j) > 0.0 && comp[i] != comp[j]) leaks[comp[i]] = 1;
    ChainStructure cs;
    int closed = -1;
    for (int c = 0; c < count; ++c)
        if (!leaks[c]) {
            ++cs.closed_classes;
            closed = c;
        }
    if (cs.closed_classes != 1) return cs;

    // Period: gcd over edges (i -> j) inside the class of level(i) + 1 - level(j).
    std::vector<int> level(n, -1), queue;
    int start = -1;
    for (int i = 0; i < n && start < 0; ++i)
        if (comp[i] == closed) start = i;
    level[start] = 0;
    queue.push_back(start);
    int g = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int v = queue[head];
        for (int u = 0; u < n; ++u) {
            if (!(w(v, u) > 0.0) || comp[u] != closed) continue;
            if (level[u] < 0) {
                level[u] = level[v] + 1;
                queue.push_back(u);
            } else {
                g = std::gcd(g, std::abs(level[v] + 1 - level[u]));
            }
        }
    }
    cs.period = g == 0 ? 1 : g;
    return cs;
}

struct PerronResult {
    Eigen::VectorXd ell;
    ChainStructure structure;
    double residual = 0.0; // max |l^T W - l^T|
    int iterations = 0;
    bool ok() const { return structure.ergodic() && residual <= 1e-10; }
};

/// Left eigenvector of a row-stochastic W for eigenvalue 1, normalized to
/// sum 1. Power iteration on the lazy chain (I + W^T)/2, tolerance 1e-12;
/// a direct solve takes over if it has not converged after `max_iterations`.
inline PerronResult left_perron(const Eigen::MatrixXd& w, int max_iterations = 20000) {
    const auto n = w.rows();
    PerronResult res;
    res.structure = chain_structure(w);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd wt = w.transpose();
    bool converged = false;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd next = 0.5 * (x + wt * x);
        next /= next.sum();
        const double change = (next - x).lpNorm<1>();
        x = next;
        res.iterations = it + 1;
        if (change < 1e-12) {
            converged = true;
            break;
        }
    }
    if (!converged && res.structure.closed_classes == 1) {
        // (W^T - I) l = 0 with the last equation replaced by 1^T l = 1.
        Eigen::MatrixXd sys = wt - Eigen::MatrixXd::Identity(n, n);
        sys.row(n - 1).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs(n - 1) = 1.0;
        x = sys.partialPivLu().solve(rhs);
    }
    res.ell = x;
    res.residual = (wt * x - x).cwiseAbs().maxCoeff();
    return res;
}

/// J = 1 l^T.
inline Eigen::MatrixXd projector(const Eigen::VectorXd& ell) {
    return Eigen::VectorXd::Ones(ell.size()) * ell.transpose();
}

/// p(W) by Horner's rule on matrices.
inline Eigen::MatrixXd apply_polynomial(const Eigen::MatrixXd& w, const std::vector<double>& a) {
    const auto n = w.rows();
    Eigen::MatrixXd acc = a.back() * Eigen::MatrixXd::Identity(n, n);
    for (auto it = a.rbegin() + 1; it != a.rend(); ++it) {
        acc = acc * w;
        acc.diagonal().array() += *it;
    }
    return acc;
}

inline std::vector<cplx> eigenvalues(const Eigen::MatrixXd& m) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    if (es.info() != Eigen::Success) throw numerical_error("eigenvalue computation failed");
    const auto& ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

inline double spectral_radius(const Eigen::MatrixXd& m) {
    double rho = 0.0;
    for (const auto& e : eigenvalues(m)) rho = std::max(rho, std::abs(e));
    return rho;
}

inline constexpr double kRadiusFloor = 1e-15;

/// (1/d) ln rho(p(W) - J); -infinity when rho < 1e-15.
inline double convergence_rate(const Eigen::MatrixXd& w, const Eigen::VectorXd& ell, const FilterSpec& filter) {
    Eigen::MatrixXd m = apply_polynomial(w, filter.coefficients);
    m -= projector(ell);
    const double rho = spectral_radius(m);
    if (rho < kRadiusFloor) return -std::numeric_limits<double>::infinity();
    return std::log(rho) / filter.degree;
}

inline double convergence_rate(const IterationMatrix& w, const FilterSpec& filter) {
    const PerronResult perron = left_perron(w.entries);
    if (!perron.ok()) throw numerical_error("iteration matrix is reducible or periodic; consensus rate undefined");
    return convergence_rate(w.entries, perron.ell, filter);
}

// ---------------------------------------------------------------------------

struct RateRow {
    int trial = 0;
    std::uint64_t seed = 0;
    FilterMethod method = FilterMethod::trivial;
    int degree = 1;
    double rate = 0.0;
};

struct RateSummary {
    FilterMethod method = FilterMethod::trivial;
    int degree = 1;
    double median = 0.0, q25 = 0.0, q75 = 0.0;
    int excluded_trials = 0;
};

struct ConsensusOutcome {
    std::vector<RateRow> rows;
    std::vector<RateSummary> summary;
    int trials = 0;
    int excluded_trials = 0;
    std::vector<int> excluded; // trial indices
};

/// Filters whose design does not depend on the realized network, plus the
/// degrees for which an oracle filter is designed per trial.
struct FilterBank {
    std::vector<FilterSpec> fixed;
    std::vector<int> oracle_degrees;
    double kappa = 0.1;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline std::uint64_t trial_seed(std::uint64_t master, int trial) {
    return derive_seed(master, static_cast<std::uint64_t>(trial));
}

/// Samples `trials` networks and evaluates every filter in the bank on each.
/// Realizations whose iteration matrix is reducible or periodic are
/// excluded and counted. Deterministic given master_seed for any worker count.
inline ConsensusOutcome monte_carlo(const BlockModel& model, const FilterBank& bank, int trials,
                                    std::uint64_t master_seed, unsigned workers = 1) {
    if (trials < 1) throw config_error("trials must be positive");
    struct TrialResult {
        bool excluded = false;
        std::vector<RateRow> rows;
    };
    std::vector<TrialResult> results(static_cast<std::size_t>(trials));
    parallel_for(static_cast<std::size_t>(trials), workers, [&](std::size_t k) {
        const int trial = static_cast<int>(k);
        const std::uint64_t seed = trial_seed(master_seed, trial);
        const IterationMatrix w = iteration_matrix(sample_adjacency(model, seed), model.alpha);
        const PerronResult perron = left_perron(w.entries);
        TrialResult& out = results[k];
        if (!perron.ok()) {
            out.excluded = true;
            return;
        }
        for (const auto& f : bank.fixed)
            out.rows.push_back({trial, seed, f.method, f.degree, convergence_rate(w.entries, perron.ell, f)});
        if (!bank.oracle_degrees.empty()) {
            const std::vector<cplx> realized = eigenvalues(w.entries);
            for (int d : bank.oracle_degrees) {
                const FilterSpec f = oracle_filter(realized, d, bank.kappa);
                out.rows.push_back({trial, seed, f.method, d, convergence_rate(w.entries, perron.ell, f)});
            }
        }
    });

    ConsensusOutcome outcome;
    outcome.trials = trials;
    std::map<std::pair<int, int>, std::vector<double>> groups; // (method, degree) -> rates
    for (int k = 0; k < trials; ++k) {
        const auto& r = results[static_cast<std::size_t>(k)];
        if (r.excluded) {
            ++outcome.excluded_trials;
            outcome.excluded.push_back(k);
            continue;
        }
        for (const auto& row : r.rows) {
            outcome.rows.push_back(row);
            groups[{static_cast<int>(row.method), row.degree}].push_back(row.rate);
        }
    }
    for (auto& [key, rates] : groups) {
        std::sort(rates.begin(), rates.end());
        RateSummary s;
        s.method = static_cast<FilterMethod>(key.first);
        s.degree = key.second;
        s.median = quantile(rates, 0.5);
        s.q25 = quantile(rates, 0.25);
        s.q75 = quantile(rates, 0.75);
        s.excluded_trials = outcome.excluded_trials;
        outcome.summary.push_back(s);
    }
    return outcome;
}

// ---------------------------------------------------------------------------

/// Realized eigenvalues of W for each trial (trial seeds as in monte_carlo).
inline std::vector<std::vector<cplx>> sample_spectra(const BlockModel& model, int trials, std::uint64_t master_seed,
                                                     unsigned workers = 1) {
    if (model.nodes() > 2000) throw config_error("empirical spectra are limited to N <= 2000");
    std::vector<std::vector<cplx>> out(static_cast<std::size_t>(trials));
    parallel_for(out.size(), workers, [&](std::size_t k) {
        const auto seed = trial_seed(master_seed, static_cast<int>(k));
        out[k] = eigenvalues(iteration_matrix(sample_adjacency(model, seed), model.alpha).entries);
    });
    return out;
}

/// Counting-measure histogram: every eigenvalue carries mass 1/total, binned
/// to its nearest grid node. Eigenvalues beyond the grid's half-cell margin
/// are dropped and counted.
inline DensityField histogram_spectrum(const std::vector<std::vector<cplx>>& spectra, const GridSpec& grid,
                                       std::size_t* outside = nullptr) {
    grid.validate();
    DensityField field;
    field.grid = grid;
    field.values.assign(grid.size(), 0.0);
    field.support.assign(grid.size(), 1);
    std::size_t total = 0, dropped = 0;
    for (const auto& s : spectra) total += s.size();
    if (total == 0) return field;
    const double unit = 1.0 / (static_cast<double>(total) * grid.cell_area());
    for (const auto& s : spectra)
        for (const auto& e : s) {
            int i = 0, j = 0;
            if (grid.nearest(e, i, j))
                field.values[grid.index(i, j)] += unit;
            else
                ++dropped;
        }
    if (outside) *outside = dropped;
    return field;
}

/// Box covering the closed unit disk, where every eigenvalue of a
/// row-stochastic matrix lies.
inline GridSpec unit_disk_grid(int n_t = 201, int n_s = 201) { return {-1.05, 1.05, -1.05, 1.05, n_t, n_s}; }

inline DensityField empirical_spectrum(const BlockModel& model, int trials, const GridSpec& grid,
                                       std::uint64_t master_seed, unsigned workers = 1) {
    return histogram_spectrum(sample_spectra(model, trials, master_seed, workers), grid);
}

/// Eigenvalues other than the unit ones; a reducible W has one eigenvalue 1
/// per closed class.
inline std::vector<cplx> non_perron(const std::vector<cplx>& eigs, double tol = 1e-8) {
    std::vector<cplx> out;
    for (const auto& e : eigs)
        if (std::abs(e - 1.0) > tol) out.push_back(e);
    return out;
}

} // namespace asymspec
