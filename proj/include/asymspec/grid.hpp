#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace asymspec {

/// Uniform rectangular grid over the complex plane, t = Re, s = Im.
/// Node (i, j) sits at (t_min + i ht, s_min + j hs); storage is row-major
/// with t as the outer index.
struct GridSpec {
    double t_min = -1.0, t_max = 1.0;
    double s_min = -1.0, s_max = 1.0;
    int n_t = 201, n_s = 201;

    double ht() const { return (t_max - t_min) / (n_t - 1); }
    double hs() const { return (s_max - s_min) / (n_s - 1); }
    double t(int i) const { return t_min + i * ht(); }
    double s(int j) const { return s_min + j * hs(); }
    std::complex<double> point(int i, int j) const { return {t(i), s(j)}; }
    std::size_t size() const { return static_cast<std::size_t>(n_t) * static_cast<std::size_t>(n_s); }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_s + j; }
    double cell_area() const { return ht() * hs(); }

    void validate() const {
        if (n_t < 3 || n_s < 3) throw config_error("grid needs at least 3 points per axis");
        if (!(t_max > t_min) || !(s_max > s_min)) throw config_error("grid bounds are empty");
    }

    /// Nearest node to z, or false when z lies outside the half-cell margin
    /// around the grid.
    bool nearest(std::complex<double> z, int& i, int& j) const {
        const double fi = (z.real() - t_min) / ht();
        const double fj = (z.imag() - s_min) / hs();
        i = static_cast<int>(std::lround(fi));
        j = static_cast<int>(std::lround(fj));
        return i >= 0 && i < n_t && j >= 0 && j < n_s;
    }
};

/// Nonnegative density on a GridSpec together with how it was produced.
struct DensityField {
    GridSpec grid;
    std::vector<double> values;          // density per unit area, row-major
    std::vector<std::uint8_t> support;   // 1 where the value is valid
    double beta = 0.0;
    double u_max = 0.0;
    int quadrature_nodes = 0;

    // Cleanup diagnostics.
    std::size_t masked_points = 0;
    std::size_t clipped_negatives = 0;
    std::size_t flagged_negatives = 0;
    double clipped_mass = 0.0; // Riemann mass removed by clipping (<= 0)

    double at(int i, int j) const { return values[grid.index(i, j)]; }
    double max_value() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, v);
        return m;
    }
    /// Density at the node nearest to z; zero outside the grid.
    double sample(std::complex<double> z) const {
        int i = 0, j = 0;
        if (!grid.nearest(z, i, j)) return 0.0;
        return at(i, j);
    }
};

/// Riemann-sum integral of the field over its grid.
inline double field_mass(const DensityField& field) {
    double acc = 0.0;
    for (double v : field.values) acc += v;
    return acc * field.grid.cell_area();
}

} // namespace asymspec
