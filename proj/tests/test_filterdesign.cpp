#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "asymspec/filterdesign.hpp"

using namespace asymspec;

namespace {

double max_response2(const FilterSpec& f, const std::vector<cplx>& pts) {
    double m = 0.0;
    for (const auto& p : pts) m = std::max(m, std::norm(response(f, p)));
    return m;
}

double coefficient_sum(const FilterSpec& f) {
    double s = 0.0;
    for (double a : f.coefficients) s += a;
    return s;
}

/// Degree-1 optimum by direct search: p(l) = 1 + c (l - 1), minimize over c.
double degree_one_sweep(const std::vector<cplx>& pts) {
    auto objective = [&](double c) {
        double m = 0.0;
        for (const auto& p : pts) m = std::max(m, std::norm(1.0 + c * (p - 1.0)));
        return m;
    };
    double best_c = 0.0, best = objective(0.0);
    for (double c = -20.0; c <= 20.0; c += 1e-3) {
        const double v = objective(c);
        if (v < best) {
            best = v;
            best_c = c;
        }
    }
    // Golden-section refinement of the convex 1-D objective.
    double lo = best_c - 2e-3, hi = best_c + 2e-3;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int k = 0; k < 200; ++k) {
        const double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
        if (objective(x1) < objective(x2))
            hi = x2;
        else
            lo = x1;
    }
    return objective(0.5 * (lo + hi));
}

std::vector<cplx> random_points(std::mt19937_64& rng, int count) {
    std::uniform_real_distribution<double> r(0.05, 0.8), th(0.0, std::numbers::pi);
    std::vector<cplx> pts;
    for (int k = 0; k < count; ++k) pts.push_back(std::polar(r(rng), th(rng)));
    return pts;
}

DensityField blank_field(GridSpec g) {
    DensityField f;
    f.grid = g;
    f.values.assign(g.size(), 0.0);
    f.support.assign(g.size(), 1);
    return f;
}

} // namespace

TEST(BuildQuadratic, HandExpansions) {
    const QuadraticForm q0 = build_quadratic(0.0, 1);
    EXPECT_EQ(q0.matrix, (Eigen::Matrix2d() << 1, 0, 0, 0).finished());
    const QuadraticForm qi = build_quadratic(cplx(0, 1), 1);
    EXPECT_LT((qi.matrix - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-16);
    const QuadraticForm qh = build_quadratic(0.5, 1);
    EXPECT_EQ(qh.matrix, (Eigen::Matrix2d() << 1, 0.5, 0.5, 0.25).finished());
    EXPECT_THROW(build_quadratic(0.5, 0), config_error);
}

TEST(BuildQuadratic, SymmetricPsdAndMatchesResponse) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int k = 0; k < 100; ++k) {
        const int d = 1 + static_cast<int>(rng() % 6);
        const cplx lambda(u(rng), u(rng));
        Eigen::VectorXd a(d + 1);
        for (int i = 0; i <= d; ++i) a(i) = u(rng);
        const QuadraticForm q = build_quadratic(lambda, d);
        EXPECT_LT((q.matrix - q.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.matrix);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
        const std::vector<double> coeffs(a.data(), a.data() + a.size());
        EXPECT_NEAR(a.dot(q.matrix * a), std::norm(response(coeffs, lambda)), 1e-10);
    }
}

TEST(Response, Examples) {
    EXPECT_NEAR(std::abs(response(trivial_filter(3), 0.5) - 0.125), 0.0, 1e-16);
    EXPECT_NEAR(std::abs(response(std::vector<double>{-1, 2}, 0.2) - cplx(-0.6)), 0.0, 1e-15);
    EXPECT_EQ(response(trivial_filter(4), 1.0), cplx(1.0));
}

TEST(DesignFilter, SinglePointRootPlacement) {
    const FilterSpec f = design_filter(std::vector<cplx>{0.5}, 1);
    ASSERT_EQ(f.coefficients.size(), 2u);
    EXPECT_NEAR(f.coefficients[0], -1.0, 1e-12);
    EXPECT_NEAR(f.coefficients[1], 2.0, 1e-12);
    EXPECT_LT(f.epsilon, 1e-12);
    for (double l0 : {-0.7, 0.0, 0.3, 0.9}) {
        const FilterSpec g = design_filter(std::vector<cplx>{l0}, 1);
        EXPECT_NEAR(g.coefficients[0], -l0 / (1 - l0), 1e-12);
        EXPECT_NEAR(g.coefficients[1], 1 / (1 - l0), 1e-12);
        for (int d = 2; d <= 6; ++d) {
            const FilterSpec h = design_filter(std::vector<cplx>{l0}, d);
            EXPECT_LT(h.epsilon, 1e-12);
            EXPECT_NEAR(coefficient_sum(h), 1.0, 1e-12);
        }
    }
}

TEST(DesignFilter, TwoPointMidpointRoot) {
    const FilterSpec f = design_filter(std::vector<cplx>{0.2, 0.8}, 1);
    EXPECT_NEAR(f.epsilon, 0.36, 1e-6);
    EXPECT_NEAR(f.coefficients[0], -1.0, 1e-6);
    EXPECT_NEAR(f.coefficients[1], 2.0, 1e-6);
    EXPECT_NEAR(std::abs(response(f, 0.2)), 0.6, 1e-6);
    EXPECT_NEAR(std::abs(response(f, 0.8)), 0.6, 1e-6);
}

TEST(DesignFilter, DegreeOneMatchesSweep) {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 20; ++k) {
        const auto pts = random_points(rng, 2 + static_cast<int>(rng() % 8));
        const FilterSpec f = design_filter(pts, 1);
        EXPECT_NEAR(f.epsilon, degree_one_sweep(pts), 1e-7);
    }
}

TEST(DesignFilter, AgreesWithSubgradientCrossCheck) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> r(0.3, 0.9), th(0.0, std::numbers::pi);
    for (int k = 0; k < 12; ++k) {
        const int d = 2 + k % 3;
        std::vector<cplx> pts;
        for (int i = 0; i < 4 * d + 8; ++i) pts.push_back(std::polar(r(rng), th(rng)));
        const FilterSpec f = design_filter(pts, d);
        const FilterSpec g = design_filter_subgradient(pts, d, 200000);
        EXPECT_GE(g.epsilon, f.epsilon - 1e-9);
        EXPECT_LT(g.epsilon - f.epsilon, 5e-3 * f.epsilon) << "d=" << d;
    }
}

TEST(DesignFilter, InvariantsAndLocalOptimality) {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 20; ++k) {
        const int d = 1 + k % 6;
        const auto pts = random_points(rng, 3 * d + 4);
        const FilterSpec f = design_filter(pts, d);
        EXPECT_EQ(static_cast<int>(f.coefficients.size()), d + 1);
        EXPECT_NEAR(coefficient_sum(f), 1.0, 1e-12);
        EXPECT_NEAR(f.epsilon, max_response2(f, pts), 1e-9);
        EXPECT_LE(local_improvement(f, pts), 1e-10);
        EXPECT_NEAR(std::abs(response(f, 1.0)), 1.0, 1e-12);
    }
}

TEST(DesignFilter, DedupAndConjugationInvariance) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 10; ++k) {
        const int d = 1 + k % 4;
        const auto pts = random_points(rng, 8);
        auto dup = pts;
        dup.insert(dup.end(), pts.begin(), pts.begin() + 4);
        std::vector<cplx> conj;
        for (const auto& p : pts) conj.push_back(std::conj(p));
        auto both = pts;
        both.insert(both.end(), conj.begin(), conj.end());
        const FilterSpec f = design_filter(pts, d);
        EXPECT_EQ(design_filter(dup, d).coefficients, f.coefficients);
        EXPECT_EQ(design_filter(conj, d).coefficients, f.coefficients);
        EXPECT_EQ(design_filter(both, d).coefficients, f.coefficients);
    }
}

TEST(DesignFilter, MonotoneInDegree) {
    std::mt19937_64 rng(6);
    for (int k = 0; k < 5; ++k) {
        const auto pts = random_points(rng, 30);
        double prev = std::numeric_limits<double>::infinity();
        for (int d = 1; d <= 6; ++d) {
            const double eps = design_filter(pts, d).epsilon;
            EXPECT_LE(eps, prev + 1e-10);
            prev = eps;
        }
    }
}

TEST(DesignFilter, Errors) {
    EXPECT_THROW(design_filter(std::vector<cplx>{}, 2), config_error);
    EXPECT_THROW(design_filter(std::vector<cplx>{0.5}, 0), config_error);
    EXPECT_THROW(design_filter(SampleRegion{0.1, 0.0, {}}, 2), config_error);
}

TEST(Baselines, Trivial) {
    EXPECT_EQ(trivial_filter(2).coefficients, (std::vector<double>{0, 0, 1}));
    EXPECT_EQ(trivial_filter(2).method, FilterMethod::trivial);
    EXPECT_THROW(trivial_filter(0), config_error);
}

TEST(Baselines, MeanFilterOnReferenceModel) {
    const BlockModel model = build_model({5, 200, CyclicTheta{0.05, 0.03}, 1.0});
    const MeanSpectrum it = mean_spectrum(model, SpectrumScale::iteration);
    const auto pts = outside_kappa(it.distinct().values, 0.1);
    EXPECT_EQ(pts.size(), 5u);
    const FilterSpec f = mean_filter(it, 3, 0.1);
    EXPECT_EQ(f.method, FilterMethod::mean);
    EXPECT_FALSE(f.degenerate);
    EXPECT_GT(f.epsilon, 0.0);
    EXPECT_EQ(f.coefficients, design_filter(pts, 3).coefficients);
    EXPECT_LT(mean_filter(it, 5, 0.1).epsilon, 1e-20);
    EXPECT_TRUE(mean_filter(it, 6, 0.1).degenerate);
}

TEST(Baselines, OracleOnThreeCycle) {
    // Eigenvalues of the 3-cycle permutation: 1 and exp(+-2 pi i / 3).
    const std::vector<cplx> eigs{1.0, std::polar(1.0, 2 * std::numbers::pi / 3),
                                 std::polar(1.0, -2 * std::numbers::pi / 3)};
    const FilterSpec f = oracle_filter(eigs, 1, 0.1);
    EXPECT_EQ(f.method, FilterMethod::oracle);
    EXPECT_NEAR(std::abs(response(f, eigs[1])), std::abs(response(f, eigs[2])), 1e-14);
    EXPECT_NEAR(f.epsilon, degree_one_sweep({eigs[1], eigs[2]}), 1e-9);
    EXPECT_NEAR(f.epsilon, 0.25, 1e-9);
    EXPECT_THROW(oracle_filter({1.0, 1.05}, 1, 0.1), config_error);
}

TEST(FilterMethod, RoundTrip) {
    for (auto m : {FilterMethod::trivial, FilterMethod::mean, FilterMethod::proposed, FilterMethod::oracle})
        EXPECT_EQ(parse_filter_method(to_string(m)), m);
    EXPECT_THROW(parse_filter_method("best"), config_error);
}

TEST(ExtractRegion, SingleAtom) {
    DensityField f = blank_field({-1, 1.5, -1, 1, 51, 41});
    int i = 0, j = 0;
    ASSERT_TRUE(f.grid.nearest(0.3, i, j));
    f.values[f.grid.index(i, j)] = 5.0;
    const SampleRegion r = extract_region(f, 0.1, Threshold{0.0, false});
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_NEAR(std::abs(r.points[0] - 0.3), 0.0, 1e-12);
}

TEST(ExtractRegion, PerronAtomOnlyIsEmpty) {
    DensityField f = blank_field({-1, 1.5, -1, 1, 51, 41});
    int i = 0, j = 0;
    ASSERT_TRUE(f.grid.nearest(1.0, i, j));
    f.values[f.grid.index(i, j)] = 5.0;
    EXPECT_THROW(extract_region(f, 0.1, Threshold{0.0, false}), config_error);
    EXPECT_THROW(extract_region(f, 0.0, Threshold{0.0, false}), config_error);
}

TEST(ExtractRegion, ThinsWithBoundaryRetention) {
    // Uniform disk of radius 0.6 centred at 0.
    DensityField f = blank_field({-1, 1.2, -1, 1, 111, 101});
    for (int i = 0; i < f.grid.n_t; ++i)
        for (int j = 0; j < f.grid.n_s; ++j)
            if (std::abs(f.grid.point(i, j)) < 0.6) f.values[f.grid.index(i, j)] = 1.0;
    const SampleRegion all = extract_region(f, 0.1, Threshold{0.5, true}, 100000);
    const SampleRegion thin = extract_region(f, 0.1, Threshold{0.5, true}, 150);
    EXPECT_LE(thin.points.size(), 150u);
    EXPECT_GT(all.points.size(), thin.points.size());
    for (const auto& p : thin.points) {
        EXPECT_GE(p.imag(), 0.0);
        EXPECT_GT(std::abs(p - 1.0), 0.1);
        EXPECT_GT(f.sample(p), 0.5);
    }
    // Every boundary point of the upper half-disk is kept.
    std::size_t boundary = 0;
    for (const auto& p : all.points) {
        const double h = f.grid.ht();
        const bool edge = std::abs(p + h) >= 0.6 || std::abs(p - h) >= 0.6 ||
                          std::abs(p + cplx(0, f.grid.hs())) >= 0.6 || std::abs(p - cplx(0, f.grid.hs())) >= 0.6;
        if (!edge) continue;
        ++boundary;
        bool kept = false;
        for (const auto& q : thin.points) kept = kept || std::abs(p - q) < 1e-12;
        EXPECT_TRUE(kept) << p;
    }
    EXPECT_GT(boundary, 0u);
    EXPECT_LT(boundary, 150u);
}
