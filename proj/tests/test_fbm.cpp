#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fracevol/fbm.hpp"

using namespace fracevol;

namespace {

// Direct evaluation in long double, independent of the library formula.
long double cov_ld(long double h, long double s, long double t) {
    return 0.5L * (std::pow(s, 2 * h) + std::pow(t, 2 * h) - std::pow(std::fabs(t - s), 2 * h));
}

} // namespace

TEST(Covariance, DiagonalIsPowerOfT) {
    EXPECT_DOUBLE_EQ(covariance(Hurst(0.75), 1.0, 1.0), 1.0);
    EXPECT_NEAR(covariance(Hurst(0.3), 2.0, 2.0), std::pow(2.0, 0.6), 1e-15);
}

TEST(Covariance, BrownianIsMin) { EXPECT_DOUBLE_EQ(covariance(Hurst(0.5), 0.3, 0.8), 0.3); }

TEST(Covariance, MatchesHighPrecisionFormula) {
    EXPECT_NEAR(covariance(Hurst(0.75), 1.0, 2.0), std::sqrt(2.0), 1e-14);
    for (double h : {0.1, 0.3, 0.6, 0.75, 0.95})
        for (double s : {0.0, 0.25, 1.0, 1.7})
            for (double t : {0.1, 0.5, 1.0, 3.0})
                EXPECT_NEAR(covariance(Hurst(h), s, t), double(cov_ld(h, s, t)), 1e-13) << h << ' ' << s << ' ' << t;
}

TEST(Covariance, Symmetric) {
    const Hurst h(0.8);
    EXPECT_DOUBLE_EQ(covariance(h, 0.2, 0.9), covariance(h, 0.9, 0.2));
}

TEST(Covariance, RejectsNegativeTimes) { EXPECT_THROW(covariance(Hurst(0.7), -0.1, 1.0), DomainError); }

TEST(Hurst, RejectsOutsideUnitInterval) {
    EXPECT_THROW(Hurst(0.0), DomainError);
    EXPECT_THROW(Hurst(1.0), DomainError);
    EXPECT_THROW(Hurst(1.2), DomainError);
    EXPECT_THROW(Hurst(std::nan("")), DomainError);
    EXPECT_THROW(Hurst(0.3).require_analysis(), DomainError);
}

TEST(CovarianceMatrix, SinglePointIsZero) {
    const auto c = covariance_matrix(Hurst(0.7), TimeGrid({0.0}));
    ASSERT_EQ(c.rows(), 1);
    EXPECT_EQ(c(0, 0), 0.0);
}

TEST(CovarianceMatrix, BrownianGrid) {
    const auto c = covariance_matrix(Hurst(0.5), TimeGrid({0.0, 0.5, 1.0}));
    Eigen::Matrix3d expected;
    expected << 0, 0, 0, 0, 0.5, 0.5, 0, 0.5, 1;
    EXPECT_LT((c - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CovarianceMatrix, OffDiagonalEntry) {
    const auto c = covariance_matrix(Hurst(0.75), TimeGrid({0.0, 1.0, 2.0}));
    EXPECT_NEAR(c(1, 2), std::sqrt(2.0), 1e-14);
    EXPECT_EQ(c(1, 2), c(2, 1));
}

TEST(CovarianceMatrix, PositiveDefiniteOffOrigin) {
    for (double h : {0.2, 0.5, 0.75, 0.95}) {
        const auto c = covariance_matrix(Hurst(h), TimeGrid::uniform(1.0, 40));
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.bottomRightCorner(40, 40));
        EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0) << h;
    }
}

TEST(Cholesky, ReportsFailingPivot) {
    Eigen::Matrix2d a;
    a << 1, 2, 2, 1;
    try {
        cholesky_lower(a);
        FAIL() << "expected FactorizationError";
    } catch (const FactorizationError& e) {
        EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
    }
}

TEST(Cholesky, ReproducesMatrix) {
    const auto c = covariance_matrix(Hurst(0.7), TimeGrid::uniform(2.0, 16)).bottomRightCorner(16, 16).eval();
    const auto l = cholesky_lower(c);
    EXPECT_LT((l * l.transpose() - c).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(SampleDense, MomentsOnThreePointGrid) {
    const auto grid = TimeGrid::uniform(1.5, 3);
    const auto ens = sample_dense(Hurst(0.7), grid, {200000, 42, 0});
    const auto emp = empirical_covariance(ens);
    EXPECT_NEAR(emp.mean(2, 2), 1.0, 0.01);
    EXPECT_NEAR(emp.mean(1, 2), 0.5, 3.0 * emp.std_error(1, 2));

    const auto ens75 = sample_dense(Hurst(0.75), grid, {200000, 7, 0});
    const auto e75 = empirical_covariance(ens75);
    const double target = 0.5 * (std::pow(0.5, 1.5) + std::pow(1.5, 1.5) - 1.0);
    EXPECT_NEAR(target, 0.595335, 1e-6);
    EXPECT_NEAR(e75.mean(1, 3), target, 3.0 * e75.std_error(1, 3));
}

TEST(SampleDense, StartsAtZeroAndIsReproducible) {
    const auto grid = TimeGrid({0.0, 0.1, 0.4, 1.0});
    const auto a = sample_dense(Hurst(0.6), grid, {50, 9, 0});
    const auto b = sample_dense(Hurst(0.6), grid, {50, 9, 1});
    for (std::size_t p = 0; p < 50; ++p) {
        EXPECT_EQ(a.path(p)[0], 0.0);
        for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(a.path(p)[i], b.path(p)[i]);
    }
}

TEST(Circulant, AutocovarianceValues) {
    for (double h : {0.2, 0.5, 0.75, 0.9}) EXPECT_DOUBLE_EQ(fgn_autocovariance(Hurst(h), 0), 1.0);
    EXPECT_NEAR(fgn_autocovariance(Hurst(0.5), 1), 0.0, 1e-15);
    EXPECT_NEAR(fgn_autocovariance(Hurst(0.75), 1), 0.5 * (std::pow(2.0, 1.5) - 2.0), 1e-15);
    EXPECT_NEAR(fgn_autocovariance(Hurst(0.75), 0, 0.25), std::pow(0.25, 1.5), 1e-15);
}

TEST(Circulant, EmbeddingIsNonnegative) {
    for (double h : {0.1, 0.5, 0.75, 0.99}) {
        const auto lam = circulant_eigenvalues(Hurst(h), 256, 1.0 / 256);
        const double mx = *std::max_element(lam.begin(), lam.end());
        EXPECT_GE(*std::min_element(lam.begin(), lam.end()), -circulant_negative_tolerance * mx) << h;
    }
}

TEST(Circulant, RequiresUniformGrid) {
    EXPECT_THROW(sample_circulant(Hurst(0.7), TimeGrid({0.0, 0.1, 0.5}), {10, 1, 0}), DomainError);
}

TEST(Circulant, AgreesWithDenseSampler) {
    const Hurst h(0.9);
    const auto grid = TimeGrid::uniform(1.0, 256);
    const auto dense = empirical_covariance(sample_dense(h, grid, {100000, 42, 0}));
    const auto circ = empirical_covariance(sample_circulant(h, grid, {100000, 43, 0}));
    double worst = 0.0;
    for (Eigen::Index i = 1; i <= 256; i += 5)
        for (Eigen::Index j = 1; j <= i; j += 5)
            worst = std::max(worst, std::abs(dense.mean(i, j) - circ.mean(i, j)) /
                                        std::hypot(dense.std_error(i, j), circ.std_error(i, j)));
    EXPECT_LE(worst, 3.0);
}

TEST(Circulant, ThreadCountDoesNotChangePaths) {
    const auto grid = TimeGrid::uniform(1.0, 64);
    const auto a = sample_circulant(Hurst(0.7), grid, {33, 5, 1});
    const auto b = sample_circulant(Hurst(0.7), grid, {33, 5, 4});
    for (std::size_t p = 0; p < 33; ++p)
        for (std::size_t i = 0; i < grid.size(); ++i) ASSERT_EQ(a.path(p)[i], b.path(p)[i]);
}

TEST(Wiener, BrownianKernelIsIndicator) {
    const auto grid = TimeGrid::uniform(1.0, 8);
    const auto rep = wiener_representation(Hurst(0.5), grid, 4);
    for (Eigen::Index i = 0; i <= 8; ++i)
        for (Eigen::Index k = 0; k < rep.weights.cols(); ++k) {
            const Eigen::Index cell = 1 + k / 4;
            EXPECT_NEAR(rep.weights(i, k), cell < i ? 1.0 : 0.0, 1e-12) << i << ' ' << k;
        }
    const Eigen::MatrixXd first = rep.first_cell_factor * rep.first_cell_factor.transpose();
    EXPECT_NEAR(first(0, 0), 0.0, 1e-15);
    EXPECT_LT((first.bottomRightCorner(8, 8).array() - grid.step()).abs().maxCoeff(), 1e-14);
}

TEST(Wiener, VarianceAndCancellation) {
    const auto grid = TimeGrid::uniform(1.0, 128);
    const auto emp = empirical_covariance(sample_from_wiener(Hurst(0.75), grid, {50000, 42, 0}));
    EXPECT_NEAR(emp.mean(128, 128), 1.0, 0.02);
    EXPECT_NEAR(emp.mean(64, 128), 0.5, 0.01);
}

TEST(Wiener, ImpliedCovarianceWithinOnePercent) {
    const Hurst h(0.7);
    const auto grid = TimeGrid::uniform(1.0, 16);
    const auto rep = wiener_representation(h, grid);
    const Eigen::MatrixXd implied =
        rep.weights * rep.weights.transpose() * (grid.step() / double(rep.subcells)) +
        rep.first_cell_factor * rep.first_cell_factor.transpose();
    const auto exact = covariance_matrix(h, grid);
    EXPECT_LT((implied - exact).cwiseAbs().maxCoeff() / exact.maxCoeff(), 0.01);
}

TEST(Wiener, RejectsRoughPaths) {
    EXPECT_THROW(sample_from_wiener(Hurst(0.3), TimeGrid::uniform(1.0, 8), {10, 1, 0}), DomainError);
}

TEST(Samplers, SingleStepGridVariance) {
    const auto grid = TimeGrid::uniform(2.0, 1);
    for (auto kind : {SamplerKind::dense, SamplerKind::circulant, SamplerKind::wiener}) {
        const auto emp = empirical_covariance(sample(kind, Hurst(0.75), grid, {40000, 3, 0}));
        EXPECT_NEAR(emp.mean(1, 1), std::pow(2.0, 1.5), 3.0 * emp.std_error(1, 1));
    }
}

TEST(Samplers, ParseNames) {
    EXPECT_EQ(parse_sampler("dense"), SamplerKind::dense);
    EXPECT_EQ(parse_sampler("wiener"), SamplerKind::wiener);
    EXPECT_THROW(parse_sampler("cholesky"), DomainError);
}

TEST(Subsample, KeepsEveryStrideNode) {
    const auto p = sample_path(Hurst(0.7), TimeGrid::uniform(1.0, 16), 42);
    const auto s = subsample(p.view(), 4);
    ASSERT_EQ(s.values.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(s.values[i], p.values[4 * i]);
        EXPECT_EQ(s.grid[i], p.grid[4 * i]);
    }
}

TEST(EnsembleCsv, HeaderAndRowCount) {
    const auto ens = sample_circulant(Hurst(0.7), TimeGrid::uniform(1.0, 4), {3, 1, 0});
    std::ostringstream os;
    write_ensemble_csv(os, ens);
    const auto text = os.str();
    EXPECT_EQ(text.rfind("path_id,t,value\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3 * 5);
    EXPECT_EQ(text.find('\r'), std::string::npos);
}
