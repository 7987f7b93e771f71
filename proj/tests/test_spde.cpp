#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "fracevol/fbm.hpp"
#include "fracevol/spde.hpp"

using namespace fracevol;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST(HeatModel, EigenvaluesAndValidation) {
    const SpectralHeatModel m{2.0, 0.5, 3, 1.0};
    const auto lam = m.eigenvalues();
    for (int k = 1; k <= 3; ++k) EXPECT_DOUBLE_EQ(lam[k - 1], 0.5 - 2.0 * k * k * pi * pi);
    EXPECT_DOUBLE_EQ(m.linear_model().growth_bound(), 0.5 - 2.0 * pi * pi);
    EXPECT_THROW((SpectralHeatModel{0.0, 0.0, 3, 1.0}.validate()), DomainError);
    EXPECT_THROW((SpectralHeatModel{1.0, 0.0, 0, 1.0}.validate()), DomainError);
}

TEST(Project, FirstEigenfunction) {
    const auto c = project([](double x) { return eigenfunction(1, x); }, 8);
    EXPECT_NEAR(c[0], 1.0, 1e-10);
    for (int k = 1; k < 8; ++k) EXPECT_NEAR(c[k], 0.0, 1e-10);
}

TEST(Project, ZeroFunction) { EXPECT_EQ(project([](double) { return 0.0; }, 5).cwiseAbs().maxCoeff(), 0.0); }

TEST(Project, ParabolaCoefficients) {
    const auto c = project([](double x) { return x * (1.0 - x); }, 16);
    for (int k = 1; k <= 16; ++k) {
        const double expected = k % 2 ? 4.0 * std::numbers::sqrt2 / std::pow(k * pi, 3) : 0.0;
        EXPECT_NEAR(c[k - 1], expected, 1e-10) << k;
    }
}

TEST(Project, ConstantCoefficients) {
    const auto c = project([](double) { return 1.0; }, 8);
    for (int k = 1; k <= 8; ++k) EXPECT_NEAR(c[k - 1], k % 2 ? 2.0 * std::numbers::sqrt2 / (k * pi) : 0.0, 1e-10);
}

TEST(Reconstruct, BoundaryIsExactlyZero) {
    const auto x = space_grid(9);
    const auto u = reconstruct(State::Ones(5), x);
    EXPECT_EQ(u.front(), 0.0);
    EXPECT_EQ(u.back(), 0.0);
    EXPECT_NEAR(u[4], std::numbers::sqrt2 * (1 - 1 + 1), 1e-14);
}

TEST(SolveField, SingleModeClosedForm) {
    const Hurst h(0.75);
    const auto p = sample_path(h, TimeGrid::uniform(1.0, 128), 42);
    const SpectralHeatModel m{1.0, 0.0, 8, 1.0};
    State x0 = State::Zero(8);
    x0[0] = 1.0;
    const auto sol = solve_field(m, h, p.view(), x0, {}, 33, 16);
    const auto geo = solve_geometric(LinearModel::scalar(-pi * pi, 1.0), h, p.view(), 1.0);
    for (const auto& snap : sol.snapshots) {
        const std::size_t i = p.grid.index_of(snap.t);
        for (std::size_t j = 0; j < snap.x.size(); ++j)
            EXPECT_NEAR(snap.values[j], geo.states[i][0] * eigenfunction(1, snap.x[j]), 1e-12);
    }
    EXPECT_EQ(sol.snapshots.size(), 9u);
}

TEST(SolveField, NoNoiseHeatDecay) {
    const Hurst h(0.75);
    const auto p = sample_path(h, TimeGrid::uniform(0.5, 32), 42);
    const SpectralHeatModel m{1.0, 0.0, 6, 0.0};
    const State x0 = State::LinSpaced(6, 1.0, 0.5);
    const auto sol = solve_field(m, h, p.view(), x0, {}, 17, 0);
    EXPECT_TRUE(sol.snapshots.empty());
    const auto lam = m.eigenvalues();
    for (std::size_t i = 0; i < p.grid.size(); ++i)
        for (int k = 0; k < 6; ++k)
            EXPECT_NEAR(sol.modal.states[i][k], x0[k] * std::exp(lam[k] * p.grid[i]), 1e-14);
}

TEST(SolveField, InitialSnapshotMatchesInitialField) {
    const Hurst h(0.75);
    const auto p = sample_path(h, TimeGrid::uniform(1.0, 16), 42);
    const SpectralHeatModel m{1.0, 0.0, 64, 1.0};
    const auto x0 = project([](double x) { return x * (1.0 - x); }, 64);
    const auto sol = solve_field(m, h, p.view(), x0, {}, 65, 16);
    const auto& s0 = sol.snapshots.front();
    EXPECT_EQ(s0.t, 0.0);
    for (std::size_t j = 0; j < s0.x.size(); ++j) EXPECT_NEAR(s0.values[j], s0.x[j] * (1.0 - s0.x[j]), 1e-5);
}

TEST(Truncation, FiniteModalSupportGivesZeroDifferences) {
    const Hurst h(0.75);
    const auto p = sample_path(h, TimeGrid::uniform(1.0, 64), 42);
    const auto rep = truncation_report({1.0, 0.0, 4, 1.0}, h, p.view(),
                                       [](double x) { return eigenfunction(1, x) - 0.5 * eigenfunction(3, x); }, {},
                                       {4, 8, 16}, 65);
    ASSERT_EQ(rep.rows.size(), 3u);
    for (const auto& r : rep.rows) EXPECT_LT(r.difference, 1e-9);
}

TEST(Truncation, ParabolaDecreasesAtSecondOrder) {
    const Hurst h(0.75);
    // Coefficients decay like k^-3, so the sup-norm tail is exactly O(N^-2) and the fitted
    // order approaches 2 from below: 1.976 on N = 4..64, 1.9992 on N = 16..256.
    const auto p = sample_path(h, TimeGrid::uniform(1.0, 64), 42);
    const auto rep = truncation_report({1.0, 0.0, 4, 1.0}, h, p.view(), [](double x) { return x * (1.0 - x); }, {},
                                       {16, 32, 64, 128, 256}, 1025);
    EXPECT_TRUE(rep.monotone);
    EXPECT_NEAR(rep.order, 2.0, 0.005);
}

TEST(Truncation, ConstantForcingDecreases) {
    const Hurst h(0.75);
    const auto p = sample_path(h, TimeGrid::uniform(1.0, 64), 42);
    const auto rep = truncation_report({1.0, 0.0, 4, 1.0}, h, p.view(), {}, [](double) { return 1.0; },
                                       {4, 8, 16, 32, 64}, 257);
    EXPECT_TRUE(rep.monotone);
    for (std::size_t i = 2; i < rep.rows.size(); ++i) EXPECT_LT(rep.rows[i].difference, rep.rows[1].difference);
    EXPECT_GT(rep.order, 0.0);
    EXPECT_THROW(truncation_report({1.0, 0.0, 4, 1.0}, h, p.view(), {}, {}, {8, 4}), DomainError);
}

TEST(FieldCsv, Header) {
    std::ostringstream os;
    write_field_header(os);
    write_field_rows(os, {{0.5, {0.0, 1.0}, {0.0, 0.0}}});
    EXPECT_EQ(os.str(), "t,x,value\n0.5,0,0\n0.5,1,0\n");
}
