#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "fracevol/evolution.hpp"
#include "fracevol/fbm.hpp"

using namespace fracevol;

namespace {

State vec(std::initializer_list<double> v) {
    State s(Eigen::Index(v.size()));
    Eigen::Index i = 0;
    for (double x : v) s[i++] = x;
    return s;
}

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
    Eigen::MatrixXd m(2, 2);
    m << a, b, c, d;
    return m;
}

// Classical RK4 for dU/dt = (A - H t^{2H-1} B^2) U on [s, t].
Eigen::MatrixXd rk4_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double h, double s, double t, int steps) {
    const Eigen::MatrixXd b2 = b * b;
    auto gen = [&](double r) { return Eigen::MatrixXd(a - h * std::pow(r, 2.0 * h - 1.0) * b2); };
    Eigen::MatrixXd u = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    const double dt = (t - s) / steps;
    for (int k = 0; k < steps; ++k) {
        const double r = s + k * dt;
        const Eigen::MatrixXd k1 = gen(r) * u;
        const Eigen::MatrixXd k2 = gen(r + dt / 2) * (u + dt / 2 * k1);
        const Eigen::MatrixXd k3 = gen(r + dt / 2) * (u + dt / 2 * k2);
        const Eigen::MatrixXd k4 = gen(r + dt) * (u + dt * k3);
        u += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return u;
}

} // namespace

TEST(Expm, MatchesEigenMatrixExponential) {
    for (double scale : {1e-3, 0.5, 3.0, 40.0}) {
        const Eigen::MatrixXd m = scale * mat2(0.3, -1.2, 0.7, -0.4);
        const Eigen::MatrixXd ref = m.exp();
        EXPECT_LT((expm(m) - ref).norm() / ref.norm(), 1e-12) << scale;
    }
}

TEST(Semigroup, IdentityAtZero) {
    const auto m = LinearModel::matrix(mat2(1, 2, 3, 4), mat2(0, 0, 0, 0));
    EXPECT_EQ(semigroup_A(m, 0.0, vec({1, 2})), vec({1, 2}));
}

TEST(Semigroup, ScalarExponential) {
    EXPECT_NEAR(semigroup_A(LinearModel::scalar(-1, 0), 1.0, vec({1}))[0], std::exp(-1.0), 1e-15);
}

TEST(Semigroup, Nilpotent) {
    const auto m = LinearModel::matrix(mat2(0, 1, 0, 0), mat2(0, 0, 0, 0));
    EXPECT_LT((semigroup_A(m, 1.0, vec({0, 1})) - vec({1, 1})).norm(), 1e-15);
}

TEST(Semigroup, RejectsWrongDimensionAndNegativeTime) {
    const auto m = LinearModel::scalar(1, 1);
    EXPECT_THROW(semigroup_A(m, 1.0, vec({1, 2})), DomainError);
    EXPECT_THROW(semigroup_A(m, -1.0, vec({1})), DomainError);
}

TEST(GroupB, ZeroAndScalar) {
    EXPECT_EQ(group_B(LinearModel::scalar(0, 2), 0.0, vec({3})), vec({3}));
    EXPECT_NEAR(group_B(LinearModel::scalar(0, 2), 0.5, vec({1}))[0], std::exp(1.0), 1e-15);
}

TEST(GroupB, GroupLawOnEveryBackend) {
    const State x2 = vec({0.4, -1.3});
    const LinearModel models[] = {
        LinearModel::scalar(0.1, 1.7),
        LinearModel::spectral(vec({-1, -4}), 0.8),
        LinearModel::matrix(mat2(0, 1, -1, 0), mat2(0.2, 1.5, -0.3, 0.1)),
    };
    for (const auto& m : models) {
        const State x = m.state_dim() == 1 ? vec({0.7}) : x2;
        for (double u : {0.3, -2.0, 5.0}) EXPECT_LT((group_B(m, u, group_B(m, -u, x)) - x).norm(), 1e-12);
    }
}

TEST(LinearModel, CommutationDetection) {
    EXPECT_TRUE(LinearModel::matrix(mat2(1, 0, 0, 2), mat2(3, 0, 0, 4)).commuting());
    EXPECT_FALSE(LinearModel::matrix(mat2(0, 1, 0, 0), mat2(1, 0, 0, 2)).commuting());
    EXPECT_THROW(LinearModel::matrix(mat2(0, 1, 0, 0), mat2(1, 0, 0, 2), true), DomainError);
    EXPECT_THROW(LinearModel::matrix(Eigen::MatrixXd::Zero(2, 3), mat2(1, 0, 0, 2)), DomainError);
}

TEST(LinearModel, GrowthBoundIsLogarithmicNorm) {
    EXPECT_DOUBLE_EQ(LinearModel::spectral(vec({-9, -1, -4}), 1).growth_bound(), -1.0);
    EXPECT_NEAR(LinearModel::matrix(mat2(-1, 2, 0, -1), mat2(0, 0, 0, 0)).growth_bound(), 0.0, 1e-14);
}

TEST(EvolutionU, IdentityOnDiagonal) {
    const EvolutionFamily f(LinearModel::scalar(0.3, 1.0), Hurst(0.75));
    EXPECT_EQ(evolution_U(f, 0.4, 0.4, vec({2})), vec({2}));
}

TEST(EvolutionU, ScalarClosedForm) {
    const EvolutionFamily f(LinearModel::scalar(0.0, 1.0), Hurst(0.75));
    EXPECT_NEAR(evolution_U(f, 1.0, 0.0, vec({1}))[0], std::exp(-0.5), 1e-15);
    EXPECT_NEAR(std::exp(-0.5), 0.60653, 1e-5);
    const double expected = std::exp(-0.5 * (std::pow(0.9, 1.5) - std::pow(0.3, 1.5)));
    EXPECT_NEAR(evolution_U(f, 0.9, 0.3, vec({1}))[0], expected, 1e-15);
}

TEST(EvolutionU, BrownianItoCorrection) {
    const double a = 0.4, b = 1.3;
    const EvolutionFamily f(LinearModel::scalar(a, b), Hurst(0.5));
    for (auto [t, s] : {std::pair{1.0, 0.0}, {0.8, 0.3}, {2.0, 1.5}})
        EXPECT_NEAR(evolution_U(f, t, s, vec({1}))[0], std::exp((a - b * b / 2) * (t - s)), 1e-14);
}

TEST(EvolutionU, TimeHomogeneousModeUsesLag) {
    const EvolutionFamily f(LinearModel::scalar(0.0, 1.0), Hurst(0.75), EvolutionMode::time_homogeneous);
    EXPECT_NEAR(f.apply(0.9, 0.3, vec({1}))[0], std::exp(-0.5 * std::pow(0.6, 1.5)), 1e-15);
}

TEST(EvolutionU, MagnusMatchesRk4) {
    const Eigen::MatrixXd a = mat2(-0.5, 1.0, -0.8, -0.2), b = mat2(0.3, 0.9, 0.0, -0.4);
    const EvolutionFamily f(LinearModel::matrix(a, b), Hurst(0.7), EvolutionMode::two_parameter,
                            {1e-3, 1e-8, Integrator::automatic});
    ASSERT_FALSE(f.uses_closed_form());
    const auto rk = rk4_oracle(a, b, 0.7, 0.2, 1.0, 20000);
    EXPECT_LT((f.propagator(1.0, 0.2).value - rk).norm(), 1e-8);
}

TEST(EvolutionU, MagnusMatchesClosedFormForCommutingPair) {
    const Eigen::MatrixXd a = mat2(-1, 0.5, 0.5, -2), b = mat2(0.6, 0, 0, 0.6);
    const auto m = LinearModel::matrix(a, b);
    ASSERT_TRUE(m.commuting());
    const EvolutionFamily closed(m, Hurst(0.8));
    const EvolutionFamily magnus(m, Hurst(0.8), EvolutionMode::two_parameter, {1e-3, 1e-8, Integrator::magnus});
    EXPECT_LT((closed.matrix(1.0, 0.0) - magnus.matrix(1.0, 0.0)).norm(), 1e-9);
}

TEST(EvolutionU, ToleranceViolationThrows) {
    const Eigen::MatrixXd a = mat2(-0.5, 4.0, -4.0, -0.2), b = mat2(1.3, 2.9, 0.0, -1.4);
    const EvolutionFamily f(LinearModel::matrix(a, b), Hurst(0.7), EvolutionMode::two_parameter,
                            {0.5, 1e-14, Integrator::automatic});
    EXPECT_THROW(f.propagator(1.0, 0.0), ConvergenceError);
}

TEST(EvolutionU, PropagatorCompositionForMatrices) {
    const Eigen::MatrixXd a = mat2(-0.5, 1.0, -0.8, -0.2), b = mat2(0.3, 0.9, 0.0, -0.4);
    const EvolutionFamily f(LinearModel::matrix(a, b), Hurst(0.75));
    const Eigen::MatrixXd lhs = f.matrix(1.0, 0.4) * f.matrix(0.4, 0.1);
    EXPECT_LT((lhs - f.matrix(1.0, 0.1)).norm(), 1e-7);
}

class RandomEvolutionTest : public ::testing::Test {
protected:
    FbmPath path = sample_path(Hurst(0.75), TimeGrid::uniform(1.0, 16), 42);
};

TEST_F(RandomEvolutionTest, UyFrozenPathFormula) {
    const double a = -0.3, b = 0.8;
    const EvolutionFamily f(LinearModel::scalar(a, b), Hurst(0.75), EvolutionMode::time_homogeneous);
    const RandomEvolution v(f, path.view(), Variant::uy);
    const double t = 0.75, s = 0.25;
    const double expected =
        std::exp(b * (path.values[12] - path.values[4]) - 0.5 * b * b * std::pow(t - s, 1.5) + a * (t - s));
    EXPECT_NEAR(uy_apply(v, t, s, vec({1}))[0], expected, 1e-14);
    EXPECT_EQ(uy_apply(v, t, t, vec({2.5})), vec({2.5}));
}

TEST_F(RandomEvolutionTest, NoNoiseIsSemigroup) {
    const auto m = LinearModel::spectral(vec({-1, -4, 0.5}), 0.0);
    const EvolutionFamily f(m, Hurst(0.75), EvolutionMode::time_homogeneous);
    const RandomEvolution v(f, path.view(), Variant::uy);
    const State x = vec({1, 2, 3});
    EXPECT_LT((uy_apply(v, 1.0, 0.25, x) - semigroup_A(m, 0.75, x)).norm(), 1e-15);
}

TEST_F(RandomEvolutionTest, BarVariantCoincidencesAndMismatch) {
    const auto m = LinearModel::scalar(0.2, 1.1);
    const EvolutionFamily two(m, Hurst(0.75)), homo(m, Hurst(0.75), EvolutionMode::time_homogeneous);
    const RandomEvolution bar(two, path.view(), Variant::uybar), uy(homo, path.view(), Variant::uy);
    EXPECT_EQ(uybar_apply(bar, 0.5, 0.5, vec({3})), vec({3}));
    EXPECT_NEAR(uybar_apply(bar, 0.8125, 0.0, vec({1}))[0], uy_apply(uy, 0.8125, 0.0, vec({1}))[0], 1e-15);
    EXPECT_GT(std::abs(uybar_apply(bar, 1.0, 0.5, vec({1}))[0] - uy_apply(uy, 1.0, 0.5, vec({1}))[0]), 1e-3);
    EXPECT_THROW(uy_apply(bar, 1.0, 0.5, vec({1})), DomainError);
    EXPECT_THROW(uybar_apply(uy, 1.0, 0.5, vec({1})), DomainError);
}

TEST(RandomEvolution, BrownianVariantsCoincide) {
    const auto p = sample_path(Hurst(0.5), TimeGrid::uniform(1.0, 16), 7);
    const auto m = LinearModel::scalar(0.2, 1.1);
    const EvolutionFamily two(m, Hurst(0.5)), homo(m, Hurst(0.5), EvolutionMode::time_homogeneous);
    const RandomEvolution bar(two, p.view(), Variant::uybar), uy(homo, p.view(), Variant::uy);
    for (std::size_t i = 0; i <= 16; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            EXPECT_NEAR(bar.apply(p.grid[i], p.grid[j], vec({1}))[0], uy.apply(p.grid[i], p.grid[j], vec({1}))[0], 1e-14);
}

TEST_F(RandomEvolutionTest, BarVariantComposes) {
    const EvolutionFamily f(LinearModel::spectral(vec({-1, -4}), 0.9), Hurst(0.75));
    const RandomEvolution v(f, path.view(), Variant::uybar);
    for (double t : {0.5, 1.0})
        for (double r : {0.25, 0.5})
            for (double s : {0.0, 0.125, 0.25})
                if (s <= r && r <= t) EXPECT_LT(composition_defect(v, t, r, s, vec({1, -2})), 1e-12);
}

TEST_F(RandomEvolutionTest, UyDefectClosedForm) {
    const EvolutionFamily f(LinearModel::scalar(0.0, 1.0), Hurst(0.75), EvolutionMode::time_homogeneous);
    const RandomEvolution v(f, path.view(), Variant::uy);
    const double expected = std::exp(path.values[16]) * std::abs(std::exp(-std::pow(0.5, 1.5)) - std::exp(-0.5));
    EXPECT_GT(expected, 0.0);
    EXPECT_NEAR(composition_defect(v, 1.0, 0.5, 0.0, vec({1})), expected, 1e-14);
}

TEST(RandomEvolution, UyComposesAtBrownianIndex) {
    const auto p = sample_path(Hurst(0.5), TimeGrid::uniform(1.0, 16), 42);
    const EvolutionFamily f(LinearModel::scalar(0.3, 1.0), Hurst(0.5), EvolutionMode::time_homogeneous);
    const RandomEvolution v(f, p.view(), Variant::uy);
    EXPECT_LT(composition_defect(v, 1.0, 0.5, 0.0, vec({1})), 1e-12);
    EXPECT_THROW(composition_defect(v, 0.5, 1.0, 0.0, vec({1})), DomainError);
}

TEST_F(RandomEvolutionTest, MatrixBackendUsesGroupFactor) {
    const Eigen::MatrixXd a = mat2(-0.5, 1.0, -0.8, -0.2), b = mat2(0.3, 0.9, 0.0, -0.4);
    const EvolutionFamily f(LinearModel::matrix(a, b), Hurst(0.75));
    const RandomEvolution v(f, path.view(), Variant::uybar);
    const Eigen::MatrixXd expected = (b * (path.values[16] - path.values[8])).exp() * f.matrix(1.0, 0.5);
    EXPECT_LT((v.matrix(1.0, 0.5) - expected).norm(), 1e-12);
}

TEST(NormLattice, ContractiveScalarFamily) {
    const EvolutionFamily f(LinearModel::scalar(-1.0, 0.5), Hurst(0.75));
    const auto lat = norm_lattice(f, TimeGrid::uniform(1.0, 4));
    EXPECT_EQ(lat.t.size(), 15u);
    EXPECT_DOUBLE_EQ(lat.c_u, 1.0);
    std::ostringstream os;
    write_norm_lattice(os, lat);
    EXPECT_EQ(os.str().rfind("t,s,norm\n", 0), 0u);
}
