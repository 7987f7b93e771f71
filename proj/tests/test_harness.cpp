#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fracevol/fbm.hpp"
#include "fracevol/harness.hpp"
#include "fracevol/solver.hpp"
#include "fracevol/spde.hpp"

using namespace fracevol;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

NormTable geometric_table(double a, double b, double hv, double x, std::size_t paths, std::size_t steps, double T = 1.0) {
    const Hurst h(hv);
    const auto grid = TimeGrid::uniform(T, steps);
    const auto ens = sample_circulant(h, grid, {paths, 42, 0});
    const auto model = LinearModel::scalar(a, b);
    NormTable t;
    t.times.assign(grid.points().begin(), grid.points().end());
    for (std::size_t p = 0; p < ens.size(); ++p) t.norms.push_back(solve_geometric(model, h, ens.path(p), x).norms());
    return t;
}

MomentLaw scalar_law(double a, double b, double hv, double x) {
    MomentLaw law;
    law.hurst = hv;
    law.omega = a;
    law.b = b;
    law.x_norm = std::abs(x);
    law.exact_law = true;
    return law;
}

} // namespace

TEST(MomentLaw, FirstMomentHasNoCorrection) {
    const auto law = scalar_law(-0.3, 2.0, 0.75, 1.5);
    EXPECT_EQ(law.c_hat(1.0), 0.0);
    EXPECT_NEAR(law.exact(2.0, 1.0), 1.5 * std::exp(-0.6), 1e-15);
}

TEST(MomentLaw, SecondMomentClosedForm) {
    const auto law = scalar_law(-1.0, 0.5, 0.7, 1.0);
    EXPECT_NEAR(law.exact(1.0, 2.0), std::exp(-1.75), 1e-15);
    EXPECT_NEAR(std::exp(-1.75), 0.17377, 1e-5);
}

TEST(Moments, SecondMomentMonteCarlo) {
    const auto table = geometric_table(-1.0, 0.5, 0.7, 1.0, 100000, 4);
    const auto law = scalar_law(-1.0, 0.5, 0.7, 1.0);
    const auto rep = estimate_moments(table, {1.0, 2.0}, &law);
    const auto& m1 = rep.rows[rep.rows.size() - 2];
    const auto& m2 = rep.rows.back();
    EXPECT_NEAR(m2.estimate / m2.exact, 1.0, 0.02);
    EXPECT_LE(std::abs(m1.estimate - m1.exact), 3.0 * m1.se);
}

TEST(Moments, ZeroInitialValue) {
    const auto table = geometric_table(0.3, 1.0, 0.75, 0.0, 100, 4);
    const auto rep = estimate_moments(table, {1.0, 2.0, 3.0});
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.estimate, 0.0);
        EXPECT_EQ(r.se, 0.0);
    }
}

TEST(Moments, HighOrdersNeedManyPaths) {
    const auto table = geometric_table(0.0, 1.0, 0.75, 1.0, 10, 2);
    EXPECT_THROW(estimate_moments(table, {5.0}), DomainError);
    EXPECT_THROW(estimate_moments(table, {0.5}), DomainError);
    EXPECT_THROW(estimate_moments(NormTable{}, {1.0}), DomainError);
}

TEST(Moments, NonFiniteValuesAreExcluded) {
    NormTable t{{0.0, 1.0}, {{1.0, 2.0}, {1.0, INFINITY}, {1.0, 4.0}}};
    const auto rep = estimate_moments(t, {1.0});
    EXPECT_EQ(rep.rows[1].excluded, 1u);
    EXPECT_DOUBLE_EQ(rep.rows[1].estimate, 3.0);
}

TEST(Bounds, ExactLawMeetsUnforcedBound) {
    const auto table = geometric_table(-1.0, 0.5, 0.7, 1.0, 20000, 16);
    const auto law = scalar_law(-1.0, 0.5, 0.7, 1.0);
    auto rep = estimate_moments(table, {1.0, 2.0, 3.0});
    check_bounds(rep, law);
    EXPECT_TRUE(rep.all_pass());
    for (const auto& r : rep.rows) EXPECT_DOUBLE_EQ(r.bound, r.exact);
    EXPECT_GE(rep.fitted_constant, 1.0);
}

TEST(Bounds, InitialTimeIsTrivial) {
    MomentLaw law = scalar_law(0.5, 1.0, 0.75, 2.0);
    law.forcing_norm = [](double) { return 3.0; };
    for (double p : {1.0, 2.0, 3.5}) EXPECT_GE(law.bound(0.0, p), std::pow(2.0, p));
}

TEST(Bounds, ForcedConstantIsConvexityFactor) {
    MomentLaw law = scalar_law(0.0, 0.0, 0.75, 1.0);
    law.forcing_norm = [](double) { return 1.0; };
    EXPECT_DOUBLE_EQ(law.constant(3.0), 4.0);
    // b = 0, omega = 0: ||x||^p + t^{p-1} int_0^t 1 ds = 1 + t^p.
    EXPECT_NEAR(law.bound_terms(2.0, 3.0), 1.0 + 8.0, 1e-9);
}

TEST(Bounds, HeatModelSecondMoment) {
    const Hurst h(0.75);
    const auto grid = TimeGrid::uniform(1.0, 64);
    SpectralHeatModel heat{1.0, 0.0, 16, 1.0};
    const EvolutionFamily fam(heat.linear_model(), h, EvolutionMode::time_homogeneous);
    const MildOperator op(fam, grid, Variant::uy);
    const State x0 = project([](double x) { return x * (1.0 - x); }, heat.modes);
    const State f = project([](double) { return 1.0; }, heat.modes);
    const auto ens = sample_circulant(h, grid, {5000, 42, 0});
    NormTable table;
    table.times.assign(grid.points().begin(), grid.points().end());
    for (std::size_t p = 0; p < ens.size(); ++p)
        table.norms.push_back(solve_modes(op, ens.path(p), x0, [&f](double) { return f; }).norms());
    MomentLaw law;
    law.hurst = 0.75;
    law.omega = heat.linear_model().growth_bound();
    law.b = 1.0;
    law.x_norm = x0.norm();
    law.forcing_norm = [n = f.norm()](double) { return n; };
    auto rep = estimate_moments(table, {2.0});
    check_bounds(rep, law);
    EXPECT_TRUE(rep.all_pass());
    EXPECT_TRUE(std::isnan(rep.rows.back().exact));
}

namespace {

StabilityReport probe(double a, double b, double p, std::size_t paths) {
    const Hurst h(0.75);
    const auto grid = TimeGrid::uniform(4.0, 64);
    const auto ens = sample_circulant(h, grid, {paths, 42, 0});
    const auto model = LinearModel::scalar(a, b);
    std::vector<std::vector<double>> log_abs(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i)
        for (const auto& s : solve_geometric(model, h, ens.path(i), 1.0).states) log_abs[i].push_back(std::log(std::abs(s[0])));
    return stability_probe({grid.points().begin(), grid.points().end()}, log_abs, p);
}

} // namespace

TEST(Stability, MomentsGrowWhilePathsDecay) {
    const auto rep = probe(-0.5, 1.5, 2.0, 100000);
    EXPECT_GT(rep.moment_slope, 0.0);
    EXPECT_LT(rep.pathwise_median_slope, 0.0);
    EXPECT_TRUE(rep.destabilized());
}

TEST(Stability, SmallNoiseSlopesAgree) {
    const auto rep = probe(-0.5, 1e-3, 2.0, 2000);
    EXPECT_NEAR(rep.moment_slope, -1.0, 0.01);
    EXPECT_NEAR(rep.pathwise_median_slope, -1.0, 0.01);
    EXPECT_FALSE(rep.destabilized());
}

TEST(Stability, FirstMomentFlatMedianDecays) {
    const auto rep = probe(0.0, 1.0, 1.0, 20000);
    EXPECT_NEAR(rep.moment_slope, 0.0, 0.05);
    EXPECT_LT(rep.pathwise_median_slope, 0.0);
}

TEST(Stability, EmptyInputIsInconclusive) {
    EXPECT_TRUE(stability_probe({}, {}, 2.0).inconclusive);
    EXPECT_TRUE(stability_probe({0.0, 1.0}, {{0.0, 0.0}}, 2.0).inconclusive);
}

TEST(Report, EmptyReportIsHeaderOnly) {
    std::ostringstream os;
    write_moment_csv(os, MomentReport{});
    EXPECT_EQ(os.str(), "t,p,estimate,se,exact,bound,pass\n");
}

TEST(Report, ByteIdenticalReruns) {
    const auto dir = std::filesystem::temp_directory_path() / "fracevol_harness_test";
    std::filesystem::remove_all(dir);
    const auto law = scalar_law(-1.0, 0.5, 0.7, 1.0);
    std::string first;
    for (int run = 0; run < 2; ++run) {
        auto rep = estimate_moments(geometric_table(-1.0, 0.5, 0.7, 1.0, 2000, 8), {1.0, 2.0}, &law);
        check_bounds(rep, law);
        emit_report(dir / std::to_string(run), "moments", rep, {{"seed", "42"}}, 42);
        const auto text = slurp(dir / std::to_string(run) / "moments.csv") + slurp(dir / std::to_string(run) / "moments.txt");
        if (run == 0)
            first = text;
        else
            EXPECT_EQ(text, first);
    }
    EXPECT_EQ(slurp(dir / "0" / "moments.csv").rfind("t,p,estimate,se,exact,bound,pass\n", 0), 0u);
    std::filesystem::remove_all(dir);
}

TEST(Report, UnwritableDestinationThrows) {
    EXPECT_THROW(emit_report("/proc/fracevol_no_such_dir", "m", MomentReport{}, {}, 1), std::exception);
}
