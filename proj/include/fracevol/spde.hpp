#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "fracevol/csv.hpp"
#include "fracevol/error.hpp"
#include "fracevol/evolution.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/path.hpp"
#include "fracevol/solver.hpp"
#include "fracevol/stats.hpp"

namespace fracevol {

/// du = (nu u_xx + c u + f) dt + b u dB^H on (0,1) with zero Dirichlet data, truncated to
/// the first `modes` eigenfunctions e_k(x) = sqrt(2) sin(k pi x).
struct SpectralHeatModel {
    double nu = 1.0;
    double c = 0.0;
    std::size_t modes = 32;
    double b = 1.0;

    void validate() const {
        if (!(nu > 0.0) || !std::isfinite(nu)) throw DomainError("viscosity nu must be positive");
        if (!std::isfinite(c) || !std::isfinite(b)) throw DomainError("reaction c and noise b must be finite");
        if (modes == 0) throw DomainError("at least one mode is required");
    }

    /// lambda_k = c - nu k^2 pi^2, k = 1..modes.
    Eigen::VectorXd eigenvalues() const {
        validate();
        Eigen::VectorXd lam(static_cast<Eigen::Index>(modes));
        for (std::size_t k = 1; k <= modes; ++k)
            lam[Eigen::Index(k - 1)] = c - nu * double(k * k) * std::numbers::pi * std::numbers::pi;
        return lam;
    }

    LinearModel linear_model() const { return LinearModel::spectral(eigenvalues(), b); }
};

inline double eigenfunction(std::size_t k, double x) {
    return std::numbers::sqrt2 * std::sin(double(k) * std::numbers::pi * x);
}

struct ProjectionOptions {
    double tolerance = 1e-10;
    /// Panels double from 4 * modes until the Richardson estimate meets the tolerance.
    std::size_t max_panels = std::size_t(1) << 20;
};

/// <f, e_k>, k = 1..modes, by composite Simpson's rule with panel doubling.
inline Eigen::VectorXd project(const std::function<double(double)>& f, std::size_t modes,
                               const ProjectionOptions& opt = {}) {
    if (modes == 0) throw DomainError("at least one mode is required");
    auto simpson = [&](std::size_t panels) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(Eigen::Index(modes));
        const double h = 1.0 / double(panels);
        for (std::size_t i = 0; i <= panels; ++i) {
            const double x = double(i) * h;
            const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            const double fx = f(x);
            if (fx == 0.0) continue;
            for (std::size_t k = 1; k <= modes; ++k) acc[Eigen::Index(k - 1)] += w * fx * eigenfunction(k, x);
        }
        return Eigen::VectorXd(acc * h / 3.0);
    };
    std::size_t panels = 4 * modes;
    if (panels % 2) ++panels;
    Eigen::VectorXd prev = simpson(panels);
    double est = 0.0;
    while (panels * 2 <= opt.max_panels) {
        panels *= 2;
        const Eigen::VectorXd cur = simpson(panels);
        est = (cur - prev).cwiseAbs().maxCoeff() / 15.0;
        prev = cur;
        if (est <= opt.tolerance) return cur;
    }
    throw QuadratureError("modal projection did not reach tolerance", est);
}

/// u(t, .) on a uniform space grid including both boundary points.
struct FieldSnapshot {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> values;
};

inline std::vector<double> space_grid(std::size_t points = 257) {
    if (points < 2) throw DomainError("space grid needs at least two points");
    std::vector<double> x(points);
    for (std::size_t j = 0; j < points; ++j) x[j] = double(j) / double(points - 1);
    return x;
}

/// Sum_k c_k e_k(x_j); boundary values are exactly zero.
inline std::vector<double> reconstruct(const State& coeffs, const std::vector<double>& x) {
    std::vector<double> u(x.size(), 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j] <= 0.0 || x[j] >= 1.0) continue;
        double s = 0.0;
        for (Eigen::Index k = 0; k < coeffs.size(); ++k) s += coeffs[k] * eigenfunction(std::size_t(k + 1), x[j]);
        u[j] = s;
    }
    return u;
}

struct FieldSolution {
    Trajectory modal;
    std::vector<FieldSnapshot> snapshots;
};

/// Modal forcing f(t, .) -> coefficients; empty means f = 0.
using ModalForcing = std::function<State(double)>;

/// Mild solution X_t = U_Y(t,0) x0 + int_0^t U_Y(t,r) F(r) dr mode by mode, with snapshots
/// every `snapshot_stride` grid steps (0 disables snapshots).
inline FieldSolution solve_field(const SpectralHeatModel& model, const Hurst& hurst, PathView path, const State& x0,
                                 const ModalForcing& forcing, std::size_t space_points = 257,
                                 std::size_t snapshot_stride = 1) {
    const EvolutionFamily fam(model.linear_model(), hurst, EvolutionMode::time_homogeneous);
    const MildOperator op(fam, *path.grid, Variant::uy);
    const auto f = forcing ? ForcingTerm::time_only(forcing) : ForcingTerm::none();
    FieldSolution out;
    out.modal = solve_affine_mild(op, path, f, x0).trajectory;
    if (snapshot_stride > 0) {
        const auto x = space_grid(space_points);
        for (std::size_t i = 0; i < out.modal.size(); i += snapshot_stride)
            out.snapshots.push_back({out.modal.grid[i], x, reconstruct(out.modal.states[i], x)});
    }
    return out;
}

/// Same as solve_field but reusing a prepared operator (Monte Carlo loops).
inline Trajectory solve_modes(const MildOperator& op, PathView path, const State& x0, const ModalForcing& forcing) {
    const auto f = forcing ? ForcingTerm::time_only(forcing) : ForcingTerm::none();
    return solve_affine_mild(op, path, f, x0).trajectory;
}

inline void write_field_header(std::ostream& os) { CsvWriter(os).header({"t", "x", "value"}); }

inline void write_field_rows(std::ostream& os, const std::vector<FieldSnapshot>& snaps) {
    CsvWriter w(os);
    for (const auto& s : snaps)
        for (std::size_t j = 0; j < s.x.size(); ++j) w.row(s.t, s.x[j], s.values[j]);
}

struct TruncationRow {
    std::size_t modes = 0;
    /// sup over grid times and space points of |u_{N_i} - u_{N_{i-1}}| (0 for the first row).
    double difference = 0.0;
};

struct TruncationReport {
    std::vector<TruncationRow> rows;
    bool monotone = true;
    /// Least-squares order of the differences in 1/N (NaN with fewer than two differences).
    double order = 0.0;
};

/// Self-refinement table over N_list on one frozen path.
inline TruncationReport truncation_report(SpectralHeatModel model, const Hurst& hurst, PathView path,
                                          const std::function<double(double)>& x0,
                                          const std::function<double(double)>& f,
                                          const std::vector<std::size_t>& n_list, std::size_t space_points = 257) {
    if (n_list.empty()) throw DomainError("N_list must not be empty");
    for (std::size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1]) throw DomainError("N_list must be ascending");
    const auto x = space_grid(space_points);
    TruncationReport rep;
    std::vector<std::vector<double>> prev;
    std::vector<double> ns, diffs;
    for (std::size_t n : n_list) {
        model.modes = n;
        const State c0 = x0 ? State(project(x0, n)) : State(State::Zero(Eigen::Index(n)));
        ModalForcing forcing;
        if (f) {
            const State cf = project(f, n);
            forcing = [cf](double) { return cf; };
        }
        const auto sol = solve_field(model, hurst, path, c0, forcing, space_points, 0);
        std::vector<std::vector<double>> fields;
        fields.reserve(sol.modal.size());
        for (const auto& st : sol.modal.states) fields.push_back(reconstruct(st, x));
        double d = 0.0;
        if (!prev.empty())
            for (std::size_t i = 0; i < fields.size(); ++i)
                for (std::size_t j = 0; j < x.size(); ++j) d = std::max(d, std::abs(fields[i][j] - prev[i][j]));
        if (!rep.rows.empty()) {
            if (rep.rows.size() >= 2 && d > rep.rows.back().difference) rep.monotone = false;
            if (d > 0.0) {
                ns.push_back(double(n));
                diffs.push_back(d);
            }
        }
        rep.rows.push_back({n, d});
        prev = std::move(fields);
    }
    rep.order = ns.size() >= 2 ? observed_order(ns, diffs) : std::nan("");
    return rep;
}

} // namespace fracevol
