#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracevol/csv.hpp"
#include "fracevol/error.hpp"
#include "fracevol/evolution.hpp"
#include "fracevol/fft.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/parallel.hpp"
#include "fracevol/path.hpp"
#include "fracevol/stats.hpp"

namespace fracevol {

/// V-valued solution on a path grid; states[0] is the initial condition.
struct Trajectory {
    TimeGrid grid;
    std::vector<State> states;
    std::size_t path_id = 0;

    std::size_t size() const noexcept { return states.size(); }
    std::vector<double> norms() const {
        std::vector<double> out(states.size());
        for (std::size_t i = 0; i < states.size(); ++i) out[i] = states[i].norm();
        return out;
    }
};

/// F(t, y) = G(t) + L(t) y, or G(t) alone, or nothing.
///
/// `lipschitz` is the certificate Lbar(t) >= ||L(t)||; when not declared it is measured
/// as the operator norm of L(t).
struct ForcingTerm {
    enum class Kind { none, time_only, affine_in_state };

    Kind kind = Kind::none;
    std::function<State(double)> g;
    std::function<Eigen::MatrixXd(double)> l;
    std::function<double(double)> lipschitz;

    static ForcingTerm none() { return {}; }

    static ForcingTerm time_only(std::function<State(double)> g) {
        ForcingTerm f;
        f.kind = Kind::time_only;
        f.g = std::move(g);
        return f;
    }

    static ForcingTerm affine(std::function<State(double)> g, std::function<Eigen::MatrixXd(double)> l,
                              std::function<double(double)> lipschitz = {}) {
        ForcingTerm f;
        f.kind = Kind::affine_in_state;
        f.g = std::move(g);
        f.l = std::move(l);
        f.lipschitz = std::move(lipschitz);
        return f;
    }

    /// Scalar-state convenience: F(t,y) = c for every component.
    static ForcingTerm constant(std::size_t dim, double c) {
        return time_only([dim, c](double) { return State::Constant(Eigen::Index(dim), c); });
    }

    bool state_dependent() const noexcept { return kind == Kind::affine_in_state; }

    State operator()(double t, const State& y) const {
        switch (kind) {
        case Kind::none:
            return State::Zero(y.size());
        case Kind::time_only:
            return g(t);
        case Kind::affine_in_state: {
            State out = l(t) * y;
            if (g) out += g(t);
            return out;
        }
        }
        return State::Zero(y.size());
    }

    double lipschitz_at(double t) const {
        if (kind != Kind::affine_in_state) return 0.0;
        if (lipschitz) return lipschitz(t);
        return operator_norm(l(t));
    }
};

// ---------------------------------------------------------------------------
// Closed-form geometric solution
// ---------------------------------------------------------------------------

/// X_t = x exp{b B_t - b^2 t^{2H}/2 + a t} on the path grid.
inline Trajectory solve_geometric(const LinearModel& model, const Hurst& hurst, PathView path, double x) {
    if (model.backend() != Backend::scalar) throw DomainError("solve_geometric needs the scalar backend");
    const double a = model.a(), b = model.b(), h = hurst.value();
    Trajectory out{*path.grid, {}, path.id};
    out.states.reserve(path.values.size());
    for (std::size_t i = 0; i < path.values.size(); ++i) {
        const double t = (*path.grid)[i];
        const double e = b * path[i] - 0.5 * b * b * std::pow(t, 2.0 * h) + a * t;
        out.states.push_back(State::Constant(1, x * std::exp(e)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mild operator: free term and trapezoid convolution along a path
// ---------------------------------------------------------------------------

/// Discrete form of y -> V(t,0)x + int_0^t V(t,r) q(r) dr on a grid, V in {U_Y, Ubar_Y}.
///
/// The integral is the composite trapezoid rule on the grid. Everything independent of the
/// path (step propagators, lag kernels and their spectra) is built once; the path enters
/// only through S_B(B_t) S_B(-B_r), which the group law lets us split.
class MildOperator {
public:
    MildOperator(const EvolutionFamily& family, TimeGrid grid, Variant variant)
        : family_(&family), grid_(std::move(grid)), variant_(variant) {
        const LinearModel& m = family.model();
        diagonal_ = m.diagonal() && family.uses_closed_form();
        const std::size_t n = grid_.size();
        const auto d = Eigen::Index(m.state_dim());
        if (diagonal_) {
            const double h = family.hurst().value(), b2 = m.b() * m.b();
            step_diag_.resize(n);
            for (std::size_t i = 1; i < n; ++i) {
                const double ito = 0.5 * detail::power_difference(grid_[i - 1], grid_[i], 2.0 * h);
                step_diag_[i] = ((m.eigenvalues() * (grid_[i] - grid_[i - 1])).array() - b2 * ito).exp();
            }
            if (variant_ == Variant::uy && grid_.is_uniform() && n > 1) {
                for (Eigen::Index k = 0; k < d; ++k) {
                    std::vector<double> g(n);
                    for (std::size_t l = 0; l < n; ++l) {
                        const double lag = grid_.step() * double(l);
                        g[l] = std::exp(m.eigenvalues()[k] * lag - 0.5 * b2 * std::pow(lag, 2.0 * h));
                    }
                    lag_.emplace_back(std::move(g));
                }
            }
        } else {
            step_mat_.resize(n);
            for (std::size_t i = 1; i < n; ++i) step_mat_[i] = family.propagator(grid_[i], grid_[i - 1]).value;
            if (variant_ == Variant::uy) {
                if (!grid_.is_uniform()) throw DomainError("U_Y with a matrix backend needs a uniform grid");
                lag_mat_.resize(n);
                lag_mat_[0] = Eigen::MatrixXd::Identity(d, d);
                for (std::size_t l = 1; l < n; ++l) lag_mat_[l] = step_mat_[l] * lag_mat_[l - 1];
            }
        }
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    Variant variant() const noexcept { return variant_; }
    const EvolutionFamily& family() const noexcept { return *family_; }

    /// V(t_i, 0) x for every grid node.
    std::vector<State> free_term(PathView path, const State& x) const {
        check(path);
        const LinearModel& m = family_->model();
        check_state(m, x);
        std::vector<State> out(grid_.size());
        State u = x;
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (i > 0) u = diagonal_ ? State(step_diag_[i] * u.array()) : State(step_mat_[i] * u);
            out[i] = noise(path[i], u);
        }
        return out;
    }

    /// Trapezoid approximation of int_0^{t_i} V(t_i, r) q(r) dr for every i.
    std::vector<State> convolve(PathView path, const std::vector<State>& q) const {
        check(path);
        const std::size_t n = grid_.size();
        if (q.size() != n) throw DomainError("convolution input has the wrong length");
        const auto d = Eigen::Index(family_->model().state_dim());
        std::vector<State> r(n);
        for (std::size_t j = 0; j < n; ++j) r[j] = noise(-path[j], q[j]);
        std::vector<State> out(n, State::Zero(d));
        if (variant_ == Variant::uybar) {
            // Y_i = P_i Y_{i-1} + dt/2 (P_i r_{i-1} + r_i), Y_0 = 0.
            State y = State::Zero(d);
            for (std::size_t i = 1; i < n; ++i) {
                const double dt = grid_[i] - grid_[i - 1];
                const State prev = y + 0.5 * dt * r[i - 1];
                y = (diagonal_ ? State(step_diag_[i] * prev.array()) : State(step_mat_[i] * prev)) + 0.5 * dt * r[i];
                out[i] = noise(path[i], y);
            }
            return out;
        }
        if (diagonal_ && !lag_.empty()) {
            const double h = grid_.step();
            std::vector<double> p(n);
            for (Eigen::Index k = 0; k < d; ++k) {
                for (std::size_t j = 0; j < n; ++j) p[j] = r[j][k];
                const auto c = lag_[std::size_t(k)].apply(p);
                const auto& g = lag_[std::size_t(k)].kernel();
                for (std::size_t i = 1; i < n; ++i)
                    out[i][k] = h * (c[i] - 0.5 * g[i] * p[0] - 0.5 * g[0] * p[i]);
            }
            for (std::size_t i = 1; i < n; ++i) out[i] = noise(path[i], out[i]);
            return out;
        }
        for (std::size_t i = 1; i < n; ++i) {
            State acc = State::Zero(d);
            for (std::size_t j = 0; j <= i; ++j) {
                const double w = 0.5 * ((j > 0 ? grid_[j] - grid_[j - 1] : 0.0) + (j < i ? grid_[j + 1] - grid_[j] : 0.0));
                acc += w * lag_apply(i, j, r[j]);
            }
            out[i] = noise(path[i], acc);
        }
        return out;
    }

    /// Upper bound for sup ||V(t_i, t_j)|| over j <= i, from <= i <= to:
    /// max e^{B} factors times the largest product of consecutive step-propagator norms.
    double sup_norm_bound(PathView path, std::size_t from, std::size_t to) const {
        check(path);
        const LinearModel& m = family_->model();
        double up = 0.0, down = 0.0;
        for (std::size_t i = 0; i <= to; ++i) {
            if (m.diagonal()) {
                up = std::max(up, std::exp(m.b() * path[i]));
                down = std::max(down, std::exp(-m.b() * path[i]));
            } else {
                up = std::max(up, operator_norm(group_matrix(m, path[i])));
                down = std::max(down, operator_norm(group_matrix(m, -path[i])));
            }
        }
        double run = 1.0, u = 1.0;
        for (std::size_t i = 1; i <= to; ++i) {
            const double sn = diagonal_ ? step_diag_[i].abs().maxCoeff() : operator_norm(step_mat_[i]);
            run = std::max(1.0, run * sn);
            if (i >= from) u = std::max(u, run);
        }
        return up * down * u;
    }

private:
    void check(PathView path) const {
        if (path.grid == nullptr || !(*path.grid == grid_))
            throw AlignmentError("path grid differs from the operator grid");
    }

    /// S_B(u) v.
    State noise(double u, const State& v) const {
        const LinearModel& m = family_->model();
        if (m.diagonal()) return std::exp(m.b() * u) * v;
        return group_matrix(m, u) * v;
    }

    /// U-part of V(t_i, t_j) applied to v (noise factors excluded).
    State lag_apply(std::size_t i, std::size_t j, const State& v) const {
        if (diagonal_) {
            const LinearModel& m = family_->model();
            const double lag = grid_[i] - grid_[j];
            const double h = family_->hurst().value();
            const double b2 = m.b() * m.b();
            return ((m.eigenvalues() * lag).array() - 0.5 * b2 * std::pow(lag, 2.0 * h)).exp().matrix().cwiseProduct(v);
        }
        return lag_mat_[i - j] * v;
    }

    const EvolutionFamily* family_;
    TimeGrid grid_;
    Variant variant_;
    bool diagonal_ = false;
    std::vector<Eigen::ArrayXd> step_diag_;
    std::vector<Eigen::MatrixXd> step_mat_, lag_mat_;
    std::vector<LagConvolver> lag_;
};

// ---------------------------------------------------------------------------
// Affine mild solution and Picard iteration
// ---------------------------------------------------------------------------

struct AffineSolution {
    Trajectory trajectory;
    /// Richardson estimate of the quadrature error (grid vs every other node), order 2.
    double quadrature_error = 0.0;
    /// Set when quadrature_error exceeds the requested tolerance.
    bool grid_too_coarse = false;
};

namespace detail {

inline std::vector<State> sample_forcing(const ForcingTerm& f, const TimeGrid& grid, const std::vector<State>& y) {
    std::vector<State> q(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) q[i] = f(grid[i], y[i]);
    return q;
}

inline double sup_difference(const std::vector<State>& a, const std::vector<State>& b, std::size_t from = 0,
                             std::size_t to = std::size_t(-1)) {
    double d = 0.0;
    for (std::size_t i = from; i < a.size() && i <= to; ++i) d = std::max(d, (a[i] - b[i]).norm());
    return d;
}

inline std::vector<State> affine_states(const MildOperator& op, PathView path, const ForcingTerm& f, const State& x) {
    auto y = op.free_term(path, x);
    if (f.kind == ForcingTerm::Kind::none) return y;
    const auto c = op.convolve(path, sample_forcing(f, op.grid(), y));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
    return y;
}

} // namespace detail

/// X_t = V(t,0)x + int_0^t V(t,r)F(r)dr for time-only F (V = U_Y by default).
inline AffineSolution solve_affine_mild(const MildOperator& op, PathView path, const ForcingTerm& f, const State& x,
                                        double tolerance = 1e-6) {
    if (f.state_dependent()) throw DomainError("solve_affine_mild needs a time-only forcing");
    AffineSolution out;
    out.trajectory = {op.grid(), detail::affine_states(op, path, f, x), path.id};
    const TimeGrid& grid = op.grid();
    if (f.kind == ForcingTerm::Kind::time_only && grid.steps() >= 4 && grid.steps() % 2 == 0) {
        const TimeGrid coarse_grid = grid.subsample(2);
        std::vector<double> coarse_values;
        for (std::size_t i = 0; i < grid.size(); i += 2) coarse_values.push_back(path[i]);
        const PathView coarse_path{&coarse_grid, coarse_values, path.id};
        const MildOperator coarse(op.family(), coarse_grid, op.variant());
        const auto yc = detail::affine_states(coarse, coarse_path, f, x);
        double diff = 0.0;
        for (std::size_t i = 0; i < yc.size(); ++i)
            diff = std::max(diff, (yc[i] - out.trajectory.states[2 * i]).norm());
        out.quadrature_error = diff / 3.0;
        out.grid_too_coarse = out.quadrature_error > tolerance;
    }
    return out;
}

struct PicardOptions {
    /// Sweeps stop once the sup-norm change is below tolerance * max(1, sup ||y||).
    double tolerance = 1e-12;
    std::size_t max_sweeps = 200;
    /// Subintervals are halved while the contraction estimate exceeds this.
    double split_threshold = 0.5;
    /// Initial guess; empty means the zero trajectory.
    std::optional<std::vector<State>> initial;
};

struct PicardReport {
    std::size_t sweeps = 0;
    /// Grid index ranges [first, last] of the subintervals used, with their estimates.
    std::vector<std::pair<std::size_t, std::size_t>> subintervals;
    std::vector<double> contraction;
    double last_change = 0.0;
};

struct PicardSolution {
    Trajectory trajectory;
    PicardReport report;
};

/// Fixed point of y = V(.,0)x + int_0^. V(.,r) F(r, y(r)) dr by Picard sweeps.
///
/// The contraction estimate on a subinterval [t_a, t_b] is
/// q = sup ||V|| * int_{t_a}^{t_b} Lbar(r) dr; the subinterval is halved while q exceeds
/// options.split_threshold. Later subintervals keep the already converged history as data.
inline PicardSolution solve_picard(const MildOperator& op, PathView path, const ForcingTerm& f, const State& x,
                                   const PicardOptions& opt = {}) {
    const TimeGrid& grid = op.grid();
    const std::size_t n = grid.size();
    const auto free = op.free_term(path, x);
    PicardSolution out;
    out.trajectory.grid = grid;
    out.trajectory.path_id = path.id;
    if (f.kind == ForcingTerm::Kind::none) {
        out.trajectory.states = free;
        out.report.sweeps = 1;
        out.report.subintervals.emplace_back(0, n - 1);
        out.report.contraction.push_back(0.0);
        return out;
    }
    std::vector<State> y = opt.initial ? *opt.initial : std::vector<State>(n, State::Zero(x.size()));
    if (y.size() != n) throw DomainError("Picard initial guess has the wrong length");
    y[0] = x;
    std::vector<double> lbar(n);
    for (std::size_t i = 0; i < n; ++i) lbar[i] = f.lipschitz_at(grid[i]);
    auto estimate = [&](std::size_t a, std::size_t b) {
        double integral = 0.0;
        for (std::size_t i = std::max<std::size_t>(a, 1); i <= b; ++i)
            integral += 0.5 * (grid[i] - grid[i - 1]) * (lbar[i] + lbar[i - 1]);
        // The trapezoid endpoint weight acts on the unknown at t_b itself.
        if (b > 0) integral = std::max(integral, 0.5 * (grid[b] - grid[b - 1]) * lbar[b]);
        return op.sup_norm_bound(path, a, b) * integral;
    };
    std::size_t start = 0;
    while (start + 1 < n) {
        std::size_t end = n - 1;
        double q = estimate(start, end);
        while (q > opt.split_threshold && end > start + 1) {
            end = start + (end - start) / 2;
            q = estimate(start, end);
        }
        out.report.subintervals.emplace_back(start, end);
        out.report.contraction.push_back(q);
        bool converged = false;
        for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
            ++out.report.sweeps;
            const auto c = op.convolve(path, detail::sample_forcing(f, grid, y));
            double change = 0.0, scale = 1.0;
            for (std::size_t i = std::max<std::size_t>(start, 1); i <= end; ++i) {
                const State next = free[i] + c[i];
                change = std::max(change, (next - y[i]).norm());
                scale = std::max(scale, next.norm());
                y[i] = next;
            }
            out.report.last_change = change;
            if (change < opt.tolerance * scale) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw ConvergenceError("Picard iteration exceeded max_sweeps (contraction estimate " +
                                       std::to_string(q) + ")",
                                   q);
        start = end;
    }
    out.trajectory.states = std::move(y);
    return out;
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

/// sup_t ||y(t) - V(t,0)x - int_0^t V(t,r) F(r, y(r)) dr|| with trapezoid quadrature.
inline double mild_residual(const Trajectory& traj, const MildOperator& op, PathView path, const ForcingTerm& f,
                            const State& x) {
    if (!(traj.grid == op.grid())) throw AlignmentError("trajectory and operator grids differ");
    const auto free = op.free_term(path, x);
    const auto c = op.convolve(path, detail::sample_forcing(f, op.grid(), traj.states));
    double r = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) r = std::max(r, (traj.states[i] - free[i] - c[i]).norm());
    return r;
}

struct ResidualSeries {
    std::vector<double> t, residual, se;
};

/// Monte Carlo mean of <X_t,y> - <x,y> - int_0^t <X_r, A* y> dr - int_0^t <F(r), y> dr.
///
/// The divergence term has zero mean, so this vanishes in expectation for a weak solution.
/// Time integrals use the trapezoid rule on the trajectory grid. Trajectories are consumed
/// one at a time with running (Welford) moments, so ensembles need not be kept in memory;
/// for a mean the jackknife standard error equals s / sqrt(n).
class WeakResidual {
public:
    WeakResidual(const LinearModel& model, const ForcingTerm& f, const State& x, const State& test, TimeGrid grid)
        : grid_(std::move(grid)), test_(test), adj_(model.generator_a().transpose() * test), x0_(x.dot(test)) {
        if (f.state_dependent()) throw DomainError("weak residual needs a time-only forcing");
        check_state(model, x);
        check_state(model, test);
        const std::size_t n = grid_.size();
        forcing_.assign(n, 0.0);
        if (f.kind == ForcingTerm::Kind::time_only)
            for (std::size_t i = 1; i < n; ++i)
                forcing_[i] = forcing_[i - 1] +
                              0.5 * (grid_[i] - grid_[i - 1]) * (f.g(grid_[i]).dot(test) + f.g(grid_[i - 1]).dot(test));
        count_ = 0;
        mean_.assign(n, 0.0);
        m2_.assign(n, 0.0);
    }

    void add(const Trajectory& tr) {
        if (!(tr.grid == grid_)) throw AlignmentError("ensemble trajectories use different grids");
        double drift = 0.0;
        double prev = tr.states[0].dot(adj_);
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double cur = tr.states[i].dot(adj_);
            if (i > 0) drift += 0.5 * (grid_[i] - grid_[i - 1]) * (cur + prev);
            prev = cur;
            const double r = tr.states[i].dot(test_) - x0_ - drift - forcing_[i];
            const double d = r - mean_[i];
            mean_[i] += d / double(count_ + 1);
            m2_[i] += d * (r - mean_[i]);
        }
        ++count_;
    }

    ResidualSeries result() const {
        ResidualSeries out;
        if (count_ == 0) return out;
        const double n = double(count_);
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            out.t.push_back(grid_[i]);
            out.residual.push_back(mean_[i]);
            out.se.push_back(count_ > 1 ? std::sqrt(std::max(m2_[i], 0.0) / (n - 1.0) / n) : 0.0);
        }
        return out;
    }

private:
    TimeGrid grid_;
    State test_, adj_;
    double x0_;
    std::vector<double> forcing_;
    std::size_t count_ = 0;
    std::vector<double> mean_, m2_;
};

inline ResidualSeries weak_mean_residual(const std::vector<Trajectory>& ensemble, const LinearModel& model,
                                         const ForcingTerm& f, const State& x, const State& test) {
    if (f.state_dependent()) throw DomainError("weak residual needs a time-only forcing");
    if (ensemble.empty()) return {};
    WeakResidual acc(model, f, x, test, ensemble.front().grid);
    for (const auto& tr : ensemble) acc.add(tr);
    return acc.result();
}

inline void write_residuals(std::ostream& os, const ResidualSeries& r) {
    CsvWriter w(os);
    w.header({"t", "residual", "se"});
    for (std::size_t i = 0; i < r.t.size(); ++i) w.row(r.t[i], r.residual[i], r.se[i]);
}

// ---------------------------------------------------------------------------
// Comparison principle
// ---------------------------------------------------------------------------

struct ComparisonViolation {
    std::size_t path_id = 0;
    double t = 0.0;
    double excess = 0.0;
};

struct ComparisonReport {
    std::size_t paths = 0;
    std::size_t passed = 0;
    std::vector<ComparisonViolation> violations;
    bool all_pass() const noexcept { return passed == paths; }
};

/// Dominating scalar solution y' = omega y + ||F(t)|| + b y dB^H, y(0) = M ||x||, along the
/// same path, solved by the scalar affine mild formula on the same grid.
inline Trajectory dominating_solution(double omega, double b, const Hurst& hurst, PathView path,
                                      const std::function<double(double)>& forcing_norm, double m_const,
                                      double x_norm) {
    const EvolutionFamily fam(LinearModel::scalar(omega, b), hurst, EvolutionMode::time_homogeneous);
    const MildOperator op(fam, *path.grid, Variant::uy);
    const auto f = forcing_norm ? ForcingTerm::time_only([forcing_norm](double t) { return State::Constant(1, forcing_norm(t)); })
                                : ForcingTerm::none();
    return solve_affine_mild(op, path, f, State::Constant(1, m_const * x_norm)).trajectory;
}

/// Checks ||X_t|| <= y(t)(1 + 1e-9) at every node of one path.
inline void comparison_bound(ComparisonReport& report, std::size_t path_id, const std::vector<double>& norms,
                             const Trajectory& dominating) {
    if (norms.size() != dominating.size()) throw AlignmentError("norm series and dominating solution differ in length");
    ++report.paths;
    bool ok = true;
    for (std::size_t i = 0; i < norms.size(); ++i) {
        const double y = dominating.states[i][0];
        const double excess = norms[i] - y * (1.0 + 1e-9);
        if (excess > 0.0) {
            ok = false;
            report.violations.push_back({path_id, dominating.grid[i], excess});
        }
    }
    if (ok) ++report.passed;
}

inline ComparisonReport comparison_bound(const std::vector<double>& norms, const Trajectory& dominating) {
    ComparisonReport r;
    comparison_bound(r, dominating.path_id, norms, dominating);
    return r;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline void write_trajectory_header(std::ostream& os) {
    CsvWriter(os).header({"path_id", "t", "component_index", "value"});
}

inline void write_trajectory_rows(std::ostream& os, const Trajectory& tr) {
    CsvWriter w(os);
    for (std::size_t i = 0; i < tr.size(); ++i)
        for (Eigen::Index k = 0; k < tr.states[i].size(); ++k)
            w.row(tr.path_id, tr.grid[i], std::size_t(k), tr.states[i][k]);
}

} // namespace fracevol
