#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracevol/csv.hpp"
#include "fracevol/error.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/path.hpp"

namespace fracevol {

using State = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

struct ExpmResult {
    Eigen::MatrixXd value;
    int squarings = 0;
    /// Set when more than 40 squarings were needed.
    bool conditioning_warning = false;
};

/// Degree-13 Pade approximant with scaling and squaring (Higham 2005 parameters).
inline ExpmResult expm_report(const Eigen::MatrixXd& a) {
    static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                   1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                   670442572800.0,      33522128640.0,       1323241920.0,
                                   40840800.0,          960960.0,            16380.0,
                                   182.0,               1.0};
    static constexpr double theta13 = 5.371920351148152;
    const Eigen::Index n = a.rows();
    ExpmResult out;
    if (n == 0) return out;
    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    if (!std::isfinite(norm1)) throw DomainError("matrix exponential of a non-finite matrix");
    int s = 0;
    if (norm1 > theta13) s = std::max(0, int(std::ceil(std::log2(norm1 / theta13))));
    const Eigen::MatrixXd x = a / std::ldexp(1.0, s);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd x2 = x * x, x4 = x2 * x2, x6 = x4 * x2;
    const Eigen::MatrixXd u =
        x * (x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * id);
    const Eigen::MatrixXd v =
        x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * id;
    Eigen::MatrixXd r = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < s; ++k) r = r * r;
    out.value = std::move(r);
    out.squarings = s;
    out.conditioning_warning = s > 40;
    if (out.conditioning_warning)
        std::clog << "fracevol: matrix exponential needed " << s << " squarings\n";
    return out;
}

inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) { return expm_report(a).value; }

// ---------------------------------------------------------------------------
// Linear model
// ---------------------------------------------------------------------------

enum class Backend { scalar, matrix, spectral };

/// Operator pair (A, B) in one of three backends. B = b I for the scalar and spectral ones.
class LinearModel {
public:
    static LinearModel scalar(double a, double b) {
        if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("scalar model needs finite a, b");
        LinearModel m;
        m.backend_ = Backend::scalar;
        m.eigenvalues_ = Eigen::VectorXd::Constant(1, a);
        m.b_ = b;
        m.commuting_ = true;
        return m;
    }

    /// With `commuting` unset, commutation is detected; claiming it for a pair that does
    /// not commute throws.
    static LinearModel matrix(Eigen::MatrixXd a, Eigen::MatrixXd b, std::optional<bool> commuting = {}) {
        if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() || a.rows() == 0)
            throw DomainError("matrix model needs square A, B of equal size");
        if (!a.allFinite() || !b.allFinite()) throw DomainError("matrix model needs finite entries");
        const double defect = (a * b - b * a).cwiseAbs().maxCoeff();
        const bool commute = defect < 1e-12;
        if (commuting.value_or(false) && !commute)
            throw DomainError("A and B declared commuting but ||AB - BA||_max = " + std::to_string(defect));
        LinearModel m;
        m.backend_ = Backend::matrix;
        m.a_ = std::move(a);
        m.bmat_ = std::move(b);
        m.commuting_ = commuting.value_or(commute);
        return m;
    }

    static LinearModel spectral(Eigen::VectorXd eigenvalues, double b) {
        if (eigenvalues.size() == 0 || !eigenvalues.allFinite() || !std::isfinite(b))
            throw DomainError("spectral model needs finite eigenvalues and b");
        LinearModel m;
        m.backend_ = Backend::spectral;
        m.eigenvalues_ = std::move(eigenvalues);
        m.b_ = b;
        m.commuting_ = true;
        return m;
    }

    Backend backend() const noexcept { return backend_; }
    bool commuting() const noexcept { return commuting_; }
    bool diagonal() const noexcept { return backend_ != Backend::matrix; }
    std::size_t state_dim() const noexcept {
        return std::size_t(diagonal() ? eigenvalues_.size() : a_.rows());
    }

    /// Diagonal of A (scalar and spectral backends).
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    /// Noise coefficient b (scalar and spectral backends).
    double b() const { return b_; }
    double a() const { return eigenvalues_[0]; }

    Eigen::MatrixXd generator_a() const {
        return diagonal() ? Eigen::MatrixXd(eigenvalues_.asDiagonal()) : a_;
    }
    Eigen::MatrixXd generator_b() const {
        return diagonal() ? Eigen::MatrixXd(b_ * Eigen::MatrixXd::Identity(eigenvalues_.size(), eigenvalues_.size()))
                          : bmat_;
    }

    /// omega with ||S_A(t)|| <= e^{omega t} in the Euclidean norm (logarithmic norm of A).
    double growth_bound() const {
        if (diagonal()) return eigenvalues_.maxCoeff();
        const Eigen::MatrixXd sym = 0.5 * (a_ + a_.transpose());
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().maxCoeff();
    }

private:
    Backend backend_ = Backend::scalar;
    Eigen::VectorXd eigenvalues_;
    double b_ = 0.0;
    Eigen::MatrixXd a_, bmat_;
    bool commuting_ = true;
};

inline void check_state(const LinearModel& m, const State& x) {
    if (std::size_t(x.size()) != m.state_dim())
        throw DomainError("state has dimension " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(m.state_dim()));
}

/// e^{At} as a matrix.
inline Eigen::MatrixXd semigroup_matrix(const LinearModel& m, double t) {
    if (t < 0.0) throw DomainError("semigroup needs t >= 0");
    if (m.diagonal()) return Eigen::MatrixXd((m.eigenvalues() * t).array().exp().matrix().asDiagonal());
    return expm(m.generator_a() * t);
}

/// e^{At} x.
inline State semigroup_A(const LinearModel& m, double t, const State& x) {
    check_state(m, x);
    if (t < 0.0) throw DomainError("semigroup needs t >= 0");
    if (t == 0.0) return x;
    if (m.diagonal()) return ((m.eigenvalues() * t).array().exp() * x.array()).matrix();
    return expm(m.generator_a() * t) * x;
}

/// e^{Bu} as a matrix, u of either sign.
inline Eigen::MatrixXd group_matrix(const LinearModel& m, double u) {
    const auto d = Eigen::Index(m.state_dim());
    if (m.diagonal()) return std::exp(m.b() * u) * Eigen::MatrixXd::Identity(d, d);
    return expm(m.generator_b() * u);
}

/// e^{Bu} x.
inline State group_B(const LinearModel& m, double u, const State& x) {
    check_state(m, x);
    if (u == 0.0) return x;
    if (m.diagonal()) return std::exp(m.b() * u) * x;
    return expm(m.generator_b() * u) * x;
}

// ---------------------------------------------------------------------------
// Evolution system generated by A - H t^{2H-1} B^2
// ---------------------------------------------------------------------------

enum class EvolutionMode { two_parameter, time_homogeneous };
enum class Integrator { automatic, closed_form, magnus };

struct EvolutionOptions {
    double step = 1e-3;
    double tolerance = 1e-8;
    Integrator integrator = Integrator::automatic;
};

namespace detail {

/// t1^p - t0^p without cancellation for t1 close to t0.
inline double power_difference(double t0, double t1, double p) {
    if (t0 <= 0.0) return std::pow(t1, p);
    return std::pow(t0, p) * std::expm1(p * std::log1p((t1 - t0) / t0));
}

/// One fourth-order Magnus step for U' = (A - c(t) B^2) U, c(t) = H t^{2H-1}.
///
/// The coefficient moments are exact: int c = t^{2H}/2 and
/// m = int c(tau)(2 tau - t0 - t1) dtau, so the exponent is
/// A h - (t1^{2H} - t0^{2H})/2 B^2 + m/2 [A, B^2].
inline Eigen::MatrixXd magnus_step(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2,
                                   const Eigen::MatrixXd& comm, double h_exp, double t0, double t1) {
    const double d = power_difference(t0, t1, 2.0 * h_exp);
    const double m = 2.0 * h_exp / (2.0 * h_exp + 1.0) * power_difference(t0, t1, 2.0 * h_exp + 1.0) -
                     0.5 * (t0 + t1) * d;
    return expm(a * (t1 - t0) - 0.5 * d * b2 + 0.5 * m * comm);
}

/// Exponent of the mesh s + (t-s)(k/n)^gamma. The coefficient t^{2H-1} has unbounded
/// derivatives at 0, which caps a uniform mesh at order 2H+2; gamma = 4/(2H+1) restores 4.
inline double mesh_grading(double h_exp) { return 4.0 / (2.0 * h_exp + 1.0); }

inline Eigen::MatrixXd magnus_propagate(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b2,
                                        const Eigen::MatrixXd& comm, double h_exp, double s, double t,
                                        std::size_t steps) {
    const double gamma = mesh_grading(h_exp);
    Eigen::MatrixXd u = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    double t0 = s;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t1 = k + 1 == steps ? t : s + (t - s) * std::pow(double(k + 1) / double(steps), gamma);
        u = magnus_step(a, b2, comm, h_exp, t0, t1) * u;
        t0 = t1;
    }
    return u;
}

} // namespace detail

struct PropagatorResult {
    Eigen::MatrixXd value;
    /// Richardson estimate ||U_h - U_{h/2}|| / 15 (0 for closed forms).
    double error_estimate = 0.0;
    std::size_t steps = 0;
};

/// The evolution system U(t,s) of the deterministic part of the equation.
///
/// Commuting pairs use U(t,s) = e^{A(t-s)} e^{-B^2 (t^{2H} - s^{2H})/2}; others are integrated
/// with the Magnus scheme above on a graded mesh whose largest step is options.step, with a
/// step-halving error estimate.
class EvolutionFamily {
public:
    EvolutionFamily(LinearModel model, const Hurst& hurst,
                    EvolutionMode mode = EvolutionMode::two_parameter, EvolutionOptions opt = {})
        : model_(std::move(model)), hurst_(hurst.require_analysis()), mode_(mode), opt_(opt) {
        if (!(opt_.step > 0.0)) throw DomainError("evolution step must be positive");
        if (opt_.integrator == Integrator::closed_form && !model_.commuting())
            throw DomainError("closed-form evolution needs commuting A and B");
        a_ = model_.generator_a();
        const Eigen::MatrixXd b = model_.generator_b();
        b2_ = b * b;
        comm_ = a_ * b2_ - b2_ * a_;
    }

    const LinearModel& model() const noexcept { return model_; }
    const Hurst& hurst() const noexcept { return hurst_; }
    EvolutionMode mode() const noexcept { return mode_; }
    const EvolutionOptions& options() const noexcept { return opt_; }

    bool uses_closed_form() const {
        if (opt_.integrator == Integrator::magnus) return false;
        return model_.commuting();
    }

    /// Two-parameter U(t,s), regardless of mode.
    PropagatorResult propagator(double t, double s) const {
        if (!(0.0 <= s && s <= t)) throw DomainError("evolution needs 0 <= s <= t");
        const double h = hurst_.value();
        const auto d = Eigen::Index(model_.state_dim());
        PropagatorResult out;
        if (s == t) {
            out.value = Eigen::MatrixXd::Identity(d, d);
            return out;
        }
        const double ito = 0.5 * detail::power_difference(s, t, 2.0 * h);
        if (uses_closed_form()) {
            if (model_.diagonal()) {
                const double b2 = model_.b() * model_.b();
                out.value = ((model_.eigenvalues() * (t - s)).array() - b2 * ito).exp().matrix().asDiagonal();
            } else {
                out.value = expm(a_ * (t - s) - ito * b2_);
            }
            return out;
        }
        const double span = detail::mesh_grading(h) * (t - s);
        const std::size_t n = std::max<std::size_t>(1, std::size_t(std::ceil(span / opt_.step - 1e-9)));
        const Eigen::MatrixXd coarse = detail::magnus_propagate(a_, b2_, comm_, h, s, t, n);
        out.value = detail::magnus_propagate(a_, b2_, comm_, h, s, t, 2 * n);
        out.error_estimate = (out.value - coarse).norm() / 15.0;
        out.steps = 2 * n;
        if (out.error_estimate > opt_.tolerance)
            throw ConvergenceError("evolution step too coarse for tolerance", out.error_estimate);
        return out;
    }

    /// The operator used by this family: U(t,s) or U(t-s,0).
    Eigen::MatrixXd matrix(double t, double s) const {
        return mode_ == EvolutionMode::two_parameter ? propagator(t, s).value : propagator(t - s, 0.0).value;
    }

    State apply(double t, double s, const State& x) const {
        check_state(model_, x);
        if (t == s) return x;
        if (uses_closed_form() && model_.diagonal()) {
            const double h = hurst_.value();
            const double b2 = model_.b() * model_.b();
            const double ito = mode_ == EvolutionMode::two_parameter
                                   ? 0.5 * detail::power_difference(s, t, 2.0 * h)
                                   : 0.5 * std::pow(t - s, 2.0 * h);
            if (!(0.0 <= s && s <= t)) throw DomainError("evolution needs 0 <= s <= t");
            return (((model_.eigenvalues() * (t - s)).array() - b2 * ito).exp() * x.array()).matrix();
        }
        return matrix(t, s) * x;
    }

private:
    LinearModel model_;
    Hurst hurst_;
    EvolutionMode mode_;
    EvolutionOptions opt_;
    Eigen::MatrixXd a_, b2_, comm_;
};

/// Evaluates U(t,s) = evolution_U(family, t, s, x) for 0 <= s <= t.
inline State evolution_U(const EvolutionFamily& family, double t, double s, const State& x) {
    return family.apply(t, s, x);
}

/// Operator norms ||U(t_i, t_j)|| over a lattice (j <= i); C_U is their maximum.
struct NormLattice {
    std::vector<double> t, s, norm;
    double c_u = 0.0;
};

inline double operator_norm(const Eigen::MatrixXd& m) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

inline NormLattice norm_lattice(const EvolutionFamily& family, const TimeGrid& lattice) {
    NormLattice out;
    for (std::size_t i = 0; i < lattice.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = operator_norm(family.matrix(lattice[i], lattice[j]));
            out.t.push_back(lattice[i]);
            out.s.push_back(lattice[j]);
            out.norm.push_back(v);
            out.c_u = std::max(out.c_u, v);
        }
    return out;
}

inline void write_norm_lattice(std::ostream& os, const NormLattice& lat) {
    CsvWriter w(os);
    w.header({"t", "s", "norm"});
    for (std::size_t k = 0; k < lat.t.size(); ++k) w.row(lat.t[k], lat.s[k], lat.norm[k]);
}

// ---------------------------------------------------------------------------
// Random evolution families
// ---------------------------------------------------------------------------

enum class Variant { uy, uybar };

/// U_Y(t,s) = S_B(B_t - B_s) U(t-s,0) or Ubar_Y(t,s) = S_B(B_t - B_s) U(t,s) along one path.
class RandomEvolution {
public:
    RandomEvolution(const EvolutionFamily& family, PathView path, Variant variant)
        : family_(&family), path_(path), variant_(variant) {}

    Variant variant() const noexcept { return variant_; }
    const EvolutionFamily& family() const noexcept { return *family_; }
    PathView path() const noexcept { return path_; }

    Eigen::MatrixXd matrix(double t, double s) const {
        const double db = path_.at(t) - path_.at(s);
        const Eigen::MatrixXd u = variant_ == Variant::uy ? family_->propagator(t - s, 0.0).value
                                                          : family_->propagator(t, s).value;
        return group_matrix(family_->model(), db) * u;
    }

    State apply(double t, double s, const State& x) const {
        const LinearModel& m = family_->model();
        check_state(m, x);
        const double db = path_.at(t) - path_.at(s);
        if (t == s) return x;
        if (m.diagonal() && family_->uses_closed_form()) {
            if (!(0.0 <= s && s <= t)) throw DomainError("evolution needs 0 <= s <= t");
            const double h = family_->hurst().value();
            const double b = m.b();
            const double ito = variant_ == Variant::uy ? 0.5 * std::pow(t - s, 2.0 * h)
                                                       : 0.5 * detail::power_difference(s, t, 2.0 * h);
            return (((m.eigenvalues() * (t - s)).array() + (b * db - b * b * ito)).exp() * x.array()).matrix();
        }
        return matrix(t, s) * x;
    }

private:
    const EvolutionFamily* family_;
    PathView path_;
    Variant variant_;
};

inline State uy_apply(const RandomEvolution& v, double t, double s, const State& x) {
    if (v.variant() != Variant::uy) throw DomainError("uy_apply needs the U_Y variant");
    return v.apply(t, s, x);
}

inline State uybar_apply(const RandomEvolution& v, double t, double s, const State& x) {
    if (v.variant() != Variant::uybar) throw DomainError("uybar_apply needs the Ubar_Y variant");
    return v.apply(t, s, x);
}

/// ||V(t,r) V(r,s) x - V(t,s) x|| for 0 <= s <= r <= t.
inline double composition_defect(const RandomEvolution& v, double t, double r, double s, const State& x) {
    if (!(0.0 <= s && s <= r && r <= t)) throw DomainError("composition defect needs 0 <= s <= r <= t");
    return (v.apply(t, r, v.apply(r, s, x)) - v.apply(t, s, x)).norm();
}

} // namespace fracevol
