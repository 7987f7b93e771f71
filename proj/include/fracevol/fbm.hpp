#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "fracevol/csv.hpp"
#include "fracevol/error.hpp"
#include "fracevol/fft.hpp"
#include "fracevol/fraccalc.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/parallel.hpp"
#include "fracevol/path.hpp"
#include "fracevol/rng.hpp"

namespace fracevol {

/// E[B^H_s B^H_t] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.
inline double covariance(const Hurst& hurst, double s, double t) {
    if (s < 0.0 || t < 0.0) throw DomainError("covariance needs s, t >= 0");
    const double p = 2.0 * hurst.value();
    if (s == t) return std::pow(t, p);
    if (hurst.is_brownian()) return std::min(s, t);
    return 0.5 * (std::pow(s, p) + std::pow(t, p) - std::pow(std::abs(t - s), p));
}

inline Eigen::MatrixXd covariance_matrix(const Hurst& hurst, const TimeGrid& grid) {
    const std::size_t n = grid.size();
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) c(i, j) = c(j, i) = covariance(hurst, grid[i], grid[j]);
    return c;
}

/// Lower Cholesky factor; throws FactorizationError with the failing pivot index.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > 0.0)) throw FactorizationError(std::size_t(j), d);
        l(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < n; ++i)
            l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
    return l;
}

/// Lower factor of the covariance on grid points t_1..t_n (the t = 0 row is dropped).
inline Eigen::MatrixXd covariance_factor(const Hurst& hurst, const TimeGrid& grid) {
    if (grid.size() < 2) throw DomainError("sampling needs at least two grid points");
    return cholesky_lower(covariance_matrix(hurst, grid).bottomRightCorner(grid.size() - 1, grid.size() - 1));
}

/// Dense sampler: values[1..n] = L z with L the Cholesky factor of the covariance.
inline PathEnsemble sample_dense(const Hurst& hurst, const TimeGrid& grid, const EnsembleSpec& spec) {
    const Eigen::MatrixXd l = covariance_factor(hurst, grid);
    const std::size_t n = grid.size() - 1;
    PathEnsemble ens(grid, spec.paths, spec.master_seed);
    ens.report.requested = ens.report.used = "dense";
    parallel_for(spec.paths, spec.threads, [&](std::size_t p) {
        NormalStream normals(path_seed(spec.master_seed, p));
        Eigen::VectorXd z(n);
        normals.fill({z.data(), n});
        Eigen::VectorXd x = l.triangularView<Eigen::Lower>() * z;
        auto out = ens.mutable_path(p);
        out[0] = 0.0;
        for (std::size_t i = 0; i < n; ++i) out[i + 1] = x[Eigen::Index(i)];
    });
    return ens;
}

/// gamma(k) = h^{2H} (|k+1|^{2H} + |k-1|^{2H} - 2|k|^{2H}) / 2, autocovariance of fGn increments.
inline double fgn_autocovariance(const Hurst& hurst, std::size_t k, double step = 1.0) {
    const double p = 2.0 * hurst.value();
    const double kk = double(k);
    const double base = k == 0 ? 1.0
                               : 0.5 * (std::pow(kk + 1.0, p) + std::pow(std::abs(kk - 1.0), p) -
                                        2.0 * std::pow(kk, p));
    return base * std::pow(step, p);
}

/// Eigenvalues of the circulant embedding of the increment autocovariance (size 2n).
inline std::vector<double> circulant_eigenvalues(const Hurst& hurst, std::size_t n, double step) {
    const std::size_t m = 2 * n;
    detail::ForwardFft fft(m);
    detail::FftwBuffer in(m), out(m);
    for (std::size_t k = 0; k <= n; ++k) {
        in.data[k][0] = fgn_autocovariance(hurst, k, step);
        in.data[k][1] = 0.0;
    }
    for (std::size_t k = n + 1; k < m; ++k) {
        in.data[k][0] = in.data[m - k][0];
        in.data[k][1] = 0.0;
    }
    fft.execute(in.data, out.data);
    std::vector<double> lam(m);
    for (std::size_t k = 0; k < m; ++k) lam[k] = out.data[k][0];
    return lam;
}

/// Relative threshold below which negative embedding eigenvalues are treated as roundoff.
inline constexpr double circulant_negative_tolerance = 1e-12;

/// Circulant-embedding sampler for uniform grids.
///
/// Increments are the real part of FFT(sqrt(lambda / 2n) * (Z1 + i Z2)); their cumulative
/// sum is the path. Eigenvalues below -1e-12 * max are a genuine failure and the dense
/// sampler is used instead (recorded in report()).
inline PathEnsemble sample_circulant(const Hurst& hurst, const TimeGrid& grid, const EnsembleSpec& spec) {
    if (grid.size() < 2) throw DomainError("sampling needs at least two grid points");
    if (!grid.is_uniform()) throw DomainError("circulant sampler needs a uniform grid");
    const std::size_t n = grid.steps();
    const std::size_t m = 2 * n;
    auto lam = circulant_eigenvalues(hurst, n, grid.step());
    const double lam_max = *std::max_element(lam.begin(), lam.end());
    const double lam_min = *std::min_element(lam.begin(), lam.end());
    if (lam_min < -circulant_negative_tolerance * lam_max) {
        auto ens = sample_dense(hurst, grid, spec);
        ens.report.requested = "circulant";
        ens.report.fallback_reason = "negative circulant eigenvalue " + format_real(lam_min / lam_max) +
                                     " (relative); used dense sampler";
        ens.report.min_relative_eigenvalue = lam_min / lam_max;
        return ens;
    }
    std::vector<double> scale(m);
    for (std::size_t k = 0; k < m; ++k) scale[k] = std::sqrt(std::max(lam[k], 0.0) / double(m));

    PathEnsemble ens(grid, spec.paths, spec.master_seed);
    ens.report.requested = ens.report.used = "circulant";
    ens.report.min_relative_eigenvalue = lam_min / lam_max;
    detail::ForwardFft fft(m);
    const unsigned workers = std::min<std::size_t>(resolve_threads(spec.threads), std::max<std::size_t>(spec.paths, 1));
    // One buffer pair per worker block; each path still draws from its own seed.
    const std::size_t block = (spec.paths + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::size_t w) {
        detail::FftwBuffer in(m), out(m);
        const std::size_t lo = std::min(spec.paths, w * block);
        const std::size_t hi = std::min(spec.paths, lo + block);
        for (std::size_t p = lo; p < hi; ++p) {
            NormalStream normals(path_seed(spec.master_seed, p));
            for (std::size_t k = 0; k < m; ++k) {
                in.data[k][0] = scale[k] * normals();
                in.data[k][1] = scale[k] * normals();
            }
            fft.execute(in.data, out.data);
            auto v = ens.mutable_path(p);
            v[0] = 0.0;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += out.data[i][0];
                v[i + 1] = acc;
            }
        }
    });
    return ens;
}

/// G(t, s) = int_0^{min(s,t)} (K*_H 1_{(0,t]})(r) dr, i.e. E[B^H_t W_s] in the Volterra
/// representation. Closed form through the regularized incomplete Beta function:
///
///   G(t, s) = C_H B(3/2-H, H-1/2) s^{H+1/2} [ 1/(H+1/2) + J(s/t) ],
///   J(z)    = int_z^1 x^{-H-3/2} I_x(3/2-H, H-1/2) dx,
///
/// where J is reduced by parts to I_z(3/2-H, H-1/2) and I_z(2-2H, H-1/2).
inline double khstar_indicator_primitive(const Hurst& hurst, double t, double s) {
    const double h = hurst.require_analysis().value();
    if (s <= 0.0) return 0.0;
    s = std::min(s, t);
    if (h == 0.5) return s;
    const auto c = frac_constants(hurst);
    const double z = s / t;
    const double hp = h + 0.5;
    const double p = 1.5 - h, q = h - 0.5;
    const double beta_pq = boost::math::beta(p, q);
    double j = 0.0;
    if (z < 1.0) {
        const double u = detail::upper_beta_negative(1.0 - 2.0 * h, q, z);
        j = -1.0 / hp + std::pow(z, -hp) * boost::math::ibeta(p, q, z) / hp + u / (hp * beta_pq);
    }
    return c.c_h * beta_pq * std::pow(s, hp) * (1.0 / hp + j);
}

/// int_a^b (K*_H 1_{(0,t]})(r) dr for 0 <= a < b.
inline double khstar_indicator_cell_integral(const Hurst& hurst, double t, double a, double b) {
    if (!(0.0 <= a && a < b)) throw DomainError("cell integral needs 0 <= a < b");
    return khstar_indicator_primitive(hurst, t, b) - khstar_indicator_primitive(hurst, t, a);
}

namespace detail {

/// Fixed tanh-sinh nodes and weights on [0, 1]; exact enough for integrable endpoint singularities.
struct TanhSinhRule {
    std::vector<double> nodes, weights;
};

inline TanhSinhRule tanh_sinh_rule(double spacing = 1.0 / 16.0) {
    TanhSinhRule r;
    const double half_pi = 0.5 * std::numbers::pi;
    for (int k = -200; k <= 200; ++k) {
        const double tau = k * spacing;
        const double arg = half_pi * std::sinh(tau);
        const double ch = std::cosh(arg);
        const double w = spacing * 0.5 * half_pi * std::cosh(tau) / (ch * ch);
        if (w < 1e-18) continue;
        // 1 - x computed without cancellation for the right tail.
        const double x = tau < 0 ? 0.5 * std::exp(arg) / ch : 1.0 - 0.5 * std::exp(-arg) / ch;
        r.nodes.push_back(x);
        r.weights.push_back(w);
    }
    return r;
}

} // namespace detail

/// Discretisation of the Volterra representation on a uniform grid.
///
/// Cells (t_j, t_{j+1}], j >= 1, are split into `subcells` equal parts; on each part the
/// kernel s -> (K*_H 1_{(0,t_i]})(s) is replaced by its average (an L^2 projection), driven
/// by the Wiener increment over that part. Averaging drops the variance of the kernel
/// within a part, which is largest at the cusp (t_i - s)^{H-1/2} next to s = t_i and
/// shrinks like (h/subcells)^{2H}. On the first cell the kernel has its s^{1/2-H}
/// singularity, so the vector (int_0^{t_1} K(t_i, s) dW_s)_i is drawn exactly from its
/// Gaussian law with covariance first_cell_covariance (kernel products by tanh-sinh).
struct WienerRepresentation {
    Eigen::MatrixXd weights;            // (grid points) x (parts of cells 1..n-1)
    Eigen::MatrixXd first_cell_factor;  // (grid points) x rank
    std::size_t subcells = 1;
};

inline Eigen::MatrixXd first_cell_covariance(const Hurst& hurst, const TimeGrid& grid) {
    const double h = hurst.require_analysis().value();
    const std::size_t n = grid.size();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    if (h == 0.5) {
        cov.bottomRightCorner(n - 1, n - 1).setConstant(grid[1]);
        return cov;
    }
    const auto c = frac_constants(hurst);
    // s^{1-2H} ds is flattened by v = s^{2-2H}.
    const double r = 2.0 - 2.0 * h;
    const double vmax = std::pow(grid[1], r);
    const auto rule = detail::tanh_sinh_rule();
    const std::size_t m = rule.nodes.size();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(m));
    for (std::size_t k = 0; k < m; ++k) {
        const double s = std::pow(vmax * rule.nodes[k], 1.0 / r);
        g(0, Eigen::Index(k)) = 0.0;
        for (std::size_t i = 1; i < n; ++i)
            g(Eigen::Index(i), Eigen::Index(k)) = detail::kernel_core(h, grid[i], s);
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(Eigen::Index(m));
    for (std::size_t k = 0; k < m; ++k) w[Eigen::Index(k)] = rule.weights[k] * vmax * c.c_h * c.c_h / r;
    cov = g * w.asDiagonal() * g.transpose();
    return cov;
}

inline constexpr std::size_t default_wiener_subcells = 8;

inline WienerRepresentation wiener_representation(const Hurst& hurst, const TimeGrid& grid,
                                                  std::size_t subcells = default_wiener_subcells) {
    hurst.require_analysis();
    if (!grid.is_uniform()) throw DomainError("Wiener representation sampler needs a uniform grid");
    if (subcells == 0) throw DomainError("subcells must be positive");
    const std::size_t n = grid.steps();
    const double width = grid.step() / double(subcells);
    WienerRepresentation rep;
    rep.subcells = subcells;
    rep.weights = Eigen::MatrixXd::Zero(Eigen::Index(n + 1), Eigen::Index((n - 1) * subcells));
    for (std::size_t i = 2; i <= n; ++i) {
        double prev = khstar_indicator_primitive(hurst, grid[i], grid[1]);
        for (std::size_t k = 0; k < (i - 1) * subcells; ++k) {
            const std::size_t j = 1 + k / subcells, part = k % subcells + 1;
            const double right = part == subcells ? grid[j + 1] : grid[j] + double(part) * width;
            const double next = khstar_indicator_primitive(hurst, grid[i], right);
            rep.weights(Eigen::Index(i), Eigen::Index(k)) = (next - prev) / width;
            prev = next;
        }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(first_cell_covariance(hurst, grid));
    const Eigen::VectorXd lam = eig.eigenvalues();
    const double cutoff = 1e-15 * std::max(lam.maxCoeff(), 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < lam.size(); ++k)
        if (lam[k] > cutoff) keep.push_back(k);
    rep.first_cell_factor.resize(Eigen::Index(n + 1), Eigen::Index(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        rep.first_cell_factor.col(Eigen::Index(c)) = eig.eigenvectors().col(keep[c]) * std::sqrt(lam[keep[c]]);
    return rep;
}

/// Sampler through the Volterra representation B^H_t = int_0^t (K*_H 1_{(0,t]})(s) dW_s.
inline PathEnsemble sample_from_wiener(const Hurst& hurst, const TimeGrid& grid, const EnsembleSpec& spec) {
    if (grid.size() < 2) throw DomainError("sampling needs at least two grid points");
    const auto rep = wiener_representation(hurst, grid);
    const Eigen::Index cells = rep.weights.cols();
    const Eigen::Index rank = rep.first_cell_factor.cols();
    const double sd = std::sqrt(grid.step() / double(rep.subcells));
    PathEnsemble ens(grid, spec.paths, spec.master_seed);
    ens.report.requested = ens.report.used = "wiener";
    parallel_for(spec.paths, spec.threads, [&](std::size_t p) {
        NormalStream normals(path_seed(spec.master_seed, p));
        Eigen::VectorXd dw(cells), z(rank);
        for (Eigen::Index c = 0; c < cells; ++c) dw[c] = sd * normals();
        for (Eigen::Index k = 0; k < rank; ++k) z[k] = normals();
        Eigen::VectorXd x = rep.weights * dw;
        x.noalias() += rep.first_cell_factor * z;
        auto out = ens.mutable_path(p);
        out[0] = 0.0;
        for (std::size_t i = 1; i < grid.size(); ++i) out[i] = x[Eigen::Index(i)];
    });
    return ens;
}

enum class SamplerKind { dense, circulant, wiener };

inline SamplerKind parse_sampler(const std::string& name) {
    if (name == "dense") return SamplerKind::dense;
    if (name == "circulant") return SamplerKind::circulant;
    if (name == "wiener") return SamplerKind::wiener;
    throw DomainError("unknown sampler '" + name + "' (expected dense, circulant or wiener)");
}

inline PathEnsemble sample(SamplerKind kind, const Hurst& hurst, const TimeGrid& grid, const EnsembleSpec& spec) {
    switch (kind) {
    case SamplerKind::dense: return sample_dense(hurst, grid, spec);
    case SamplerKind::circulant: return sample_circulant(hurst, grid, spec);
    case SamplerKind::wiener: return sample_from_wiener(hurst, grid, spec);
    }
    throw DomainError("unknown sampler");
}

/// A single reproducible path: path 0 of the circulant ensemble with this seed.
inline FbmPath sample_path(const Hurst& hurst, const TimeGrid& grid, std::uint64_t seed) {
    return sample_circulant(hurst, grid, {1, seed, 1}).copy_path(0);
}

/// Restriction of a path to every stride-th grid node.
inline FbmPath subsample(const PathView& path, std::size_t stride) {
    FbmPath out{path.grid->subsample(stride), {}, path.id};
    for (std::size_t i = 0; i < path.values.size(); i += stride) out.values.push_back(path[i]);
    return out;
}

/// Empirical second-moment matrix E[B_s B_t] and its entrywise standard errors.
struct EmpiricalCovariance {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd std_error;
};

/// Uses the known zero mean: the estimator of Cov(B_s, B_t) is the mean of B_s B_t.
inline EmpiricalCovariance empirical_covariance(const PathEnsemble& ens) {
    const Eigen::Index n = Eigen::Index(ens.grid().size());
    const std::size_t m = ens.size();
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(n, n), s2 = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd outer(n, n);
    for (std::size_t p = 0; p < m; ++p) {
        const auto v = ens.path(p).values;
        const Eigen::Map<const Eigen::VectorXd> x(v.data(), n);
        outer.noalias() = x * x.transpose();
        s1 += outer;
        s2 += outer.cwiseProduct(outer);
    }
    EmpiricalCovariance c;
    const double dm = double(m);
    c.mean = s1 / dm;
    const Eigen::MatrixXd var = (s2 / dm - c.mean.cwiseProduct(c.mean)) * (dm / std::max(dm - 1.0, 1.0));
    c.std_error = (var.cwiseMax(0.0) / dm).cwiseSqrt();
    return c;
}

/// CSV `path_id,t,value`, row-major by path.
inline void write_ensemble_csv(std::ostream& out, const PathEnsemble& ens) {
    CsvWriter w(out);
    w.header({"path_id", "t", "value"});
    for (std::size_t p = 0; p < ens.size(); ++p) {
        const auto v = ens.path(p).values;
        for (std::size_t i = 0; i < v.size(); ++i) w.row(p, ens.grid()[i], v[i]);
    }
}

} // namespace fracevol
