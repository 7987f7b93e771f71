#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "fracevol/error.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/path.hpp"
#include "fracevol/stats.hpp"

namespace fracevol {

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// alpha_H = H(2H-1) and C_H = sqrt(H(2H-1) / B(2-2H, H-1/2)).
///
/// Gamma and Beta come from Boost.Math (Lanczos approximation, double precision).
/// At H = 1/2 both vanish; the product C_H * Gamma(H - 1/2) tends to 1 and is
/// exposed separately as kernel_scale.
struct FracConstants {
    double alpha_h = 0.0;
    double c_h = 0.0;
    /// C_H * Gamma(H - 1/2); the prefactor of K*_H in front of the RL integral.
    double kernel_scale = 1.0;
    /// B(1-2H, H-1/2): coefficient of t^{2H-1} in the small-t expansion of the
    /// unweighted K*_H kernel of 1_{(0,u]} (independent of u).
    double small_t_coefficient = 0.0;
};

inline FracConstants frac_constants(const Hurst& hurst) {
    const double h = hurst.require_analysis().value();
    FracConstants c;
    if (h == 0.5) return c;
    c.alpha_h = h * (2.0 * h - 1.0);
    c.c_h = std::sqrt(c.alpha_h / boost::math::beta(2.0 - 2.0 * h, h - 0.5));
    c.kernel_scale = c.c_h * boost::math::tgamma(h - 0.5);
    // Beta with a negative first argument, continued analytically through Gamma.
    c.small_t_coefficient = boost::math::tgamma(1.0 - 2.0 * h) * boost::math::tgamma(h - 0.5) /
                            boost::math::tgamma(0.5 - h);
    return c;
}

// ---------------------------------------------------------------------------
// Step functions
// ---------------------------------------------------------------------------

/// phi = sum_k a_k 1_{(t_k, t_{k+1}]} on 0 = t_0 < ... < t_N = T.
class StepFunction {
public:
    StepFunction(std::vector<double> breakpoints, std::vector<double> levels)
        : breaks_(std::move(breakpoints)), levels_(std::move(levels)) {
        if (breaks_.size() < 2 || breaks_.front() != 0.0)
            throw DomainError("step function needs breakpoints starting at 0");
        if (levels_.size() + 1 != breaks_.size())
            throw DomainError("step function needs one level per interval");
        for (std::size_t i = 1; i < breaks_.size(); ++i)
            if (!(breaks_[i] > breaks_[i - 1]))
                throw DomainError("step function breakpoints must be strictly increasing");
        for (double a : levels_)
            if (!std::isfinite(a)) throw DomainError("step function levels must be finite");
    }

    /// 1_{(a,b]} on [0,T].
    static StepFunction indicator(double a, double b, double horizon) {
        if (!(0.0 <= a && a < b && b <= horizon))
            throw DomainError("indicator needs 0 <= a < b <= T");
        std::vector<double> br{0.0};
        std::vector<double> lv;
        if (a > 0.0) {
            br.push_back(a);
            lv.push_back(0.0);
        }
        br.push_back(b);
        lv.push_back(1.0);
        if (b < horizon) {
            br.push_back(horizon);
            lv.push_back(0.0);
        }
        return {std::move(br), std::move(lv)};
    }

    std::span<const double> breakpoints() const noexcept { return breaks_; }
    std::span<const double> levels() const noexcept { return levels_; }
    std::size_t intervals() const noexcept { return levels_.size(); }
    double horizon() const noexcept { return breaks_.back(); }

    /// Value at t with the left-open, right-closed convention; 0 outside (0, T].
    double operator()(double t) const {
        if (!(t > 0.0) || t > horizon()) return 0.0;
        const auto it = std::lower_bound(breaks_.begin() + 1, breaks_.end(), t);
        return levels_[std::size_t(it - breaks_.begin()) - 1];
    }

    double l2_norm_squared() const {
        double s = 0.0;
        for (std::size_t k = 0; k < levels_.size(); ++k)
            s += levels_[k] * levels_[k] * (breaks_[k + 1] - breaks_[k]);
        return s;
    }

    StepFunction scaled(double c) const {
        auto lv = levels_;
        for (double& a : lv) a *= c;
        return {breaks_, std::move(lv)};
    }

private:
    std::vector<double> breaks_;
    std::vector<double> levels_;
};

/// Exact L^2([0,T]) product of two step functions.
inline double l2_inner(const StepFunction& phi, const StepFunction& psi) {
    const auto pb = phi.breakpoints(), qb = psi.breakpoints();
    double s = 0.0;
    for (std::size_t k = 0; k < phi.intervals(); ++k)
        for (std::size_t l = 0; l < psi.intervals(); ++l) {
            const double lo = std::max(pb[k], qb[l]);
            const double hi = std::min(pb[k + 1], qb[l + 1]);
            if (hi > lo) s += phi.levels()[k] * psi.levels()[l] * (hi - lo);
        }
    return s;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadratureOptions {
    double abs_tol = 1e-8;
    /// Target handed to the adaptive rule; tighter than abs_tol so the check has headroom.
    double rel_target = 1e-12;
    unsigned max_depth = 30;
};

/// Adaptive 31-point Gauss-Kronrod on [a, b]; throws QuadratureError above tolerance.
template <class F>
double integrate_smooth(F&& f, double a, double b, const QuadratureOptions& opt, const char* what) {
    if (!(b > a)) return 0.0;
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, a, b, opt.max_depth, opt.rel_target, &err);
    if (!std::isfinite(v) || !(err <= opt.abs_tol)) throw QuadratureError(what, err);
    return v;
}

/// Right-sided Riemann-Liouville integral (1/Gamma(alpha)) int_t^T f(s) (s-t)^{alpha-1} ds.
///
/// The endpoint singularity is removed exactly by sigma = (s-t)^alpha, which turns the
/// integral into (1/Gamma(alpha+1)) int_0^{(T-t)^alpha} f(t + sigma^{1/alpha}) dsigma.
/// `breaks` lists discontinuities of f; the integral is split there. Returns 0 for t >= T.
inline double rl_right_integral(const std::function<double(double)>& f, double alpha, double horizon,
                                double t, std::span<const double> breaks = {},
                                const QuadratureOptions& opt = {}) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
    if (t < 0.0) throw DomainError("t must be nonnegative");
    if (t >= horizon) return 0.0;
    const double p = 1.0 / alpha;
    auto g = [&](double sigma) { return f(t + std::pow(sigma, p)); };
    std::vector<double> cuts{0.0};
    for (double b : breaks)
        if (b > t && b < horizon) cuts.push_back(std::pow(b - t, alpha));
    cuts.push_back(std::pow(horizon - t, alpha));
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += integrate_smooth(g, cuts[i], cuts[i + 1], opt, "Riemann-Liouville integral");
    return total / boost::math::tgamma(alpha + 1.0);
}

// ---------------------------------------------------------------------------
// K*_H kernels
// ---------------------------------------------------------------------------

namespace detail {

/// int_z^1 x^{a-1} (1-x)^{b-1} dx for -1 < a < 0 < b and 0 < z <= 1, continued through
/// the a+1 > 0 case by one integration by parts.
inline double upper_beta_negative(double a, double b, double z) {
    if (z >= 1.0) return 0.0;
    return -std::pow(z, a) * std::pow(1.0 - z, b) / a +
           (a + b) / a * boost::math::beta(a + 1.0, b) * boost::math::ibetac(a + 1.0, b, z);
}

/// int_t^u s^{H-1/2} (s-t)^{H-3/2} ds for 0 <= t < u (H > 1/2).
/// With s = t/y this is t^{2H-1} int_{t/u}^1 y^{-2H} (1-y)^{H-3/2} dy.
inline double kernel_core(double h, double u, double t, const QuadratureOptions& = {}) {
    if (t >= u) return 0.0;
    if (t == 0.0) return std::pow(u, 2.0 * h - 1.0) / (2.0 * h - 1.0);
    return std::pow(t, 2.0 * h - 1.0) * upper_beta_negative(1.0 - 2.0 * h, h - 0.5, t / u);
}

} // namespace detail

/// Samples of (K*_H f)(t) on a grid.
///
/// For H > 1/2 the kernel behaves like t^{1/2-H} at the origin, so values[0] is +inf.
/// The product-integration rules below work with the bounded factor
/// regular(t) = t^{H-1/2} (K*_H f)(t), whose small-t behaviour is
/// regular(t) = lead_constant + lead_power * t^{2H-1} + O(t).
struct SampledKernel {
    TimeGrid grid;
    double hurst = 0.5;
    std::vector<double> values;
    std::vector<double> regular;
    double lead_constant = 0.0;
    double lead_power = 0.0;
};

/// Caches the unweighted kernel t -> C_H int_t^u s^{H-1/2}(s-t)^{H-3/2} ds per cut point u.
class KernelTable {
public:
    KernelTable(const Hurst& hurst, TimeGrid grid, QuadratureOptions opt = {})
        : hurst_(hurst.require_analysis()), grid_(std::move(grid)), opt_(opt),
          constants_(frac_constants(hurst)) {}

    const TimeGrid& grid() const noexcept { return grid_; }
    const FracConstants& constants() const noexcept { return constants_; }

    /// regular(t_i) for f = 1_{(0,u]}.
    const std::vector<double>& indicator_regular(double u) {
        auto it = cache_.find(u);
        if (it != cache_.end()) return it->second;
        std::vector<double> r(grid_.size(), 0.0);
        const double h = hurst_.value();
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double t = grid_[i];
            if (h == 0.5) {
                r[i] = (t > 0.0 && t <= u) ? 1.0 : 0.0;
                continue;
            }
            if (t >= u) break;
            r[i] = constants_.c_h * detail::kernel_core(h, u, t, opt_);
        }
        return cache_.emplace(u, std::move(r)).first->second;
    }

    /// K*_H phi sampled on the grid.
    SampledKernel sample(const StepFunction& phi) {
        const double h = hurst_.value();
        SampledKernel k;
        k.grid = grid_;
        k.hurst = h;
        k.regular.assign(grid_.size(), 0.0);
        const auto br = phi.breakpoints();
        const auto lv = phi.levels();
        for (std::size_t j = 0; j < lv.size(); ++j) {
            if (lv[j] == 0.0) continue;
            const auto& upper = indicator_regular(br[j + 1]);
            for (std::size_t i = 0; i < grid_.size(); ++i) k.regular[i] += lv[j] * upper[i];
            if (br[j] > 0.0) {
                const auto& lower = indicator_regular(br[j]);
                for (std::size_t i = 0; i < grid_.size(); ++i) k.regular[i] -= lv[j] * lower[i];
            }
            if (h > 0.5) {
                const double e = 2.0 * h - 1.0;
                k.lead_constant += lv[j] * constants_.c_h *
                                   (std::pow(br[j + 1], e) - std::pow(br[j], e)) / e;
                if (br[j] == 0.0) k.lead_power += lv[j] * constants_.c_h * constants_.small_t_coefficient;
            }
        }
        k.values.resize(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double t = grid_[i];
            if (h == 0.5)
                k.values[i] = k.regular[i];
            else
                k.values[i] = t > 0.0 ? std::pow(t, 0.5 - h) * k.regular[i]
                                      : (k.regular[0] == 0.0 ? 0.0 : std::copysign(INFINITY, k.regular[0]));
        }
        return k;
    }

private:
    Hurst hurst_;
    TimeGrid grid_;
    QuadratureOptions opt_;
    FracConstants constants_;
    std::map<double, std::vector<double>> cache_;
};

/// (K*_H 1_{(0,u]})(t) on the grid; zero for t >= u. At H = 1/2 this is the indicator itself.
inline SampledKernel khstar_indicator(const Hurst& hurst, double u, double horizon, const TimeGrid& grid,
                                      const QuadratureOptions& opt = {}) {
    if (!(u > 0.0 && u <= horizon)) throw DomainError("khstar_indicator needs 0 < u <= T");
    KernelTable table(hurst, grid, opt);
    return table.sample(StepFunction({0.0, u}, {1.0}));
}

/// Pointwise (K*_H 1_{(0,u]})(t) for a single t > 0.
inline double khstar_indicator_at(const Hurst& hurst, double u, double t, const QuadratureOptions& opt = {}) {
    const double h = hurst.require_analysis().value();
    if (t >= u || t <= 0.0) return t >= u ? 0.0 : INFINITY;
    if (h == 0.5) return 1.0;
    const auto c = frac_constants(hurst);
    return c.c_h * std::pow(t, 0.5 - h) * detail::kernel_core(h, u, t, opt);
}

/// int_0^T kernel_a(t) kernel_b(t) dt on the shared grid.
///
/// The integrand is t^{1-2H} g(t) with g = regular_a * regular_b. The known leading
/// part of g (constant, t^{2H-1} and t^{4H-2} terms) is integrated exactly against the
/// weight; the remainder is interpolated linearly per cell and integrated against
/// t^{1-2H} with exact moments.
inline double kernel_l2_product(const SampledKernel& a, const SampledKernel& b) {
    const auto& g = a.grid;
    if (!(g == b.grid)) throw DomainError("kernels must share a grid");
    const double h = a.hurst;
    const std::size_t n = g.size();
    if (n < 2) return 0.0;
    if (h == 0.5) {
        // Trapezoid on the indicator samples is not exact; use cell-right values which
        // match the (t_k, t_{k+1}] convention for step functions aligned with the grid.
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) s += a.values[i + 1] * b.values[i + 1] * (g[i + 1] - g[i]);
        return s;
    }
    const double e = 1.0 - 2.0 * h;  // weight exponent
    const double q = 2.0 * h - 1.0;  // leading power in the regular part
    const double c0 = a.lead_constant * b.lead_constant;
    const double c1 = a.lead_constant * b.lead_power + b.lead_constant * a.lead_power;
    const double c2 = a.lead_power * b.lead_power;
    auto lead = [&](double t) {
        const double tau = std::pow(t, q);
        return c0 + c1 * tau + c2 * tau * tau;
    };
    std::vector<double> rem(n);
    for (std::size_t i = 0; i < n; ++i) rem[i] = a.regular[i] * b.regular[i] - lead(g[i]);
    std::vector<double> cell(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double t0 = g[i], t1 = g[i + 1], dt = t1 - t0;
        const double m0 = (std::pow(t1, e + 1.0) - std::pow(t0, e + 1.0)) / (e + 1.0);
        const double m1 = (std::pow(t1, e + 2.0) - std::pow(t0, e + 2.0)) / (e + 2.0);
        const double w1 = (m1 - t0 * m0) / dt;
        const double w0 = m0 - w1;
        cell[i] = rem[i] * w0 + rem[i + 1] * w1;
    }
    const double T = g.horizon();
    const double exact_lead = c0 * std::pow(T, 2.0 - 2.0 * h) / (2.0 - 2.0 * h) + c1 * T +
                              c2 * std::pow(T, 2.0 * h) / (2.0 * h);
    return pairwise_sum(cell) + exact_lead;
}

// ---------------------------------------------------------------------------
// Inner products on the step-function class
// ---------------------------------------------------------------------------

/// <1_{(a,b]}, 1_{(c,d]}>_H = (|b-c|^{2H} + |a-d|^{2H} - |a-c|^{2H} - |b-d|^{2H}) / 2.
inline double interval_inner(double a, double b, double c, double d, double h) {
    const double p = 2.0 * h;
    return 0.5 * (std::pow(std::abs(b - c), p) + std::pow(std::abs(a - d), p) -
                  std::pow(std::abs(a - c), p) - std::pow(std::abs(b - d), p));
}

/// <phi, psi>_H in closed form, rectangle by rectangle. Exact L^2 product at H = 1/2.
inline double inner_h_closed(const StepFunction& phi, const StepFunction& psi, const Hurst& hurst) {
    const double h = hurst.require_analysis().value();
    if (h == 0.5) return l2_inner(phi, psi);
    const auto pb = phi.breakpoints(), qb = psi.breakpoints();
    std::vector<double> terms;
    terms.reserve(phi.intervals() * psi.intervals());
    for (std::size_t k = 0; k < phi.intervals(); ++k) {
        if (phi.levels()[k] == 0.0) continue;
        for (std::size_t l = 0; l < psi.intervals(); ++l) {
            if (psi.levels()[l] == 0.0) continue;
            terms.push_back(phi.levels()[k] * psi.levels()[l] *
                            interval_inner(pb[k], pb[k + 1], qb[l], qb[l + 1], h));
        }
    }
    return pairwise_sum(terms);
}

struct KernelInnerProduct {
    double value = 0.0;
    /// Difference between the extrapolated values on the full grid and on every other node.
    double error_estimate = 0.0;
    std::size_t resolution = 0;
};

namespace detail {

/// The same kernel on every stride-th node.
inline SampledKernel coarsen(const SampledKernel& k, std::size_t stride) {
    SampledKernel out = k;
    out.grid = k.grid.subsample(stride);
    out.values.clear();
    out.regular.clear();
    for (std::size_t i = 0; i < k.values.size(); i += stride) {
        out.values.push_back(k.values[i]);
        out.regular.push_back(k.regular[i]);
    }
    return out;
}

/// I from I_k = I + A (2^k h)^{p1} + B (2^k h)^{p2}, k = 0, 1, 2.
inline double richardson_two(double v0, double v1, double v2, double p1, double p2) {
    const double r1 = std::pow(2.0, p1), r2 = std::pow(2.0, p2);
    Eigen::Matrix3d m;
    m << 1.0, 1.0, 1.0, 1.0, r1, r2, 1.0, r1 * r1, r2 * r2;
    return m.fullPivLu().solve(Eigen::Vector3d(v0, v1, v2))(0);
}

} // namespace detail

/// <K*_H phi, K*_H psi>_{L^2([0,T])} from kernels sampled on a uniform grid of
/// `resolution` steps (a multiple of 8). Throws QuadratureError when the estimate exceeds
/// `tolerance`. Pass a KernelTable built on TimeGrid::uniform(T, resolution) to reuse kernels.
///
/// Each kernel has a cusp (u - t)^{H-1/2} to the left of every breakpoint u, so the plain
/// product rule converges like h^{H+1/2}. The errors from single and coinciding cusps,
/// h^{H+1/2} and h^{2H}, are eliminated by extrapolation over the grid and its stride-2
/// and stride-4 subgrids; the same extrapolation one level coarser gives the estimate.
inline KernelInnerProduct inner_h_via_kernel(const StepFunction& phi, const StepFunction& psi,
                                             const Hurst& hurst, std::size_t resolution,
                                             double tolerance = 1e-4, KernelTable* table = nullptr) {
    hurst.require_analysis();
    if (phi.horizon() != psi.horizon()) throw DomainError("step functions must share the horizon T");
    if (resolution < 8 || resolution % 8 != 0) throw DomainError("resolution must be a positive multiple of 8");
    const double T = phi.horizon();
    KernelInnerProduct out;
    out.resolution = resolution;
    if (hurst.is_brownian()) {
        out.value = l2_inner(phi, psi);
        return out;
    }
    std::optional<KernelTable> own;
    if (!table) table = &own.emplace(hurst, TimeGrid::uniform(T, resolution));
    if (table->grid().steps() != resolution || table->grid().horizon() != T)
        throw DomainError("kernel table does not match the resolution");
    const auto a = table->sample(phi), b = table->sample(psi);
    double v[4];
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t stride = std::size_t(1) << k;
        v[k] = stride == 1 ? kernel_l2_product(a, b) : kernel_l2_product(detail::coarsen(a, stride), detail::coarsen(b, stride));
    }
    const double q = hurst.value() - 0.5;
    out.value = detail::richardson_two(v[0], v[1], v[2], 1.0 + q, 1.0 + 2.0 * q);
    out.error_estimate = std::abs(out.value - detail::richardson_two(v[1], v[2], v[3], 1.0 + q, 1.0 + 2.0 * q));
    if (out.error_estimate > tolerance)
        throw QuadratureError("kernel inner product above tolerance", out.error_estimate);
    return out;
}

/// ||phi||_H / ||phi||_{L^2}.
inline double embedding_ratio(const StepFunction& phi, const Hurst& hurst) {
    const double l2 = phi.l2_norm_squared();
    if (!(l2 > 0.0)) throw DomainError("embedding ratio of the zero function");
    return std::sqrt(std::max(0.0, inner_h_closed(phi, phi, hurst)) / l2);
}

/// Deterministic 50-member family on [0,T] used to exhibit a finite embedding constant.
///
/// Member k (0..49) has m = 2 + k/5 equal intervals with levels
/// cos(pi * (k%5 + 1) * (j + 1/2) / m) + (k%2) * (j+1)/m, j = 0..m-1.
inline std::vector<StepFunction> embedding_test_family(double horizon = 1.0) {
    std::vector<StepFunction> fam;
    for (int k = 0; k < 50; ++k) {
        const int m = 2 + k / 5;
        std::vector<double> br(m + 1), lv(m);
        for (int j = 0; j <= m; ++j) br[j] = horizon * double(j) / double(m);
        br.back() = horizon;
        for (int j = 0; j < m; ++j)
            lv[j] = std::cos(std::numbers::pi * double(k % 5 + 1) * (j + 0.5) / m) +
                    double(k % 2) * double(j + 1) / m;
        fam.emplace_back(std::move(br), std::move(lv));
    }
    return fam;
}

/// A named pair of integrands for isometry checks.
struct IsometryCase {
    std::string name;
    StepFunction phi;
    StepFunction psi;
};

/// Isometry test family on [0,T]; every breakpoint is a multiple of T/16.
inline std::vector<IsometryCase> isometry_test_family(double horizon = 1.0) {
    const double q = horizon / 16.0;
    auto ind = [&](int a, int b) { return StepFunction::indicator(a * q, b * q, horizon); };
    std::vector<double> br(17);
    for (int j = 0; j <= 16; ++j) br[j] = j * q;
    std::vector<double> ramp(16), wave(16);
    for (int j = 0; j < 16; ++j) {
        ramp[j] = (j + 1) / 16.0;
        wave[j] = std::cos(std::numbers::pi * (j + 0.5) / 4.0);
    }
    const StepFunction r(br, ramp), w(br, wave);
    return {
        {"unit_unit", ind(0, 16), ind(0, 16)},
        {"unit_middle", ind(0, 16), ind(4, 12)},
        {"disjoint_adjacent", ind(0, 8), ind(8, 16)},
        {"disjoint_distant", ind(0, 4), ind(12, 16)},
        {"overlap", ind(2, 10), ind(6, 14)},
        {"ramp_unit", r, ind(0, 16)},
        {"ramp_ramp", r, r},
        {"wave_wave", w, w},
        {"wave_ramp", w, r},
        {"signed_short", StepFunction({0.0, q, 2 * q, horizon}, {1.0, -1.0, 0.0}), ind(1, 3)},
    };
}

// ---------------------------------------------------------------------------
// Wick-Ito integral of step functions
// ---------------------------------------------------------------------------

/// sum_k a_k (B^H(t_{k+1}) - B^H(t_k)). Breakpoints must be nodes of the path grid.
inline double wick_integral_step(const StepFunction& phi, const PathView& path) {
    const auto br = phi.breakpoints();
    const auto lv = phi.levels();
    double s = 0.0;
    std::size_t prev = path.grid->index_of(br[0]);
    for (std::size_t k = 0; k < lv.size(); ++k) {
        const std::size_t next = path.grid->index_of(br[k + 1]);
        s += lv[k] * (path[next] - path[prev]);
        prev = next;
    }
    return s;
}

struct IsometryReport {
    std::string name;
    double analytic = 0.0;
    double mc_estimate = 0.0;
    double std_error = 0.0;
    bool pass = false;
    /// Standard error too large to resolve the comparison.
    bool inconclusive = false;
};

/// Monte Carlo mean of I(phi) I(psi) against <phi, psi>_H.
///
/// pass: |mc - analytic| <= 3 SE. inconclusive: 3 SE exceeds 10% of ||phi||_H ||psi||_H.
inline IsometryReport isometry_report(const StepFunction& phi, const StepFunction& psi, const Hurst& hurst,
                                      const PathEnsemble& ensemble, std::string name = {}) {
    IsometryReport r;
    r.name = std::move(name);
    r.analytic = inner_h_closed(phi, psi, hurst);
    std::vector<double> prod(ensemble.size());
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        const auto p = ensemble.path(i);
        prod[i] = wick_integral_step(phi, p) * wick_integral_step(psi, p);
    }
    const auto est = jackknife_mean(prod);
    r.mc_estimate = est.mean;
    r.std_error = est.std_error;
    const double scale = std::sqrt(std::max(0.0, inner_h_closed(phi, phi, hurst)) *
                                   std::max(0.0, inner_h_closed(psi, psi, hurst)));
    r.inconclusive = ensemble.size() < 2 || 3.0 * r.std_error > 0.1 * scale;
    r.pass = !r.inconclusive && std::abs(r.mc_estimate - r.analytic) <= 3.0 * r.std_error;
    return r;
}

} // namespace fracevol
