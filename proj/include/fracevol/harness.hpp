#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "fracevol/csv.hpp"
#include "fracevol/error.hpp"
#include "fracevol/fraccalc.hpp"
#include "fracevol/grid.hpp"
#include "fracevol/parallel.hpp"
#include "fracevol/path.hpp"
#include "fracevol/stats.hpp"

namespace fracevol {

/// Per-path norms ||X_t|| on a common set of times: norms[path][time].
struct NormTable {
    std::vector<double> times;
    std::vector<std::vector<double>> norms;
};

/// Parameters of the moment law and of the a priori bound
///   E||X_t||^p <= K [ M^p ||x||^p e^{c t^{2H} + p w t}
///                     + M^p t^{p-1} int_0^t e^{c (t-s)^{2H} + p w (t-s)} ||F(s)||^p ds ],
/// c = b^2 (p^2 - p)/2.
struct MomentLaw {
    double hurst = 0.75;
    double omega = 0.0;
    double b = 0.0;
    double m_const = 1.0;
    double x_norm = 1.0;
    /// ||F(s)||; empty means F = 0.
    std::function<double(double)> forcing_norm;
    /// True when X_t = x exp{...} exactly (scalar backend), so the exact moment is known.
    bool exact_law = false;

    double c_hat(double p) const { return 0.5 * b * b * (p * p - p); }

    double exact(double t, double p) const {
        if (!exact_law || forcing_norm) return std::nan("");
        return std::pow(x_norm, p) * std::exp(c_hat(p) * std::pow(t, 2.0 * hurst) + p * omega * t);
    }

    /// The constant K: 1 when only one of the two terms is present, 2^{p-1} otherwise
    /// (convexity of s -> s^p).
    double constant(double p) const {
        const bool both = forcing_norm && x_norm != 0.0;
        return both ? std::pow(2.0, p - 1.0) : 1.0;
    }

    double bound_terms(double t, double p) const {
        const double mp = std::pow(m_const, p);
        double v = mp * std::pow(x_norm, p) * std::exp(c_hat(p) * std::pow(t, 2.0 * hurst) + p * omega * t);
        if (forcing_norm && t > 0.0) {
            // u = t - s = r^2 removes the u^{2H} kink at u = 0.
            auto g = [&](double r) {
                const double u = r * r;
                return 2.0 * r * std::exp(c_hat(p) * std::pow(u, 2.0 * hurst) + p * omega * u) *
                       std::pow(forcing_norm(t - u), p);
            };
            v += mp * std::pow(t, p - 1.0) *
                 integrate_smooth(g, 0.0, std::sqrt(t), {1e-10, 1e-12, 30}, "moment bound integral");
        }
        return v;
    }

    double bound(double t, double p) const { return constant(p) * bound_terms(t, p); }
};

struct MomentRow {
    double t = 0.0;
    double p = 1.0;
    double estimate = 0.0;
    double se = 0.0;
    double exact = std::nan("");
    double bound = std::nan("");
    bool pass = true;
    std::size_t excluded = 0;
};

struct MomentReport {
    std::vector<MomentRow> rows;
    std::size_t paths = 0;
    /// Smallest K >= 1 with estimate <= K * bound_terms at every row (NaN without a bound).
    double fitted_constant = std::nan("");
    bool all_pass() const {
        return std::all_of(rows.begin(), rows.end(), [](const MomentRow& r) { return r.pass; });
    }
};

/// Paths needed before moments of order p > 4 are estimated.
inline constexpr std::size_t high_moment_path_floor = 1000000;

/// Monte Carlo moments E||X_t||^p with jackknife standard errors. Non-finite |X|^p values are
/// excluded and counted. With a law attached, exact values and bounds are filled in and
/// checked as in check_bounds.
inline MomentReport estimate_moments(const NormTable& table, const std::vector<double>& p_list,
                                     const MomentLaw* law = nullptr) {
    if (table.norms.empty()) throw DomainError("moment estimation needs a nonempty ensemble");
    MomentReport rep;
    rep.paths = table.norms.size();
    for (double p : p_list) {
        if (!(p >= 1.0)) throw DomainError("moment order must satisfy p >= 1");
        if (p > 4.0 && rep.paths < high_moment_path_floor)
            throw DomainError("moments of order p > 4 need at least 10^6 paths");
    }
    for (std::size_t k = 0; k < table.times.size(); ++k)
        for (double p : p_list) {
            MomentRow row;
            row.t = table.times[k];
            row.p = p;
            std::vector<double> v;
            v.reserve(rep.paths);
            for (const auto& path : table.norms) {
                const double x = std::pow(path[k], p);
                if (std::isfinite(x))
                    v.push_back(x);
                else
                    ++row.excluded;
            }
            const auto est = jackknife_mean(v);
            row.estimate = est.mean;
            row.se = est.std_error;
            if (law) {
                row.exact = law->exact(row.t, p);
                row.bound = law->bound(row.t, p);
            }
            rep.rows.push_back(row);
        }
    return rep;
}

/// estimate <= bound + 3 SE at every row; records the fitted constant.
inline MomentReport& check_bounds(MomentReport& rep, const MomentLaw& law) {
    double fitted = 1.0;
    for (auto& r : rep.rows) {
        r.bound = law.bound(r.t, r.p);
        r.exact = law.exact(r.t, r.p);
        r.pass = r.estimate <= r.bound + 3.0 * r.se;
        const double base = law.bound_terms(r.t, r.p);
        if (base > 0.0) fitted = std::max(fitted, r.estimate / base);
    }
    rep.fitted_constant = fitted;
    return rep;
}

struct StabilityReport {
    double p = 2.0;
    /// Checkpoints in the last half of the horizon.
    std::vector<double> times;
    /// log E|X_t|^p from the log-normal fit p mu + p^2 sigma^2 / 2 of log|X_t|.
    std::vector<double> log_moment_fit;
    /// log of the plain Monte Carlo mean of |X_t|^p.
    std::vector<double> log_moment_mc;
    /// Quantiles of p log|X_t| / t across paths (5%, 50%, 95%).
    std::vector<double> q05, q50, q95;
    double moment_slope = 0.0;
    double moment_slope_mc = 0.0;
    /// Median over paths of the least-squares slope of p log|X_t| on the last half.
    double pathwise_median_slope = 0.0;
    double negative_slope_fraction = 0.0;
    bool inconclusive = false;

    bool moment_grows() const { return moment_slope > 0.0; }
    /// Decay is declared when at least 95% of paths have a negative late slope.
    bool pathwise_decays() const { return pathwise_median_slope < 0.0 && negative_slope_fraction >= 0.95; }
    bool destabilized() const { return !inconclusive && moment_grows() && pathwise_decays(); }
};

/// Moment growth versus pathwise decay on the last half of the horizon.
///
/// log_abs[path][k] = log|X_{t_k}| on `times`. The plain Monte Carlo mean of |X_t|^p is
/// dominated by a handful of paths once Var(log|X_t|) is large, so the moment slope is read
/// off the log-normal fit, which is exact for the geometric solution; the plain estimate is
/// reported alongside.
inline StabilityReport stability_probe(const std::vector<double>& times, const std::vector<std::vector<double>>& log_abs,
                                       double p = 2.0) {
    StabilityReport rep;
    rep.p = p;
    if (times.empty() || log_abs.empty()) {
        rep.inconclusive = true;
        return rep;
    }
    const double horizon = times.back();
    std::vector<std::size_t> late;
    for (std::size_t k = 0; k < times.size(); ++k)
        if (times[k] >= 0.5 * horizon && times[k] > 0.0) late.push_back(k);
    if (late.size() < 3) {
        rep.inconclusive = true;
        return rep;
    }
    const std::size_t paths = log_abs.size();
    for (std::size_t k : late) {
        std::vector<double> z(paths), e(paths), r(paths);
        for (std::size_t i = 0; i < paths; ++i) {
            z[i] = log_abs[i][k];
            e[i] = std::exp(p * z[i]);
            r[i] = p * z[i] / times[k];
        }
        const double mu = pairwise_sum(z) / double(paths);
        std::vector<double> d(paths);
        for (std::size_t i = 0; i < paths; ++i) d[i] = (z[i] - mu) * (z[i] - mu);
        const double var = paths > 1 ? pairwise_sum(d) / double(paths - 1) : 0.0;
        rep.times.push_back(times[k]);
        rep.log_moment_fit.push_back(p * mu + 0.5 * p * p * var);
        rep.log_moment_mc.push_back(std::log(pairwise_sum(e) / double(paths)));
        rep.q05.push_back(quantile(r, 0.05));
        rep.q50.push_back(quantile(r, 0.5));
        rep.q95.push_back(quantile(r, 0.95));
    }
    rep.moment_slope = ols_slope(rep.times, rep.log_moment_fit);
    rep.moment_slope_mc = ols_slope(rep.times, rep.log_moment_mc);
    std::vector<double> slopes(paths);
    std::vector<double> y(late.size());
    std::size_t negative = 0;
    for (std::size_t i = 0; i < paths; ++i) {
        for (std::size_t j = 0; j < late.size(); ++j) y[j] = p * log_abs[i][late[j]];
        slopes[i] = ols_slope(rep.times, y);
        if (slopes[i] < 0.0) ++negative;
    }
    rep.pathwise_median_slope = quantile(slopes, 0.5);
    rep.negative_slope_fraction = double(negative) / double(paths);
    if (!std::isfinite(rep.moment_slope) || !std::isfinite(rep.pathwise_median_slope)) rep.inconclusive = true;
    return rep;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline void write_moment_csv(std::ostream& os, const MomentReport& rep) {
    CsvWriter w(os);
    w.header({"t", "p", "estimate", "se", "exact", "bound", "pass"});
    for (const auto& r : rep.rows) w.row(r.t, r.p, r.estimate, r.se, r.exact, r.bound, std::string(r.pass ? "1" : "0"));
}

inline void write_stability_csv(std::ostream& os, const StabilityReport& rep) {
    CsvWriter w(os);
    w.header({"t", "log_moment_fit", "log_moment_mc", "q05", "q50", "q95"});
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        w.row(rep.times[k], rep.log_moment_fit[k], rep.log_moment_mc[k], rep.q05[k], rep.q50[k], rep.q95[k]);
}

/// One line of a run summary.
struct SummaryLine {
    std::string name;
    bool pass = true;
    std::string detail;
};

/// Human-readable summary: config echo, seed and one PASS/FAIL line per check.
inline void write_summary(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& config,
                          std::uint64_t seed, const std::vector<SummaryLine>& lines) {
    os << "seed " << seed << '\n';
    for (const auto& [k, v] : config) os << "config " << k << " = " << v << '\n';
    for (const auto& l : lines) os << (l.pass ? "PASS " : "FAIL ") << l.name << (l.detail.empty() ? "" : ": ") << l.detail << '\n';
}

/// Writes <stem>.csv and <stem>.txt under `dir`; I/O failures surface as exceptions.
inline void emit_report(const std::filesystem::path& dir, const std::string& stem, const MomentReport& rep,
                        const std::vector<std::pair<std::string, std::string>>& config, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    auto csv = open_output((dir / (stem + ".csv")).string());
    write_moment_csv(csv, rep);
    std::vector<SummaryLine> lines;
    for (const auto& r : rep.rows)
        lines.push_back({"moment t=" + format_real(r.t) + " p=" + format_real(r.p), r.pass,
                         "estimate " + format_real(r.estimate) + " se " + format_real(r.se) + " bound " +
                             format_real(r.bound)});
    auto txt = open_output((dir / (stem + ".txt")).string());
    write_summary(txt, config, seed, lines);
}

} // namespace fracevol
