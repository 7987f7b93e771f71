#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fracevol/parallel.hpp"

namespace fracevol {

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean with the delete-one jackknife standard error.
///
/// For the mean the leave-one-out replicates are (S - x_i)/(n - 1), so the jackknife
/// variance is computed in O(n) without materialising them.
inline MeanEstimate jackknife_mean(std::span<const double> xs) {
    MeanEstimate out;
    out.count = xs.size();
    if (xs.empty()) return out;
    const double n = double(xs.size());
    const double total = pairwise_sum(xs);
    out.mean = total / n;
    if (xs.size() < 2) return out;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double replicate = (total - xs[i]) / (n - 1.0);
        const double d = replicate - out.mean;
        sq[i] = d * d;
    }
    out.std_error = std::sqrt((n - 1.0) / n * pairwise_sum(sq));
    return out;
}

/// Ordinary least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

/// Quantile by linear interpolation between order statistics (q in [0,1]).
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) return std::nan("");
    std::sort(xs.begin(), xs.end());
    const double pos = q * double(xs.size() - 1);
    const std::size_t lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - double(lo)) * (xs[hi] - xs[lo]);
}

/// Convergence order fitted as the least-squares slope of -log2(error) against log2(resolution).
inline double observed_order(std::span<const double> resolution, std::span<const double> error) {
    std::vector<double> lx(resolution.size()), ly(error.size());
    for (std::size_t i = 0; i < resolution.size(); ++i) {
        lx[i] = std::log2(resolution[i]);
        ly[i] = -std::log2(std::abs(error[i]));
    }
    return ols_slope(lx, ly);
}

} // namespace fracevol
