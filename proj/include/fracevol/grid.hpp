#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fracevol/error.hpp"

namespace fracevol {

/// Hurst index of the driving fractional Brownian motion.
///
/// Construction enforces 0 < H < 1 (enough for sampling). Operators that rely on the
/// H >= 1/2 regime call require_analysis().
class Hurst {
public:
    explicit Hurst(double value) : value_(value) {
        if (!(value > 0.0 && value < 1.0) || !std::isfinite(value))
            throw DomainError("hurst must lie in (0,1), got " + std::to_string(value));
    }

    double value() const noexcept { return value_; }
    operator double() const noexcept { return value_; }

    /// Throws unless 1/2 <= H < 1.
    const Hurst& require_analysis() const {
        if (value_ < 0.5)
            throw DomainError("hurst must satisfy 1/2 <= H < 1 here, got " + std::to_string(value_));
        return *this;
    }

    bool is_brownian() const noexcept { return value_ == 0.5; }

private:
    double value_;
};

/// Ascending time grid 0 = t_0 < t_1 < ... < t_n = T.
class TimeGrid {
public:
    TimeGrid() = default;

    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.empty() || points_.front() != 0.0)
            throw DomainError("time grid must start at 0");
        for (std::size_t i = 1; i < points_.size(); ++i)
            if (!(points_[i] > points_[i - 1]))
                throw DomainError("time grid must be strictly increasing (index " +
                                  std::to_string(i) + ")");
        if (points_.size() > 1) {
            const double h = points_[1] - points_[0];
            uniform_ = true;
            for (std::size_t i = 1; i + 1 < points_.size() && uniform_; ++i)
                uniform_ = std::abs((points_[i + 1] - points_[i]) - h) <= 1e-12 * std::max(1.0, h);
            step_ = uniform_ ? horizon() / double(points_.size() - 1) : 0.0;
        }
    }

    /// n equal steps on [0,T]; the last point is exactly T.
    static TimeGrid uniform(double horizon, std::size_t steps) {
        if (!(horizon > 0.0) || steps == 0)
            throw DomainError("uniform grid needs T > 0 and steps >= 1");
        std::vector<double> pts(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i) pts[i] = horizon * double(i) / double(steps);
        pts.back() = horizon;
        return TimeGrid(std::move(pts));
    }

    std::span<const double> points() const noexcept { return points_; }
    double operator[](std::size_t i) const { return points_[i]; }
    std::size_t size() const noexcept { return points_.size(); }
    std::size_t steps() const noexcept { return points_.empty() ? 0 : points_.size() - 1; }
    double horizon() const noexcept { return points_.empty() ? 0.0 : points_.back(); }
    bool is_uniform() const noexcept { return uniform_; }
    /// Step length; only meaningful for uniform grids.
    double step() const noexcept { return step_; }

    /// Index of a grid node equal to t (relative tolerance 1e-12), or throws AlignmentError.
    std::size_t index_of(double t) const {
        const double tol = 1e-12 * std::max(1.0, horizon());
        if (uniform_ && step_ > 0.0) {
            const double k = std::round(t / step_);
            if (k >= 0.0 && k < double(points_.size()) &&
                std::abs(points_[std::size_t(k)] - t) <= tol)
                return std::size_t(k);
        } else {
            for (std::size_t i = 0; i < points_.size(); ++i)
                if (std::abs(points_[i] - t) <= tol) return i;
        }
        throw AlignmentError("time " + std::to_string(t) + " is not a grid node");
    }

    /// Every stride-th point; stride must divide the number of steps.
    TimeGrid subsample(std::size_t stride) const {
        if (stride == 0 || steps() % stride != 0)
            throw DomainError("stride must divide the number of steps");
        std::vector<double> pts;
        pts.reserve(steps() / stride + 1);
        for (std::size_t i = 0; i < points_.size(); i += stride) pts.push_back(points_[i]);
        return TimeGrid(std::move(pts));
    }

    bool operator==(const TimeGrid& other) const { return points_ == other.points_; }

private:
    std::vector<double> points_;
    bool uniform_ = false;
    double step_ = 0.0;
};

} // namespace fracevol
