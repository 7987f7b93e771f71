#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fracevol/grid.hpp"

namespace fracevol {

/// Non-owning view of one sampled trajectory.
struct PathView {
    const TimeGrid* grid = nullptr;
    std::span<const double> values;
    std::size_t id = 0;

    double operator[](std::size_t i) const { return values[i]; }
    /// B^H at a grid node; throws AlignmentError off-grid.
    double at(double t) const { return values[grid->index_of(t)]; }
};

/// Owning single path; values[0] = 0.
struct FbmPath {
    TimeGrid grid;
    std::vector<double> values;
    std::size_t id = 0;

    PathView view() const { return {&grid, values, id}; }
    operator PathView() const { return view(); }
};

/// How many paths to draw and from which master seed.
struct EnsembleSpec {
    std::size_t paths = 1000;
    std::uint64_t master_seed = 42;
    unsigned threads = 0;
};

/// Which sampler produced an ensemble and whether it had to fall back.
struct SamplerReport {
    std::string requested;
    std::string used;
    std::string fallback_reason;
    /// Smallest circulant eigenvalue relative to the largest (circulant sampler only).
    double min_relative_eigenvalue = 0.0;
};

/// Paths stored row-major (path, time) on a shared grid.
class PathEnsemble {
public:
    PathEnsemble() = default;
    PathEnsemble(TimeGrid grid, std::size_t paths, std::uint64_t master_seed)
        : grid_(std::move(grid)), paths_(paths), master_seed_(master_seed),
          values_(paths * grid_.size(), 0.0) {}

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return paths_; }
    std::uint64_t master_seed() const noexcept { return master_seed_; }

    PathView path(std::size_t i) const {
        return {&grid_, std::span<const double>(values_).subspan(i * grid_.size(), grid_.size()), i};
    }
    std::span<double> mutable_path(std::size_t i) {
        return std::span<double>(values_).subspan(i * grid_.size(), grid_.size());
    }
    std::span<const double> raw() const noexcept { return values_; }

    FbmPath copy_path(std::size_t i) const {
        const auto v = path(i).values;
        return {grid_, std::vector<double>(v.begin(), v.end()), i};
    }

    SamplerReport report;

private:
    TimeGrid grid_;
    std::size_t paths_ = 0;
    std::uint64_t master_seed_ = 0;
    std::vector<double> values_;
};

} // namespace fracevol
