#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mftg/grid.hpp"
#include "mftg/reduce.hpp"
#include "mftg/rng.hpp"

namespace mftg {

// Dense (time point, path, component) array backing all per-path series.
class PathArray {
public:
    PathArray() = default;
    PathArray(std::size_t points, std::size_t paths, std::size_t dim)
        : points_(points), paths_(paths), dim_(dim),
          data_(points * paths * dim, 0.0) {}

    std::size_t points() const { return points_; }
    std::size_t paths() const { return paths_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t k, std::size_t n, std::size_t j) {
        return data_[(k * paths_ + n) * dim_ + j];
    }
    double at(std::size_t k, std::size_t n, std::size_t j) const {
        return data_[(k * paths_ + n) * dim_ + j];
    }

    // Pointer to the dim-vector of path n at time index k.
    double* row(std::size_t k, std::size_t n) {
        return data_.data() + (k * paths_ + n) * dim_;
    }
    const double* row(std::size_t k, std::size_t n) const {
        return data_.data() + (k * paths_ + n) * dim_;
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    std::size_t points_ = 0, paths_ = 0, dim_ = 0;
    std::vector<double> data_;
};

// Split-noise Brownian increments and levels for N paths on a TimeGrid.
// Increment (path n, step k, component j) is a pure function of
// (master_seed, n, k, j), so generation is order independent.
class BrownianBundle {
public:
    BrownianBundle(const TimeGrid& grid, std::size_t paths,
                   std::size_t dim_x, std::size_t dim_y,
                   std::uint64_t master_seed)
        : grid_(grid), paths_(paths), dim_x_(dim_x), dim_y_(dim_y),
          seed_(master_seed),
          inc_x_(grid.steps(), paths, dim_x),
          inc_y_(grid.steps(), paths, dim_y),
          lvl_x_(grid.points(), paths, dim_x),
          lvl_y_(grid.points(), paths, dim_y) {
        if (paths < 1)
            throw std::invalid_argument("BrownianBundle: need at least one path");
        const double sd = std::sqrt(grid.dt());
        parallel_for(paths, [&](std::size_t n) {
            for (std::size_t k = 0; k < grid_.steps(); ++k) {
                const std::uint64_t ctr = k;
                for (std::size_t j = 0; j < dim_x_; ++j) {
                    const double z = rng::normal(seed_, rng::kBrownianX, n,
                                                 ctr * dim_x_ + j);
                    inc_x_.at(k, n, j) = sd * z;
                    lvl_x_.at(k + 1, n, j) = lvl_x_.at(k, n, j) + sd * z;
                }
                for (std::size_t j = 0; j < dim_y_; ++j) {
                    const double z = rng::normal(seed_, rng::kBrownianY, n,
                                                 ctr * dim_y_ + j);
                    inc_y_.at(k, n, j) = sd * z;
                    lvl_y_.at(k + 1, n, j) = lvl_y_.at(k, n, j) + sd * z;
                }
            }
        });
    }

    const TimeGrid& grid() const { return grid_; }
    std::size_t paths() const { return paths_; }
    std::size_t dim_x() const { return dim_x_; }
    std::size_t dim_y() const { return dim_y_; }
    std::size_t dim_total() const { return dim_x_ + dim_y_; }
    std::uint64_t seed() const { return seed_; }

    // Increment over step k (k in [0, M)).
    const PathArray& increments_x() const { return inc_x_; }
    const PathArray& increments_y() const { return inc_y_; }
    // Level at time point k (k in [0, M]).
    const PathArray& levels_x() const { return lvl_x_; }
    const PathArray& levels_y() const { return lvl_y_; }

private:
    TimeGrid grid_;
    std::size_t paths_, dim_x_, dim_y_;
    std::uint64_t seed_;
    PathArray inc_x_, inc_y_, lvl_x_, lvl_y_;
};

inline BrownianBundle sample_brownian(const TimeGrid& grid, std::size_t paths,
                                      std::size_t dim_x, std::size_t dim_y,
                                      std::uint64_t seed) {
    return BrownianBundle(grid, paths, dim_x, dim_y, seed);
}

} // namespace mftg
