#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mftg {

// Uniform partition of [0, T] into M steps, t_k = k * dt.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps)
        : horizon_(horizon), steps_(steps) {
        if (!(horizon > 0.0))
            throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (steps < 1)
            throw std::invalid_argument("TimeGrid: need at least one step");
        dt_ = horizon_ / static_cast<double>(steps_);
    }

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    std::size_t points() const { return steps_ + 1; }
    double dt() const { return dt_; }

    double time(std::size_t k) const {
        // t_M is pinned to T so the terminal point is exact.
        return k == steps_ ? horizon_ : static_cast<double>(k) * dt_;
    }

    std::vector<double> times() const {
        std::vector<double> t(points());
        for (std::size_t k = 0; k < points(); ++k) t[k] = time(k);
        return t;
    }

private:
    double horizon_;
    std::size_t steps_;
    double dt_;
};

inline TimeGrid make_grid(double horizon, std::size_t steps) {
    return TimeGrid(horizon, steps);
}

} // namespace mftg
