#pragma once

#include "mvfbsde/errors.hpp"

#include <cstddef>

namespace mvfbsde {

/// Uniform discretization of [0, T] with N steps: nodes t_j = j·T/N for
/// j = 0..N. Only uniform grids are supported.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        if (!(horizon > 0.0)) throw ConfigError("TimeGrid: horizon must be positive");
        if (steps < 1) throw ConfigError("TimeGrid: need at least one step");
    }

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    std::size_t nodes() const { return steps_ + 1; }
    double dt() const { return horizon_ / static_cast<double>(steps_); }
    double node(std::size_t j) const { return static_cast<double>(j) * dt(); }

    bool operator==(const TimeGrid& o) const {
        return horizon_ == o.horizon_ && steps_ == o.steps_;
    }

private:
    double horizon_ = 1.0;
    std::size_t steps_ = 1;
};

} // namespace mvfbsde
