#pragma once

#include "mvfbsde/path_batch.hpp"

#include <functional>
#include <span>

namespace mvfbsde {

/// Drift callback: fills `out` (state dim) from the running state of one path
/// at grid node j.
using DriftFn =
    std::function<void(std::size_t j, std::size_t path, std::span<const double> x,
                       std::span<double> out)>;

/// Diffusion callback: fills `out` (state dim × noise dim, row-major).
using DiffusionFn =
    std::function<void(std::size_t j, std::size_t path, std::span<const double> x,
                       std::span<double> out)>;

/// Euler-Maruyama step over the grid carried by `noise`:
///   X_{j+1} = X_j + a(t_j, X_j) dt + b(t_j, X_j) ΔW_j + b0(t_j, X_j) ΔW0_j.
/// `x0` holds paths·dim initial values. Throws SimulationError naming path
/// and step when a non-finite state appears.
PathBatch euler_maruyama(const TimeGrid& grid, std::span<const double> x0, std::size_t dim,
                         const DriftFn& drift, const DiffusionFn& diffusion,
                         const DiffusionFn& diffusion0, const NoisePair& noise,
                         const std::string& name = "X");

} // namespace mvfbsde
