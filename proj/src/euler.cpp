#include "mvfbsde/euler.hpp"

#include "mvfbsde/parallel.hpp"

#include <atomic>
#include <cmath>
#include <vector>

namespace mvfbsde {

PathBatch euler_maruyama(const TimeGrid& grid, std::span<const double> x0, std::size_t dim,
                         const DriftFn& drift, const DiffusionFn& diffusion,
                         const DiffusionFn& diffusion0, const NoisePair& noise,
                         const std::string& name) {
    if (!(noise.grid == grid)) throw ConfigError("euler_maruyama: noise grid mismatch");
    const std::size_t paths = noise.w.paths();
    const std::size_t ndim = noise.w.dim();
    if (x0.size() != paths * dim) throw ConfigError("euler_maruyama: x0 size mismatch");
    for (double v : x0)
        if (!std::isfinite(v)) throw SimulationError("euler_maruyama: non-finite initial state");

    PathBatch out(name, paths, grid, dim);
    const double dt = grid.dt();
    const std::size_t steps = grid.steps();

    // First failing (path, step) reported deterministically: keep the lowest.
    std::atomic<std::uint64_t> first_bad{~0ULL};

    parallel_for(paths, [&](std::size_t i) {
        std::vector<double> a(dim), b(dim * ndim), b0(dim * ndim);
        for (std::size_t c = 0; c < dim; ++c) out.at(i, 0, c) = x0[i * dim + c];
        for (std::size_t j = 0; j < steps; ++j) {
            const auto x = out.point(i, j);
            drift(j, i, x, a);
            diffusion(j, i, x, b);
            diffusion0(j, i, x, b0);
            bool ok = true;
            for (std::size_t c = 0; c < dim && ok; ++c) {
                double v = x[c] + a[c] * dt;
                for (std::size_t q = 0; q < ndim; ++q) {
                    const double dw = noise.w.at(i, j + 1, q) - noise.w.at(i, j, q);
                    const double dw0 = noise.w0.at(i, j + 1, q) - noise.w0.at(i, j, q);
                    v += b[c * ndim + q] * dw + b0[c * ndim + q] * dw0;
                }
                if (!std::isfinite(v)) ok = false;
                out.at(i, j + 1, c) = v;
            }
            if (!ok) {
                std::uint64_t key = (static_cast<std::uint64_t>(i) << 32) | (j + 1);
                std::uint64_t cur = first_bad.load();
                while (key < cur && !first_bad.compare_exchange_weak(cur, key)) {}
                return; // abandon this path; error raised after the join
            }
        }
    });

    const std::uint64_t bad = first_bad.load();
    if (bad != ~0ULL) {
        const std::size_t path = static_cast<std::size_t>(bad >> 32);
        const std::size_t step = static_cast<std::size_t>(bad & 0xffffffffULL);
        throw SimulationError("euler_maruyama: non-finite state on path " + std::to_string(path) +
                              " at step " + std::to_string(step));
    }
    return out;
}

} // namespace mvfbsde
