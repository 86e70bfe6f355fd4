#include "mvfbsde/path_batch.hpp"

#include "mvfbsde/parallel.hpp"
#include "mvfbsde/rng.hpp"

#include <cmath>

namespace mvfbsde {

bool PathBatch::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

NoisePair sample_noise(const TimeGrid& grid, std::size_t paths, std::size_t dim,
                       std::uint64_t seed) {
    if (paths < 1) throw ConfigError("sample_noise: need at least one path");
    NoisePair np{PathBatch("W", paths, grid, dim), PathBatch("W0", paths, grid, dim), grid, seed};
    const double sqrt_dt = std::sqrt(grid.dt());
    const std::size_t nodes = grid.nodes();
    parallel_for(paths, [&](std::size_t i) {
        Rng rng(mix_seed(seed, i));
        for (std::size_t c = 0; c < dim; ++c) np.w.at(i, 0, c) = 0.0;
        for (std::size_t j = 1; j < nodes; ++j)
            for (std::size_t c = 0; c < dim; ++c)
                np.w.at(i, j, c) = np.w.at(i, j - 1, c) + sqrt_dt * rng.normal();
        for (std::size_t c = 0; c < dim; ++c) np.w0.at(i, 0, c) = 0.0;
        for (std::size_t j = 1; j < nodes; ++j)
            for (std::size_t c = 0; c < dim; ++c)
                np.w0.at(i, j, c) = np.w0.at(i, j - 1, c) + sqrt_dt * rng.normal();
    });
    return np;
}

double l2_path_distance(const PathBatch& a, const PathBatch& b) {
    if (!a.same_shape(b)) throw ConfigError("l2_path_distance: shape mismatch");
    const auto av = a.flat();
    const auto bv = b.flat();
    double acc = 0.0;
    const std::size_t dim = a.dim();
    for (std::size_t e = 0; e < av.size(); e += dim) {
        double sq = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double d = av[e + c] - bv[e + c];
            sq += d * d;
        }
        acc += sq;
    }
    return acc / static_cast<double>(a.paths() * a.nodes());
}

} // namespace mvfbsde
