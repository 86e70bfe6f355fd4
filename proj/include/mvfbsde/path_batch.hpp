#pragma once

#include "mvfbsde/errors.hpp"
#include "mvfbsde/time_grid.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mvfbsde {

/// M sample paths of one named process on a shared grid. Values are indexed
/// (path, grid node, coordinate); scalar processes use dim = 1.
class PathBatch {
public:
    PathBatch() = default;
    PathBatch(std::string name, std::size_t paths, const TimeGrid& grid, std::size_t dim = 1)
        : name_(std::move(name)), paths_(paths), nodes_(grid.nodes()), dim_(dim),
          values_(paths * grid.nodes() * dim, 0.0) {
        if (paths == 0) throw ConfigError("PathBatch: need at least one path");
        if (dim == 0) throw ConfigError("PathBatch: dimension must be positive");
    }

    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }
    std::size_t paths() const { return paths_; }
    std::size_t nodes() const { return nodes_; }
    std::size_t dim() const { return dim_; }

    double& at(std::size_t path, std::size_t node, std::size_t coord = 0) {
        return values_[(path * nodes_ + node) * dim_ + coord];
    }
    double at(std::size_t path, std::size_t node, std::size_t coord = 0) const {
        return values_[(path * nodes_ + node) * dim_ + coord];
    }

    std::span<double> point(std::size_t path, std::size_t node) {
        return {values_.data() + (path * nodes_ + node) * dim_, dim_};
    }
    std::span<const double> point(std::size_t path, std::size_t node) const {
        return {values_.data() + (path * nodes_ + node) * dim_, dim_};
    }

    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }

    bool same_shape(const PathBatch& o) const {
        return paths_ == o.paths_ && nodes_ == o.nodes_ && dim_ == o.dim_;
    }

    bool all_finite() const;

    friend bool operator==(const PathBatch& a, const PathBatch& b) {
        return a.paths_ == b.paths_ && a.nodes_ == b.nodes_ && a.dim_ == b.dim_ &&
               a.values_ == b.values_;
    }

private:
    std::string name_;
    std::size_t paths_ = 0, nodes_ = 0, dim_ = 1;
    std::vector<double> values_;
};

/// Idiosyncratic and common Brownian paths on a shared grid, plus the seed
/// they were drawn from. Both start at zero; increments are independent with
/// variance dt per coordinate.
struct NoisePair {
    PathBatch w;  // idiosyncratic
    PathBatch w0; // common
    TimeGrid grid;
    std::uint64_t seed = 0;
};

/// Draws M paths of the two independent d-dimensional Brownian motions.
/// Per-path substreams derived from the seed make the result independent of
/// the worker count.
NoisePair sample_noise(const TimeGrid& grid, std::size_t paths, std::size_t dim,
                       std::uint64_t seed);

/// Mean over paths and grid nodes of the squared Euclidean distance between
/// two equally shaped batches.
double l2_path_distance(const PathBatch& a, const PathBatch& b);

} // namespace mvfbsde
