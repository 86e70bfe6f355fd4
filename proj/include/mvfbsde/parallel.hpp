#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace mvfbsde {

/// Global worker count for path-parallel loops. Every parallel loop in the
/// project assigns each index a result that does not depend on the
/// partitioning, so output is bit-identical for any worker count.
std::size_t worker_count();
void set_worker_count(std::size_t n);

/// Runs fn(i) for i in [0, n). fn must write only to locations owned by
/// index i (no shared accumulation).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Runs fn(begin, end) over disjoint ranges covering [0, n).
void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace mvfbsde
