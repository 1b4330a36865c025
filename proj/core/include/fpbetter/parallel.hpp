#pragma once

#include <cstddef>
#include <functional>

namespace fpb {

/// Worker count for deterministic batch-parallel loops, read from the
/// FPBETTER_NUM_THREADS environment variable (default 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Work is partitioned statically; callers write
/// results into per-index slots and reduce them in index order afterwards,
/// so the outcome does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fpb
