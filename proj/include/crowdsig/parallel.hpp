#pragma once

#include <cstddef>
#include <functional>

namespace crowdsig {

/// Worker count from CROWDSIG_THREADS (0 or unset = hardware concurrency).
unsigned default_threads();

/// Runs body(i) for i in [0, count) split into contiguous chunks over up to
/// `threads` workers (0 = default_threads()). Callers must write results into
/// per-index slots; reductions happen afterwards in index order so output does
/// not depend on the thread count.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace crowdsig
