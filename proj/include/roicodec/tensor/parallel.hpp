#pragma once

#include <cstddef>
#include <functional>

namespace roicodec {

// Worker thread cap. Read once from ROICODEC_THREADS; defaults to the
// hardware concurrency.
std::size_t max_threads();
void set_max_threads(std::size_t threads);

// Splits [0, count) into contiguous chunks. Each index is processed by exactly
// one thread and chunk boundaries never change a per-index computation, so
// results are identical for any thread count.
void parallel_for(std::size_t count, std::size_t min_chunk,
                  const std::function<void(std::size_t begin, std::size_t end)>& body);

}  // namespace roicodec
