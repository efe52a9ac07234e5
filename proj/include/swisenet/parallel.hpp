#pragma once

#include <cstdint>
#include <functional>

namespace swisenet {

// Worker count used by parallel_for. 0 selects hardware concurrency; 1 is the
// strict single-threaded mode.
void set_num_threads(int threads);
int num_threads();

// Splits [begin, end) into contiguous chunks and runs fn(chunk_begin,
// chunk_end) on each. Callers only partition independent output ranges, so
// results do not depend on the thread count.
void parallel_for(std::int64_t begin, std::int64_t end, std::int64_t min_chunk,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace swisenet
