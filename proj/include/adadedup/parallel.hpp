#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace adadedup {

// Process-wide worker count for parallel loops. 0 means auto.
inline std::uint32_t& thread_count() {
    static std::uint32_t count = 1;
    return count;
}

inline void set_thread_count(std::uint32_t count) {
    thread_count() = count == 0 ? std::max(1u, std::thread::hardware_concurrency()) : count;
}

// Parallel loop over [begin, end). Each index is handled exactly once and
// workers only write to disjoint output slots, so results are identical
// for every thread count. Reductions stay with the caller, in index order.
template <typename Fn>
void parallel_for(std::uint32_t begin, std::uint32_t end, Fn&& fn) {
    const std::uint32_t total = end > begin ? end - begin : 0;
    const std::uint32_t workers = std::min(thread_count(), std::max(1u, total));
    if (workers <= 1 || total < 512) {
        for (std::uint32_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::uint32_t chunk = (total + workers - 1) / workers;
    for (std::uint32_t w = 0; w < workers; ++w) {
        const std::uint32_t lo = begin + w * chunk;
        const std::uint32_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::uint32_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace adadedup
