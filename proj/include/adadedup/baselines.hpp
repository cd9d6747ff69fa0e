#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "adadedup/density.hpp"
#include "adadedup/error.hpp"
#include "adadedup/rng.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

// Uniform m-subset without replacement; partial Fisher-Yates on the
// "random-baseline" stream.
inline IndexSet random_select(std::uint32_t n, std::uint32_t m, std::uint64_t seed) {
    if (m < 1 || m > n)
        throw PreconditionError(ErrorCode::BudgetOutOfRange,
                                "m=" + std::to_string(m) + " with n=" + std::to_string(n));
    std::vector<SampleIndex> pool(n);
    for (SampleIndex i = 0; i < n; ++i) pool[i] = i;
    Rng rng(seed, "random-baseline");
    for (std::uint32_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::uint32_t>(rng.uniform_index(n - i));
        std::swap(pool[i], pool[j]);
    }
    IndexSet kept(pool.begin(), pool.begin() + m);
    std::sort(kept.begin(), kept.end());
    return kept;
}

// One global threshold over all samples. Identical to stage-1 global
// pruning without the per-cluster bookkeeping.
inline IndexSet global_dedup_select(const EmbeddingMatrix& m, std::uint32_t budget,
                                    const DedupOrder& order) {
    if (budget < 1 || budget > m.n)
        throw PreconditionError(ErrorCode::BudgetOutOfRange, "m=" + std::to_string(budget));
    IndexSet all(m.n);
    for (SampleIndex i = 0; i < m.n; ++i) all[i] = i;
    return find_threshold_for_budget(m, all, budget, order).kept;
}

// One uniform threshold shared across clusters, applied within each
// cluster independently, then a global trim to the exact budget.
inline IndexSet cluster_uniform_dedup_select(const EmbeddingMatrix& m,
                                             const ClusterAssignment& assignment,
                                             std::uint32_t budget, const DedupOrder& order) {
    return cluster_uniform_select(m, assignment, budget, order).kept;
}

enum class Selector { adadedup, random, global_dedup, sse_uniform };

inline const char* selector_name(Selector s) {
    switch (s) {
        case Selector::adadedup: return "adadedup";
        case Selector::random: return "random";
        case Selector::global_dedup: return "global-dedup";
        case Selector::sse_uniform: return "sse-uniform";
    }
    return "unknown";
}

}  // namespace adadedup
