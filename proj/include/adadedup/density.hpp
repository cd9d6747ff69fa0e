#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "adadedup/error.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

namespace detail {

// Candidate ids projected into scan order.
inline IndexSet project_order(const IndexSet& candidates, const DedupOrder& order,
                              std::uint32_t n) {
    std::vector<std::uint8_t> member(n, 0);
    for (auto c : candidates) member[c] = 1;
    IndexSet out;
    out.reserve(candidates.size());
    for (auto p : order.perm)
        if (p < n && member[p]) out.push_back(p);
    return out;
}

// Squared distance from each candidate to its nearest earlier candidate in
// scan order (infinity for the first). A candidate survives threshold tau
// exactly when this value exceeds tau^2, which makes the kept count a
// provably non-increasing step function of tau: each sample has one fixed
// death threshold.
inline std::vector<double> earlier_neighbor_sq(const EmbeddingMatrix& m,
                                               const IndexSet& ordered) {
    std::vector<double> theta(ordered.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 1; i < ordered.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            theta[i] = std::min(theta[i], squared_distance(m, ordered[i], ordered[j]));
    return theta;
}

inline IndexSet filter_by_threshold(const IndexSet& ordered, const std::vector<double>& theta,
                                    double tau2) {
    IndexSet kept;
    for (std::size_t i = 0; i < ordered.size(); ++i)
        if (theta[i] > tau2) kept.push_back(ordered[i]);
    std::sort(kept.begin(), kept.end());
    return kept;
}

// First-occurrence de-duplication in squared-distance space: a candidate is
// kept iff its squared distance to every earlier candidate exceeds tau2.
inline IndexSet greedy_dedup_sq(const EmbeddingMatrix& m, const IndexSet& ordered,
                                double tau2) {
    return filter_by_threshold(ordered, earlier_neighbor_sq(m, ordered), tau2);
}

// Sorted distinct positive squared pairwise distances among candidates.
inline std::vector<double> squared_breakpoints(const EmbeddingMatrix& m,
                                               const IndexSet& candidates) {
    std::vector<double> b2;
    b2.reserve(candidates.size() * (candidates.size() - 1) / 2);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (std::size_t j = i + 1; j < candidates.size(); ++j) {
            const double d2 = squared_distance(m, candidates[i], candidates[j]);
            if (d2 > 0.0) b2.push_back(d2);
        }
    std::sort(b2.begin(), b2.end());
    b2.erase(std::unique(b2.begin(), b2.end()), b2.end());
    return b2;
}

}  // namespace detail

constexpr std::uint32_t kExactCurveLimit = 2000;

// Scanning candidates in order, a sample is kept iff its distance to every
// earlier candidate is strictly greater than tau; the first occurrence of a
// duplicate group survives.
inline IndexSet greedy_dedup(const EmbeddingMatrix& m, const IndexSet& candidates, double tau,
                             const DedupOrder& order) {
    if (tau < 0.0)
        throw PreconditionError(ErrorCode::NegativeThreshold, "tau=" + std::to_string(tau));
    return detail::greedy_dedup_sq(m, detail::project_order(candidates, order, m.n), tau * tau);
}

struct CurvePoint {
    double tau;           // distance units; the step value holds on [tau, next)
    double tau2;          // exact squared breakpoint used in evaluation
    std::uint32_t kept;
};

// Exact kept-count step function: one evaluation at tau = 0 plus one per
// distinct pairwise distance.
inline std::vector<CurvePoint> kept_count_curve(const EmbeddingMatrix& m,
                                                const IndexSet& candidates,
                                                const DedupOrder& order,
                                                std::uint32_t limit = kExactCurveLimit) {
    if (candidates.size() > limit)
        throw PreconditionError(ErrorCode::TooLargeForExactCurve,
                                std::to_string(candidates.size()) + " candidates, limit " +
                                    std::to_string(limit));
    const IndexSet ordered = detail::project_order(candidates, order, m.n);
    const auto breakpoints = detail::squared_breakpoints(m, candidates);

    // kept(tau) counts samples whose earlier-neighbor threshold exceeds tau.
    std::vector<double> theta = detail::earlier_neighbor_sq(m, ordered);
    std::sort(theta.begin(), theta.end());
    const auto count_at = [&](double tau2) {
        return static_cast<std::uint32_t>(
            theta.end() - std::upper_bound(theta.begin(), theta.end(), tau2));
    };

    std::vector<CurvePoint> curve;
    curve.reserve(breakpoints.size() + 1);
    curve.push_back({0.0, 0.0, count_at(0.0)});
    for (double b2 : breakpoints) curve.push_back({std::sqrt(b2), b2, count_at(b2)});
    return curve;
}

// Removes the kept sample with the smallest nearest-kept-neighbor distance
// (ties: larger sample index) until the target size is reached. Neighbor
// distances are maintained incrementally; only entries whose recorded
// neighbor was removed get rescanned, which cannot change any minimum.
inline IndexSet trim_to_budget(const EmbeddingMatrix& m, IndexSet kept, std::uint32_t target) {
    if (kept.size() < target)
        throw PreconditionError(ErrorCode::BudgetOutOfRange,
                                "kept " + std::to_string(kept.size()) + " < target " +
                                    std::to_string(target));
    if (kept.size() == target) return kept;
    if (target == 0) return {};

    std::vector<SampleIndex> alive(kept.begin(), kept.end());  // stays sorted
    std::vector<double> nn_d2(alive.size());
    std::vector<SampleIndex> nn_id(alive.size());
    const auto scan_nn = [&](std::size_t at) {
        double best = std::numeric_limits<double>::infinity();
        SampleIndex best_id = alive[at];
        for (std::size_t j = 0; j < alive.size(); ++j) {
            if (j == at) continue;
            const double v = squared_distance(m, alive[at], alive[j]);
            if (v < best) {
                best = v;
                best_id = alive[j];
            }
        }
        nn_d2[at] = best;
        nn_id[at] = best_id;
    };
    for (std::size_t i = 0; i < alive.size(); ++i) scan_nn(i);

    while (alive.size() > target) {
        std::size_t victim = 0;
        for (std::size_t i = 1; i < alive.size(); ++i) {
            if (nn_d2[i] < nn_d2[victim] ||
                (nn_d2[i] == nn_d2[victim] && alive[i] > alive[victim]))
                victim = i;
        }
        const SampleIndex victim_id = alive[victim];
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(victim));
        nn_d2.erase(nn_d2.begin() + static_cast<std::ptrdiff_t>(victim));
        nn_id.erase(nn_id.begin() + static_cast<std::ptrdiff_t>(victim));
        // Only entries whose recorded neighbor vanished can change.
        for (std::size_t i = 0; i < alive.size(); ++i)
            if (nn_id[i] == victim_id) scan_nn(i);
    }
    return alive;
}

struct ThresholdSearchResult {
    double tau = 0.0;  // snapped breakpoint, distance units
    IndexSet kept;     // exactly target_keep samples
};

namespace detail {

// Grows an undershooting kept set back to the target with pruned
// candidates in ascending index order. Only reachable when exact
// duplicates leave fewer distinct points than the budget.
inline IndexSet pad_to_target(const IndexSet& candidates, IndexSet kept, std::uint32_t target) {
    std::vector<std::uint8_t> in_kept;
    SampleIndex max_id = 0;
    for (auto c : candidates) max_id = std::max(max_id, c);
    in_kept.assign(max_id + 1, 0);
    for (auto k : kept) in_kept[k] = 1;
    for (auto c : candidates) {
        if (kept.size() >= target) break;
        if (!in_kept[c]) {
            kept.push_back(c);
            in_kept[c] = 1;
        }
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

// Shared search skeleton: find the largest squared breakpoint whose kept
// count still meets the target, then trim the overshoot away. `eval` must
// return the kept set at a given tau2.
template <typename EvalFn>
ThresholdSearchResult threshold_search(const EmbeddingMatrix& m, const IndexSet& candidates,
                                       std::uint32_t target, EvalFn&& eval,
                                       const std::vector<double>& breakpoints) {
    IndexSet kept0 = eval(0.0);
    if (kept0.size() <= target) {
        IndexSet kept = kept0.size() == target ? std::move(kept0)
                                               : pad_to_target(candidates, std::move(kept0), target);
        return {0.0, std::move(kept)};
    }
    // kept(0) > target: bisect the breakpoint ladder for the largest tau2
    // whose count is still >= target.
    std::ptrdiff_t lo = -1;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(breakpoints.size());
    while (hi - lo > 1) {
        const std::ptrdiff_t mid = lo + (hi - lo) / 2;
        const IndexSet at_mid = eval(breakpoints[static_cast<std::size_t>(mid)]);
        if (at_mid.size() >= target)
            lo = mid;
        else
            hi = mid;
    }
    const double tau2 = lo < 0 ? 0.0 : breakpoints[static_cast<std::size_t>(lo)];
    IndexSet kept = lo < 0 ? std::move(kept0) : eval(tau2);
    kept = trim_to_budget(m, std::move(kept), target);
    return {std::sqrt(tau2), std::move(kept)};
}

}  // namespace detail

// Largest threshold still meeting the budget, then an exact trim, so the
// returned set has exactly target_keep members. Above ladder_limit
// candidates the breakpoint ladder is not materialized; a numeric
// bisection with a final snap to the nearest realized distance gives the
// same selection.
inline ThresholdSearchResult find_threshold_for_budget(const EmbeddingMatrix& m,
                                                       const IndexSet& candidates,
                                                       std::uint32_t target,
                                                       const DedupOrder& order,
                                                       std::uint32_t ladder_limit = kExactCurveLimit) {
    if (target < 1 || target > candidates.size())
        throw PreconditionError(ErrorCode::BudgetOutOfRange,
                                "target " + std::to_string(target) + " with " +
                                    std::to_string(candidates.size()) + " candidates");
    const IndexSet ordered = detail::project_order(candidates, order, m.n);
    const auto theta = detail::earlier_neighbor_sq(m, ordered);
    const auto eval = [&](double tau2) { return detail::filter_by_threshold(ordered, theta, tau2); };

    if (candidates.size() <= ladder_limit) {
        const auto breakpoints = detail::squared_breakpoints(m, candidates);
        return detail::threshold_search(m, candidates, target, eval, breakpoints);
    }

    // Too many pairs to materialize: bisect tau2 numerically, then snap to
    // the largest realized pairwise distance inside the bracket.
    IndexSet kept0 = eval(0.0);
    if (kept0.size() <= target) {
        IndexSet kept = kept0.size() == target ? std::move(kept0)
                                               : detail::pad_to_target(candidates, std::move(kept0), target);
        return {0.0, std::move(kept)};
    }
    double hi2 = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (std::size_t j = i + 1; j < candidates.size(); ++j)
            hi2 = std::max(hi2, squared_distance(m, candidates[i], candidates[j]));
    if (eval(hi2).size() >= target) {
        IndexSet kept = trim_to_budget(m, eval(hi2), target);
        return {std::sqrt(hi2), std::move(kept)};
    }
    double lo2 = 0.0;
    for (int iter = 0; iter < 200 && lo2 < hi2; ++iter) {
        const double mid = lo2 + (hi2 - lo2) / 2.0;
        if (mid <= lo2 || mid >= hi2) break;
        if (eval(mid).size() >= target)
            lo2 = mid;
        else
            hi2 = mid;
    }
    double snapped = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (std::size_t j = i + 1; j < candidates.size(); ++j) {
            const double d2 = squared_distance(m, candidates[i], candidates[j]);
            if (d2 <= lo2) snapped = std::max(snapped, d2);
        }
    IndexSet kept = trim_to_budget(m, eval(snapped), target);
    return {std::sqrt(snapped), std::move(kept)};
}

// Density pruning restricted to one cluster's members.
inline IndexSet select_k_from_cluster(const EmbeddingMatrix& m, const IndexSet& members,
                                      std::uint32_t k, const DedupOrder& order) {
    if (k > members.size())
        throw PreconditionError(ErrorCode::BudgetOutOfRange,
                                "k " + std::to_string(k) + " exceeds cluster size " +
                                    std::to_string(members.size()));
    if (k == 0) return {};
    if (k == members.size()) return members;
    return find_threshold_for_budget(m, members, k, order).kept;
}

// One shared threshold applied independently inside every cluster, with a
// global trim to land exactly on the budget.
inline ThresholdSearchResult cluster_uniform_select(const EmbeddingMatrix& m,
                                                    const ClusterAssignment& assignment,
                                                    std::uint32_t target,
                                                    const DedupOrder& order) {
    const std::uint32_t n = assignment.n();
    if (n != m.n)
        throw PreconditionError(ErrorCode::DimensionMismatch,
                                "assignment covers " + std::to_string(n) + " samples, data has " +
                                    std::to_string(m.n));
    if (target < 1 || target > n)
        throw PreconditionError(ErrorCode::BudgetOutOfRange, "target " + std::to_string(target));

    const auto members = assignment.members();
    std::vector<IndexSet> ordered(members.size());
    std::vector<std::vector<double>> theta(members.size());
    for (std::size_t c = 0; c < members.size(); ++c) {
        ordered[c] = detail::project_order(members[c], order, n);
        theta[c] = detail::earlier_neighbor_sq(m, ordered[c]);
    }

    IndexSet all(n);
    for (SampleIndex i = 0; i < n; ++i) all[i] = i;

    const auto eval = [&](double tau2) {
        IndexSet kept;
        for (std::size_t c = 0; c < ordered.size(); ++c) {
            IndexSet part = detail::filter_by_threshold(ordered[c], theta[c], tau2);
            kept.insert(kept.end(), part.begin(), part.end());
        }
        std::sort(kept.begin(), kept.end());
        return kept;
    };

    // Breakpoints are within-cluster pairwise distances only.
    std::vector<double> breakpoints;
    for (const auto& cluster : members)
        for (std::size_t i = 0; i < cluster.size(); ++i)
            for (std::size_t j = i + 1; j < cluster.size(); ++j) {
                const double d2 = squared_distance(m, cluster[i], cluster[j]);
                if (d2 > 0.0) breakpoints.push_back(d2);
            }
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

    return detail::threshold_search(m, all, target, eval, breakpoints);
}

enum class InitialMode { global, cluster_uniform };

inline const char* initial_mode_name(InitialMode m) {
    return m == InitialMode::global ? "global" : "cluster-uniform";
}

// Stage 1: budget-targeted de-duplication plus per-cluster ratio bookkeeping.
inline PruneState initial_prune(const EmbeddingMatrix& m, const ClusterAssignment& assignment,
                                std::uint32_t budget_m, const DedupOrder& order,
                                InitialMode mode = InitialMode::global) {
    if (assignment.n() != m.n)
        throw PreconditionError(ErrorCode::DimensionMismatch,
                                "assignment covers " + std::to_string(assignment.n()) +
                                    " samples, data has " + std::to_string(m.n));
    if (budget_m < 1 || budget_m > m.n)
        throw PreconditionError(ErrorCode::BudgetOutOfRange, "m=" + std::to_string(budget_m));
    IndexSet kept;
    if (mode == InitialMode::global) {
        IndexSet all(m.n);
        for (SampleIndex i = 0; i < m.n; ++i) all[i] = i;
        kept = find_threshold_for_budget(m, all, budget_m, order).kept;
    } else {
        kept = cluster_uniform_select(m, assignment, budget_m, order).kept;
    }
    return make_prune_state(kept, assignment, Stage::initial);
}

}  // namespace adadedup
