#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "adadedup/density.hpp"
#include "adadedup/error.hpp"
#include "adadedup/io.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

struct ClusterLossSummary {
    std::uint32_t cluster = 0;
    std::uint32_t size = 0;
    std::uint32_t kept_count = 0;
    std::uint32_t pruned_count = 0;
    double kept_loss_sum = 0.0;
    double pruned_loss_sum = 0.0;
    double delta = 0.0;         // aggregated kept minus pruned (sum or mean mode)
    double scaled_delta = 0.0;  // after the alpha branch
};

// Aggregates per-sample losses over kept and pruned members of each
// cluster. A cluster with an empty side carries no comparison signal and
// gets delta 0; the report surfaces such clusters.
inline std::vector<ClusterLossSummary> differential_loss(const LossTable& losses,
                                                         const PruneState& state,
                                                         const ClusterAssignment& assignment,
                                                         SignalMode mode) {
    const std::uint32_t n = state.n();
    if (losses.loss.size() != n)
        throw PreconditionError(ErrorCode::MissingLoss,
                                "loss table covers " + std::to_string(losses.loss.size()) +
                                    " of " + std::to_string(n) + " samples");
    if (assignment.n() != n)
        throw PreconditionError(ErrorCode::DimensionMismatch,
                                "assignment covers " + std::to_string(assignment.n()) +
                                    " of " + std::to_string(n) + " samples");
    std::vector<ClusterLossSummary> out(assignment.k);
    for (std::uint32_t c = 0; c < assignment.k; ++c) out[c].cluster = c;
    for (SampleIndex i = 0; i < n; ++i) {
        auto& s = out[assignment.labels[i]];
        ++s.size;
        if (state.kept[i]) {
            ++s.kept_count;
            s.kept_loss_sum += losses.loss[i];
        } else {
            ++s.pruned_count;
            s.pruned_loss_sum += losses.loss[i];
        }
    }
    for (auto& s : out) {
        if (s.kept_count == 0 || s.pruned_count == 0) {
            s.delta = 0.0;
        } else if (mode == SignalMode::sum) {
            s.delta = s.kept_loss_sum - s.pruned_loss_sum;
        } else {
            s.delta = s.kept_loss_sum / s.kept_count - s.pruned_loss_sum / s.pruned_count;
        }
        s.scaled_delta = s.delta;
    }
    return out;
}

// Positive deltas scale by alpha_plus, negative by alpha_minus; zero stays.
inline void scale_signals(std::vector<ClusterLossSummary>& summaries, double alpha_plus,
                          double alpha_minus) {
    if (alpha_plus <= 0.0 || alpha_minus <= 0.0)
        throw PreconditionError(ErrorCode::NonPositiveScale, "alpha factors must be > 0");
    for (auto& s : summaries)
        s.scaled_delta = s.delta > 0.0 ? alpha_plus * s.delta
                                       : (s.delta < 0.0 ? alpha_minus * s.delta : 0.0);
}

// Two-step normalization: rescale to unit maximum magnitude, then center
// under cluster-size weights so the pre-clipping budget is preserved
// (sum_i |c_i| * a_i = 0). All-zero input yields all-zero adjustments.
inline std::vector<double> normalize_signals(const std::vector<ClusterLossSummary>& summaries,
                                             const std::vector<std::uint32_t>& cluster_sizes) {
    const std::size_t k = summaries.size();
    std::vector<double> adjustments(k, 0.0);
    double max_abs = 0.0;
    for (const auto& s : summaries) max_abs = std::max(max_abs, std::fabs(s.scaled_delta));
    if (max_abs == 0.0) return adjustments;

    double n = 0.0;
    for (auto size : cluster_sizes) n += static_cast<double>(size);
    double weighted_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        adjustments[c] = summaries[c].scaled_delta / max_abs;
        weighted_sum += static_cast<double>(cluster_sizes[c]) * adjustments[c];
    }
    const double weighted_mean = weighted_sum / n;
    for (auto& a : adjustments) a -= weighted_mean;
    return adjustments;
}

inline std::vector<double> adjust_ratios(const std::vector<double>& gamma,
                                         const std::vector<double>& adjustments, double beta) {
    if (beta < 0.0)
        throw PreconditionError(ErrorCode::NonPositiveScale, "beta must be >= 0");
    std::vector<double> out(gamma.size());
    for (std::size_t c = 0; c < gamma.size(); ++c)
        out[c] = std::clamp(gamma[c] + beta * adjustments[c], 0.0, 1.0);
    return out;
}

// Fractional keep targets with any clipping residual redistributed in
// proportion to each cluster's slack toward its bound, then
// largest-remainder rounding. Ties in remainders go to the lower cluster
// index. The result sums to m exactly.
inline std::vector<std::uint32_t> apportion_counts(const std::vector<double>& gamma_prime,
                                                   const std::vector<std::uint32_t>& cluster_sizes,
                                                   std::uint32_t m) {
    const std::size_t k = cluster_sizes.size();
    double n = 0.0;
    for (auto size : cluster_sizes) n += static_cast<double>(size);
    if (static_cast<double>(m) > n)
        throw PreconditionError(ErrorCode::InfeasibleBudget,
                                "m " + std::to_string(m) + " exceeds n");

    std::vector<double> target(k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        target[c] = static_cast<double>(cluster_sizes[c]) * (1.0 - gamma_prime[c]);
        total += target[c];
    }
    const double residual = static_cast<double>(m) - total;
    if (residual > 0.0) {
        double slack = 0.0;
        for (std::size_t c = 0; c < k; ++c) slack += static_cast<double>(cluster_sizes[c]) - target[c];
        if (slack > 0.0)
            for (std::size_t c = 0; c < k; ++c)
                target[c] += residual * (static_cast<double>(cluster_sizes[c]) - target[c]) / slack;
    } else if (residual < 0.0) {
        if (total > 0.0)
            for (std::size_t c = 0; c < k; ++c) target[c] += residual * target[c] / total;
    }
    for (std::size_t c = 0; c < k; ++c)
        target[c] = std::clamp(target[c], 0.0, static_cast<double>(cluster_sizes[c]));

    std::vector<std::uint32_t> counts(k);
    std::vector<double> remainder(k);
    std::uint64_t floor_sum = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double f = std::floor(target[c]);
        counts[c] = static_cast<std::uint32_t>(f);
        remainder[c] = target[c] - f;
        floor_sum += counts[c];
    }
    std::int64_t bonus = static_cast<std::int64_t>(m) - static_cast<std::int64_t>(floor_sum);

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        return a < b;
    });
    for (std::size_t idx : order) {
        if (bonus <= 0) break;
        if (counts[idx] < cluster_sizes[idx]) {
            ++counts[idx];
            --bonus;
        }
    }
    // Floating-point corner: absorb any leftover against the bounds.
    while (bonus > 0) {
        bool moved = false;
        for (std::size_t c = 0; c < k && bonus > 0; ++c)
            if (counts[c] < cluster_sizes[c]) {
                ++counts[c];
                --bonus;
                moved = true;
            }
        if (!moved) break;
    }
    while (bonus < 0) {
        bool moved = false;
        for (std::size_t c = k; c-- > 0 && bonus < 0;)
            if (counts[c] > 0) {
                --counts[c];
                ++bonus;
                moved = true;
            }
        if (!moved) break;
    }
    return counts;
}

// Largest beta at which every cluster with a nonzero adjustment sits at a
// clip bound; beyond it nothing moves.
inline double beta_saturation(const std::vector<double>& gamma,
                              const std::vector<double>& adjustments) {
    double beta_max = 0.0;
    for (std::size_t c = 0; c < gamma.size(); ++c) {
        if (adjustments[c] > 0.0)
            beta_max = std::max(beta_max, (1.0 - gamma[c]) / adjustments[c]);
        else if (adjustments[c] < 0.0)
            beta_max = std::max(beta_max, gamma[c] / -adjustments[c]);
    }
    return beta_max;
}

// Fraction of the budget whose per-cluster allocation changes at a given
// beta, relative to the beta = 0 allocation.
inline double churn_at_beta(double beta, const std::vector<double>& gamma,
                            const std::vector<double>& adjustments,
                            const std::vector<std::uint32_t>& cluster_sizes, std::uint32_t m,
                            const std::vector<std::uint32_t>& base_counts) {
    const auto counts = apportion_counts(adjust_ratios(gamma, adjustments, beta), cluster_sizes, m);
    std::uint64_t moved = 0;
    for (std::size_t c = 0; c < counts.size(); ++c)
        moved += static_cast<std::uint64_t>(
            std::llabs(static_cast<std::int64_t>(counts[c]) - static_cast<std::int64_t>(base_counts[c])));
    return static_cast<double>(moved) / (2.0 * static_cast<double>(m));
}

// Smallest beta whose churn reaches the target, or beta_max when the
// target is unreachable. A forward scan locates the first crossing so the
// answer is well defined even if churn is not perfectly monotone; the
// crossing is then sharpened by bisection inside one grid cell.
inline double solve_beta_for_churn(const std::vector<double>& gamma,
                                   const std::vector<double>& adjustments,
                                   const std::vector<std::uint32_t>& cluster_sizes, std::uint32_t m,
                                   double churn_target) {
    bool any = false;
    for (double a : adjustments)
        if (a != 0.0) any = true;
    if (!any) throw PreconditionError(ErrorCode::NoSignal, "all adjustments are zero");
    if (churn_target <= 0.0 || churn_target > 0.5)
        throw PreconditionError(ErrorCode::InvalidSpec, "churn_target must lie in (0, 0.5]");

    const auto base = apportion_counts(adjust_ratios(gamma, adjustments, 0.0), cluster_sizes, m);
    const double beta_max = beta_saturation(gamma, adjustments);
    if (beta_max <= 0.0) return 0.0;
    const auto churn = [&](double beta) {
        return churn_at_beta(beta, gamma, adjustments, cluster_sizes, m, base);
    };
    if (churn(beta_max) < churn_target) return beta_max;

    constexpr int kGrid = 4096;
    double lo = 0.0;
    double hi = beta_max;
    for (int g = 1; g <= kGrid; ++g) {
        const double b = beta_max * static_cast<double>(g) / kGrid;
        if (churn(b) >= churn_target) {
            hi = b;
            lo = beta_max * static_cast<double>(g - 1) / kGrid;
            break;
        }
    }
    for (int iter = 0; iter < 100 && hi - lo > 1e-12 * beta_max; ++iter) {
        const double mid = lo + (hi - lo) / 2.0;
        if (churn(mid) >= churn_target)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

struct AdjustedRatios {
    std::vector<double> gamma_prime;        // clipped ratios fed to apportionment
    std::vector<std::uint32_t> keep_counts;  // sums to m exactly
    double resolved_beta = 0.0;
    std::vector<double> adjustments;
    std::vector<ClusterLossSummary> summaries;
};

// Algorithm steps 7-18: signals -> scaling -> normalization -> beta ->
// adjusted ratios -> integer keep counts.
inline AdjustedRatios adapt(const PruneState& initial, const LossTable& losses,
                            const ClusterAssignment& assignment, const PruneConfig& config) {
    if (initial.stage != Stage::initial)
        throw PreconditionError(ErrorCode::InvalidSpec, "adapt requires the initial-stage state");
    const auto sizes = assignment.cluster_sizes();

    AdjustedRatios out;
    out.summaries = differential_loss(losses, initial, assignment, config.signal_mode);
    scale_signals(out.summaries, config.alpha_plus, config.alpha_minus);
    out.adjustments = normalize_signals(out.summaries, sizes);

    bool any_signal = false;
    for (double a : out.adjustments)
        if (a != 0.0) any_signal = true;

    if (config.beta) {
        out.resolved_beta = *config.beta;
    } else if (!any_signal) {
        // Nothing to adapt; churn targeting is undefined on a zero field.
        out.resolved_beta = 0.0;
    } else {
        out.resolved_beta = solve_beta_for_churn(initial.gamma, out.adjustments, sizes,
                                                 config.budget_m, config.effective_churn_target());
    }

    out.gamma_prime = adjust_ratios(initial.gamma, out.adjustments, out.resolved_beta);
    out.keep_counts = apportion_counts(out.gamma_prime, sizes, config.budget_m);
    return out;
}

// Final selection: clusters whose keep count is unchanged pass their
// initial members through untouched; adjusted clusters are re-pruned from
// all of their members at the new budget. Beta = 0 therefore reproduces
// the initial selection exactly.
inline PruneState final_selection(const EmbeddingMatrix& m, const PruneState& initial,
                                  const ClusterAssignment& assignment,
                                  const std::vector<std::uint32_t>& keep_counts,
                                  const DedupOrder& order) {
    const auto members = assignment.members();
    IndexSet kept;
    for (std::uint32_t c = 0; c < assignment.k; ++c) {
        std::uint32_t initial_kept = 0;
        for (auto i : members[c])
            if (initial.kept[i]) ++initial_kept;
        if (keep_counts[c] == initial_kept) {
            for (auto i : members[c])
                if (initial.kept[i]) kept.push_back(i);
        } else {
            const IndexSet part = select_k_from_cluster(m, members[c], keep_counts[c], order);
            kept.insert(kept.end(), part.begin(), part.end());
        }
    }
    std::sort(kept.begin(), kept.end());
    return make_prune_state(kept, assignment, Stage::final_);
}

// Adaptation report, one row per cluster. Empty loss sides print as empty
// fields. gamma1 is the exact post-apportionment ratio 1 - k1/size.
inline std::string serialize_adaptation_report(const std::vector<ClusterLossSummary>& summaries,
                                               const std::vector<double>& adjustments,
                                               const std::vector<double>& gamma0,
                                               const std::vector<std::uint32_t>& keep_counts) {
    std::string out =
        "cluster,size,kept0,pruned0,loss_kept,loss_pruned,delta,scaled,adjust,gamma0,gamma1,k0,k1\n";
    for (std::size_t c = 0; c < summaries.size(); ++c) {
        const auto& s = summaries[c];
        const double gamma1 =
            s.size == 0 ? 0.0
                        : 1.0 - static_cast<double>(keep_counts[c]) / static_cast<double>(s.size);
        out += std::to_string(s.cluster) + "," + std::to_string(s.size) + "," +
               std::to_string(s.kept_count) + "," + std::to_string(s.pruned_count) + ",";
        out += s.kept_count == 0 ? "" : format_double(s.kept_loss_sum);
        out += ",";
        out += s.pruned_count == 0 ? "" : format_double(s.pruned_loss_sum);
        out += "," + format_double(s.delta) + "," + format_double(s.scaled_delta) + "," +
               format_double(adjustments[c]) + "," + format_double(gamma0[c]) + "," +
               format_double(gamma1) + "," + std::to_string(s.kept_count) + "," +
               std::to_string(keep_counts[c]) + "\n";
    }
    return out;
}

}  // namespace adadedup
