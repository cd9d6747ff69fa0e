#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adadedup/error.hpp"

namespace adadedup {

using SampleIndex = std::uint32_t;

// Sorted ascending everywhere it crosses a module boundary.
using IndexSet = std::vector<SampleIndex>;

struct SampleId {
    SampleIndex index = 0;
    std::optional<std::string> external_id;
};

// n x d row-major feature matrix. Values are stored single precision to
// match the on-disk format; all distance arithmetic is double precision.
struct EmbeddingMatrix {
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    std::vector<float> values;  // n*d, row-major

    std::span<const float> row(SampleIndex i) const {
        return {values.data() + static_cast<std::size_t>(i) * d, d};
    }
};

// Squared Euclidean distance between rows, accumulated in doubles in
// dimension order so results do not depend on parallelism.
inline double squared_distance(const EmbeddingMatrix& m, SampleIndex a, SampleIndex b) {
    const float* pa = m.values.data() + static_cast<std::size_t>(a) * m.d;
    const float* pb = m.values.data() + static_cast<std::size_t>(b) * m.d;
    double acc = 0.0;
    for (std::uint32_t j = 0; j < m.d; ++j) {
        const double diff = static_cast<double>(pa[j]) - static_cast<double>(pb[j]);
        acc += diff * diff;
    }
    return acc;
}

inline double distance(const EmbeddingMatrix& m, SampleIndex a, SampleIndex b) {
    return std::sqrt(squared_distance(m, a, b));
}

enum class SignalMode { sum, mean };

inline const char* signal_mode_name(SignalMode m) {
    return m == SignalMode::sum ? "sum" : "mean";
}

struct PruneConfig {
    std::uint32_t k_clusters = 10;
    std::uint32_t budget_m = 0;
    double alpha_plus = 1.0;
    double alpha_minus = 1.0;
    std::optional<double> beta;
    std::optional<double> churn_target;
    std::uint64_t seed = 0;
    std::optional<double> bandwidth;
    SignalMode signal_mode = SignalMode::sum;

    // Exactly one of beta / churn_target is active; when neither is given,
    // churn targeting at 7.5% of the budget applies.
    static constexpr double kDefaultChurnTarget = 0.075;

    double effective_churn_target() const {
        return churn_target ? *churn_target : kDefaultChurnTarget;
    }
};

// Cross-field validation; returns the config with the budget normalized.
inline PruneConfig validate_config(PruneConfig config, std::uint32_t n) {
    if (config.budget_m < 1 || config.budget_m > n)
        throw ConfigError(ErrorCode::BudgetOutOfRange,
                          "budget_m=" + std::to_string(config.budget_m) +
                              " not in [1," + std::to_string(n) + "]");
    if (config.alpha_plus <= 0.0 || config.alpha_minus <= 0.0)
        throw ConfigError(ErrorCode::NonPositiveScale, "alpha_plus and alpha_minus must be > 0");
    if (config.beta && config.churn_target)
        throw ConfigError(ErrorCode::AmbiguousBeta, "beta and churn_target are mutually exclusive");
    if (config.beta && *config.beta < 0.0)
        throw ConfigError(ErrorCode::NonPositiveScale, "beta must be >= 0");
    if (config.churn_target &&
        (*config.churn_target <= 0.0 || *config.churn_target > 0.5))
        throw ConfigError(ErrorCode::InvalidSpec, "churn_target must lie in (0, 0.5]");
    if (config.k_clusters < 1)
        throw ConfigError(ErrorCode::InvalidSpec, "k_clusters must be >= 1");
    if (config.bandwidth && *config.bandwidth <= 0.0)
        throw ConfigError(ErrorCode::NonPositiveBandwidth, "bandwidth must be > 0");
    return config;
}

// Budget given as a prune ratio; normalized to an absolute kept count.
inline std::uint32_t budget_from_prune_ratio(double prune_ratio, std::uint32_t n) {
    if (!(prune_ratio >= 0.0) || prune_ratio >= 1.0)
        throw ConfigError(ErrorCode::BudgetOutOfRange, "prune_ratio must lie in [0, 1)");
    return static_cast<std::uint32_t>(
        std::llround(static_cast<double>(n) * (1.0 - prune_ratio)));
}

struct ClusterAssignment {
    std::uint32_t k = 0;
    std::uint32_t d = 0;
    std::vector<std::uint32_t> labels;  // per sample, in [0, k)
    std::vector<double> centroids;      // k*d, row-major
    double inertia = 0.0;
    bool normalized = false;  // centroids live in L2-normalized row space

    std::uint32_t n() const { return static_cast<std::uint32_t>(labels.size()); }

    std::vector<std::uint32_t> cluster_sizes() const {
        std::vector<std::uint32_t> sizes(k, 0);
        for (auto label : labels) ++sizes[label];
        return sizes;
    }

    std::vector<IndexSet> members() const {
        std::vector<IndexSet> out(k);
        for (SampleIndex i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
        return out;
    }
};

enum class Stage { initial, final_ };

inline const char* stage_name(Stage s) { return s == Stage::initial ? "init" : "final"; }

// Kept flags plus the per-cluster prune ratios derived from them. The
// ratios are always recomputed from exact integer counts.
struct PruneState {
    std::vector<std::uint8_t> kept;  // per sample
    std::vector<double> gamma;       // per cluster: pruned / size
    Stage stage = Stage::initial;

    std::uint32_t n() const { return static_cast<std::uint32_t>(kept.size()); }

    std::uint32_t kept_count() const {
        return static_cast<std::uint32_t>(
            std::accumulate(kept.begin(), kept.end(), std::uint32_t{0}));
    }

    IndexSet kept_set() const {
        IndexSet out;
        for (SampleIndex i = 0; i < kept.size(); ++i)
            if (kept[i]) out.push_back(i);
        return out;
    }
};

inline std::vector<double> compute_gamma(const std::vector<std::uint8_t>& kept,
                                         const ClusterAssignment& assignment) {
    std::vector<std::uint32_t> sizes(assignment.k, 0);
    std::vector<std::uint32_t> pruned(assignment.k, 0);
    for (SampleIndex i = 0; i < kept.size(); ++i) {
        const auto c = assignment.labels[i];
        ++sizes[c];
        if (!kept[i]) ++pruned[c];
    }
    std::vector<double> gamma(assignment.k, 0.0);
    for (std::uint32_t c = 0; c < assignment.k; ++c)
        gamma[c] = sizes[c] == 0 ? 0.0
                                 : static_cast<double>(pruned[c]) / static_cast<double>(sizes[c]);
    return gamma;
}

inline PruneState make_prune_state(const IndexSet& kept_set, const ClusterAssignment& assignment,
                                   Stage stage) {
    PruneState state;
    state.kept.assign(assignment.n(), 0);
    for (auto i : kept_set) state.kept[i] = 1;
    state.gamma = compute_gamma(state.kept, assignment);
    state.stage = stage;
    return state;
}

// Consistency check used at every stage transition.
inline bool gamma_consistent(const PruneState& state, const ClusterAssignment& assignment) {
    return state.gamma == compute_gamma(state.kept, assignment);
}

struct LossTable {
    enum class Source { kde_proxy, external };
    std::vector<double> loss;  // per sample, nonnegative finite
    Source source = Source::kde_proxy;
};

// Greedy scan order for de-duplication; pinned so downstream numbers are
// reproducible. Default is ascending sample index.
struct DedupOrder {
    std::vector<SampleIndex> perm;

    static DedupOrder ascending(std::uint32_t n) {
        DedupOrder o;
        o.perm.resize(n);
        std::iota(o.perm.begin(), o.perm.end(), SampleIndex{0});
        return o;
    }

    bool is_valid_for(std::uint32_t n) const {
        if (perm.size() != n) return false;
        std::vector<std::uint8_t> seen(n, 0);
        for (auto p : perm) {
            if (p >= n || seen[p]) return false;
            seen[p] = 1;
        }
        return true;
    }
};

}  // namespace adadedup
