#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adadedup/baselines.hpp"
#include "adadedup/pipeline.hpp"
#include "adadedup/proxy.hpp"
#include "adadedup/synth.hpp"

namespace adadedup {

struct ComparisonRow {
    Selector selector = Selector::random;
    std::uint32_t trial = 0;
    double objective = 0.0;
    std::uint32_t budget = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> cluster_keep_counts;  // against generator labels
};

struct ComparisonResult {
    std::vector<ComparisonRow> rows;  // ordered by (selector, trial)
    std::vector<Selector> selectors;
    std::vector<std::uint32_t> cluster_sizes;  // generator cluster sizes
    std::uint32_t trials = 0;
};

// One trial: generate, select with every requested selector, score every
// kept set with the same full-dataset objective. Trial t reseeds both the
// generator and the pipeline with base seed + t.
inline ComparisonResult run_comparison(const SynthSpec& base_spec, std::uint32_t budget,
                                       const RunOptions& base_options,
                                       const std::vector<Selector>& selectors,
                                       std::uint32_t trials) {
    if (selectors.empty())
        throw ConfigError(ErrorCode::InvalidSpec, "need at least one selector");
    ComparisonResult result;
    result.selectors = selectors;
    result.cluster_sizes = base_spec.sizes;
    result.trials = trials;

    for (std::uint32_t trial = 0; trial < trials; ++trial) {
        SynthSpec spec = base_spec;
        spec.seed = base_spec.seed + trial;
        const SynthResult data = generate(spec);
        const std::uint32_t n = data.embeddings.n;

        RunOptions options = base_options;
        options.prune.seed = spec.seed;
        options.prune.budget_m = budget;
        validate_config(options.prune, n);
        const DedupOrder order = DedupOrder::ascending(n);

        // Shared footing across selectors: one bandwidth from the full
        // dataset, one clustering for the cluster-aware selectors.
        const double bandwidth = resolve_bandwidth(data.embeddings, options);
        ClusterAssignment assignment;
        bool have_assignment = false;
        for (auto s : selectors)
            if (s == Selector::adadedup || s == Selector::sse_uniform) have_assignment = true;
        if (have_assignment)
            assignment = kmeans_fit(data.embeddings, options.prune.k_clusters, options.prune.seed,
                                    options.kmeans);

        for (auto selector : selectors) {
            IndexSet kept;
            switch (selector) {
                case Selector::adadedup: {
                    RunOptions pipeline_options = options;
                    pipeline_options.prune.bandwidth = bandwidth;
                    const PipelineResult run = run_pipeline(data.embeddings, pipeline_options);
                    kept = run.final.kept_set();
                    break;
                }
                case Selector::random:
                    kept = random_select(n, budget, options.prune.seed);
                    break;
                case Selector::global_dedup:
                    kept = global_dedup_select(data.embeddings, budget, order);
                    break;
                case Selector::sse_uniform:
                    kept = cluster_uniform_dedup_select(data.embeddings, assignment, budget, order);
                    break;
            }
            ComparisonRow row;
            row.selector = selector;
            row.trial = trial;
            row.budget = budget;
            row.seed = spec.seed;
            row.objective = objective_J(data.embeddings, kept, bandwidth);
            row.cluster_keep_counts.assign(spec.k(), 0);
            for (auto i : kept) ++row.cluster_keep_counts[data.labels[i]];
            result.rows.push_back(std::move(row));
        }
    }

    // Fixed output order regardless of inner loop structure.
    std::sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
        if (a.selector != b.selector) return a.selector < b.selector;
        return a.trial < b.trial;
    });
    return result;
}

inline double mean_objective(const ComparisonResult& result, Selector selector) {
    double total = 0.0;
    std::uint32_t count = 0;
    for (const auto& row : result.rows)
        if (row.selector == selector) {
            total += row.objective;
            ++count;
        }
    return count == 0 ? 0.0 : total / count;
}

inline std::string serialize_comparison(const ComparisonResult& result) {
    std::string out = "selector,trial,J,budget,seed\n";
    for (const auto& row : result.rows)
        out += std::string(selector_name(row.selector)) + "," + std::to_string(row.trial) + "," +
               format_double(row.objective) + "," + std::to_string(row.budget) + "," +
               std::to_string(row.seed) + "\n";
    return out;
}

inline std::string serialize_keep_counts(const ComparisonResult& result) {
    std::string out = "selector,trial,cluster,size,kept\n";
    for (const auto& row : result.rows)
        for (std::size_t c = 0; c < row.cluster_keep_counts.size(); ++c)
            out += std::string(selector_name(row.selector)) + "," + std::to_string(row.trial) + "," +
                   std::to_string(c) + "," + std::to_string(result.cluster_sizes[c]) + "," +
                   std::to_string(row.cluster_keep_counts[c]) + "\n";
    return out;
}

}  // namespace adadedup
