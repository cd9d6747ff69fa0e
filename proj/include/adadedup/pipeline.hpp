#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adadedup/adaptation.hpp"
#include "adadedup/clustering.hpp"
#include "adadedup/density.hpp"
#include "adadedup/io.hpp"
#include "adadedup/proxy.hpp"
#include "adadedup/rng.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

// Everything the pipeline needs beyond the core prune parameters.
struct RunOptions {
    PruneConfig prune;
    KMeansOptions kmeans;
    InitialMode initial_mode = InitialMode::global;
    std::uint32_t bandwidth_subsample = 500;
    std::uint32_t knn_k = 10;
};

inline ManifestConfigEcho make_config_echo(const RunOptions& options) {
    ManifestConfigEcho echo;
    echo.prune = options.prune;
    echo.normalize_clustering = options.kmeans.normalize;
    echo.initial_mode = initial_mode_name(options.initial_mode);
    echo.dedup_order = "ascending-index";
    return echo;
}

// In-memory run of the whole two-stage procedure. Stage boundaries match
// the CLI subcommands one to one; the CLI only adds file handling.
struct PipelineResult {
    ClusterAssignment assignment;
    PruneState initial;
    LossTable losses;
    double bandwidth = 0.0;
    AdjustedRatios adapted;
    PruneState final;
};

inline double resolve_bandwidth(const EmbeddingMatrix& prune_embeddings,
                                const RunOptions& options) {
    if (options.prune.bandwidth) return *options.prune.bandwidth;
    return median_bandwidth(prune_embeddings,
                            std::min<std::uint32_t>(options.bandwidth_subsample, prune_embeddings.n),
                            options.prune.seed);
}

// `cluster_embeddings` may differ from the pruning matrix (two-matrix
// mode: semantic clustering, visual de-duplication).
inline PipelineResult run_pipeline(const EmbeddingMatrix& prune_embeddings,
                                   const EmbeddingMatrix& cluster_embeddings,
                                   const RunOptions& options,
                                   const std::optional<LossTable>& external_losses = {}) {
    if (prune_embeddings.n != cluster_embeddings.n)
        throw PreconditionError(ErrorCode::DimensionMismatch,
                                "pruning and clustering matrices disagree on n");
    const PruneConfig config = validate_config(options.prune, prune_embeddings.n);
    const DedupOrder order = DedupOrder::ascending(prune_embeddings.n);

    PipelineResult result;
    result.assignment =
        kmeans_fit(cluster_embeddings, config.k_clusters, config.seed, options.kmeans);
    result.initial = initial_prune(prune_embeddings, result.assignment, config.budget_m, order,
                                   options.initial_mode);
    if (external_losses) {
        result.losses = *external_losses;
        result.bandwidth = config.bandwidth.value_or(0.0);
    } else {
        result.bandwidth = resolve_bandwidth(prune_embeddings, options);
        result.losses = kde_proxy_losses(prune_embeddings, result.initial.kept_set(), result.bandwidth);
    }
    PruneConfig adapted_config = config;
    result.adapted = adapt(result.initial, result.losses, result.assignment, adapted_config);
    result.final = final_selection(prune_embeddings, result.initial, result.assignment,
                                   result.adapted.keep_counts, order);
    return result;
}

inline PipelineResult run_pipeline(const EmbeddingMatrix& embeddings, const RunOptions& options,
                                   const std::optional<LossTable>& external_losses = {}) {
    return run_pipeline(embeddings, embeddings, options, external_losses);
}

inline Manifest make_manifest(const PruneState& state, const ClusterAssignment& assignment,
                              const RunOptions& options, const EmbeddingMatrix& embeddings,
                              const std::vector<std::string>& external_ids = {}) {
    Manifest m;
    m.state = state;
    m.clusters = assignment.labels;
    m.external_ids = external_ids;
    m.config = make_config_echo(options);
    m.embedding_hash = embedding_content_hash(embeddings);
    m.generator = Rng::kGeneratorName;
    return m;
}

}  // namespace adadedup
