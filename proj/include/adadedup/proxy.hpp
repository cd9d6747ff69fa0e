#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "adadedup/error.hpp"
#include "adadedup/io.hpp"
#include "adadedup/parallel.hpp"
#include "adadedup/rng.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

// Loss reported when a sample has no reference set at all (the kept set is
// exactly {s}): the log of the machine-epsilon reciprocal.
inline double kde_sentinel_loss() {
    return -std::log(std::numeric_limits<double>::epsilon());
}

// Kernel-density stand-in for a proxy model trained on the kept set.
//
//   loss(s) = -log( max_{k in R_s} exp(-||f_s - f_k||^2 / (2 h^2)) )
//           = min_{k in R_s} ||f_s - f_k||^2 / (2 h^2)
//
// with R_s = kept \ {s} for kept samples (leave-one-out) and R_s = kept
// otherwise. The nearest-reference kernel keeps every loss in [0, inf)
// bounded by the sentinel case and makes the proxy term-wise monotone:
// adding a kept sample can only add a candidate reference, so no other
// sample's loss ever increases, and shrinking the kept set never
// decreases one.
inline LossTable kde_proxy_losses(const EmbeddingMatrix& m, const IndexSet& kept_set,
                                  double bandwidth) {
    if (kept_set.empty()) throw PreconditionError(ErrorCode::EmptyKeptSet, "");
    if (!(bandwidth > 0.0))
        throw PreconditionError(ErrorCode::NonPositiveBandwidth,
                                "h=" + std::to_string(bandwidth));
    std::vector<std::uint8_t> is_kept(m.n, 0);
    for (auto k : kept_set) is_kept[k] = 1;

    LossTable table;
    table.source = LossTable::Source::kde_proxy;
    table.loss.assign(m.n, 0.0);
    const double inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);

    parallel_for(0, m.n, [&](std::uint32_t s) {
        double best = std::numeric_limits<double>::infinity();
        for (auto k : kept_set) {
            if (is_kept[s] && k == s) continue;  // leave-one-out
            best = std::min(best, squared_distance(m, s, k));
        }
        table.loss[s] = std::isinf(best) ? kde_sentinel_loss() : best * inv_2h2;
    });
    return table;
}

// Median pairwise distance over a seeded subsample; the default bandwidth.
inline double median_bandwidth(const EmbeddingMatrix& m, std::uint32_t subsample,
                               std::uint64_t seed) {
    if (subsample < 2)
        throw PreconditionError(ErrorCode::InvalidSpec, "subsample must be >= 2");
    std::vector<SampleIndex> pool(m.n);
    for (SampleIndex i = 0; i < m.n; ++i) pool[i] = i;
    std::uint32_t take = std::min(subsample, m.n);
    if (take < m.n) {
        Rng rng(seed, "bandwidth-subsample");
        for (std::uint32_t i = 0; i < take; ++i) {
            const auto j = i + static_cast<std::uint32_t>(rng.uniform_index(m.n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(take);
    }
    if (pool.size() < 2)
        throw PreconditionError(ErrorCode::DegenerateData, "fewer than two samples");

    std::vector<double> dists;
    dists.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j)
            dists.push_back(distance(m, pool[i], pool[j]));
    std::sort(dists.begin(), dists.end());
    const std::size_t count = dists.size();
    const double median = count % 2 == 1
                              ? dists[count / 2]
                              : 0.5 * (dists[count / 2 - 1] + dists[count / 2]);
    if (median == 0.0)
        throw PreconditionError(ErrorCode::DegenerateData, "all subsampled points identical");
    return median;
}

// Desk-scale evaluation functional: total proxy loss over the whole
// dataset for a given kept set.
inline double objective_J(const EmbeddingMatrix& m, const IndexSet& kept_set, double bandwidth) {
    const LossTable table = kde_proxy_losses(m, kept_set, bandwidth);
    double total = 0.0;
    for (double v : table.loss) total += v;  // fixed order
    return total;
}

inline LossTable import_losses(const std::filesystem::path& path, std::uint32_t n) {
    return read_loss_table(path, n);
}

struct KnnClusterRow {
    std::uint32_t cluster = 0;
    std::uint32_t size = 0;
    double mean_knn_distance = 0.0;
};

// Per-sample mean distance to the k nearest neighbors (self excluded),
// averaged per cluster.
inline std::vector<KnnClusterRow> knn_distance_report(const EmbeddingMatrix& m,
                                                      const ClusterAssignment& assignment,
                                                      std::uint32_t k_neighbors = 10) {
    if (k_neighbors < 1 || k_neighbors >= m.n)
        throw PreconditionError(ErrorCode::KTooLarge,
                                "k_neighbors=" + std::to_string(k_neighbors) + " with n=" +
                                    std::to_string(m.n));
    std::vector<double> sample_mean(m.n, 0.0);
    parallel_for(0, m.n, [&](std::uint32_t i) {
        std::vector<double> d2;
        d2.reserve(m.n - 1);
        for (SampleIndex j = 0; j < m.n; ++j)
            if (j != i) d2.push_back(squared_distance(m, i, j));
        std::nth_element(d2.begin(), d2.begin() + (k_neighbors - 1), d2.end());
        std::sort(d2.begin(), d2.begin() + k_neighbors);
        double acc = 0.0;
        for (std::uint32_t t = 0; t < k_neighbors; ++t) acc += std::sqrt(d2[t]);
        sample_mean[i] = acc / k_neighbors;
    });

    std::vector<KnnClusterRow> rows(assignment.k);
    for (std::uint32_t c = 0; c < assignment.k; ++c) rows[c].cluster = c;
    for (SampleIndex i = 0; i < m.n; ++i) {
        auto& r = rows[assignment.labels[i]];
        ++r.size;
        r.mean_knn_distance += sample_mean[i];
    }
    for (auto& r : rows)
        if (r.size > 0) r.mean_knn_distance /= r.size;
    return rows;
}

inline std::string serialize_knn_report(const std::vector<KnnClusterRow>& rows) {
    std::string out = "cluster,size,mean_knn_distance\n";
    for (const auto& r : rows)
        out += std::to_string(r.cluster) + "," + std::to_string(r.size) + "," +
               format_double(r.mean_knn_distance) + "\n";
    return out;
}

}  // namespace adadedup
