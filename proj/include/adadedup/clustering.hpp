#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "adadedup/error.hpp"
#include "adadedup/parallel.hpp"
#include "adadedup/rng.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

struct KMeansOptions {
    std::uint32_t max_iters = 300;
    double tol = 1e-6;  // relative centroid shift
    // L2-normalize rows before clustering, making Euclidean distance
    // monotone with cosine distance. Density pruning always sees the raw
    // embeddings; normalization affects the partition only.
    bool normalize = true;
};

namespace detail {

inline double squared_distance_to_centroid(const EmbeddingMatrix& m, SampleIndex i,
                                           const double* centroid) {
    const float* p = m.values.data() + static_cast<std::size_t>(i) * m.d;
    double acc = 0.0;
    for (std::uint32_t j = 0; j < m.d; ++j) {
        const double diff = static_cast<double>(p[j]) - centroid[j];
        acc += diff * diff;
    }
    return acc;
}

inline EmbeddingMatrix l2_normalized(const EmbeddingMatrix& m) {
    EmbeddingMatrix out = m;
    for (std::uint32_t i = 0; i < m.n; ++i) {
        float* row = out.values.data() + static_cast<std::size_t>(i) * m.d;
        double norm2 = 0.0;
        for (std::uint32_t j = 0; j < m.d; ++j)
            norm2 += static_cast<double>(row[j]) * static_cast<double>(row[j]);
        if (norm2 == 0.0) continue;  // zero rows stay as-is
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::uint32_t j = 0; j < m.d; ++j)
            row[j] = static_cast<float>(static_cast<double>(row[j]) * inv);
    }
    return out;
}

// k-means++ seeding: first centroid uniform, then proportional to the
// squared distance to the nearest chosen centroid.
inline std::vector<double> kmeanspp_init(const EmbeddingMatrix& m, std::uint32_t k, Rng& rng) {
    std::vector<double> centroids(static_cast<std::size_t>(k) * m.d);
    std::vector<double> min_d2(m.n, std::numeric_limits<double>::infinity());

    const SampleIndex first = static_cast<SampleIndex>(rng.uniform_index(m.n));
    for (std::uint32_t j = 0; j < m.d; ++j)
        centroids[j] = static_cast<double>(m.row(first)[j]);

    for (std::uint32_t c = 1; c < k; ++c) {
        const double* prev = centroids.data() + static_cast<std::size_t>(c - 1) * m.d;
        double total = 0.0;
        for (SampleIndex i = 0; i < m.n; ++i) {
            min_d2[i] = std::min(min_d2[i], squared_distance_to_centroid(m, i, prev));
            total += min_d2[i];
        }
        SampleIndex chosen = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double cum = 0.0;
            chosen = m.n - 1;
            for (SampleIndex i = 0; i < m.n; ++i) {
                cum += min_d2[i];
                if (cum > target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            // All points coincide with chosen centroids.
            chosen = static_cast<SampleIndex>(rng.uniform_index(m.n));
        }
        double* dst = centroids.data() + static_cast<std::size_t>(c) * m.d;
        for (std::uint32_t j = 0; j < m.d; ++j)
            dst[j] = static_cast<double>(m.row(chosen)[j]);
    }
    return centroids;
}

}  // namespace detail

// Nearest-centroid assignment; ties break toward the lowest centroid index.
inline std::vector<std::uint32_t> assign(const EmbeddingMatrix& m,
                                         const std::vector<double>& centroids, std::uint32_t k,
                                         std::uint32_t d) {
    if (d != m.d)
        throw PreconditionError(ErrorCode::DimensionMismatch,
                                "centroid dimension " + std::to_string(d) + " vs data " +
                                    std::to_string(m.d));
    std::vector<std::uint32_t> labels(m.n, 0);
    parallel_for(0, m.n, [&](std::uint32_t i) {
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_c = 0;
        for (std::uint32_t c = 0; c < k; ++c) {
            const double d2 = detail::squared_distance_to_centroid(
                m, i, centroids.data() + static_cast<std::size_t>(c) * m.d);
            if (d2 < best) {
                best = d2;
                best_c = c;
            }
        }
        labels[i] = best_c;
    });
    return labels;
}

inline std::vector<std::uint32_t> assign(const EmbeddingMatrix& m, const ClusterAssignment& a) {
    if (a.normalized) return assign(detail::l2_normalized(m), a.centroids, a.k, a.d);
    return assign(m, a.centroids, a.k, a.d);
}

// Lloyd iterations from k-means++ seeding. Deterministic per seed; empty
// clusters are reseeded with the point farthest from its centroid inside
// the largest cluster, so every returned cluster is nonempty.
inline ClusterAssignment kmeans_fit(const EmbeddingMatrix& embeddings, std::uint32_t k,
                                    std::uint64_t seed, const KMeansOptions& options = {}) {
    if (k < 1 || k > embeddings.n)
        throw PreconditionError(ErrorCode::KTooLarge,
                                "k=" + std::to_string(k) + " with n=" + std::to_string(embeddings.n));

    const EmbeddingMatrix data =
        options.normalize ? detail::l2_normalized(embeddings) : embeddings;

    Rng rng(seed, "kmeans-init");
    std::vector<double> centroids = detail::kmeanspp_init(data, k, rng);

    std::vector<std::uint32_t> labels(data.n, 0);
    std::vector<double> dist2(data.n, 0.0);
    std::vector<std::uint32_t> counts(k, 0);
    std::vector<double> next(centroids.size(), 0.0);

    auto assign_step = [&]() {
        parallel_for(0, data.n, [&](std::uint32_t i) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_c = 0;
            for (std::uint32_t c = 0; c < k; ++c) {
                const double d2 = detail::squared_distance_to_centroid(
                    data, i, centroids.data() + static_cast<std::size_t>(c) * data.d);
                if (d2 < best) {
                    best = d2;
                    best_c = c;
                }
            }
            labels[i] = best_c;
            dist2[i] = best;
        });
        double inertia = 0.0;
        for (SampleIndex i = 0; i < data.n; ++i) inertia += dist2[i];  // fixed order
        return inertia;
    };

    // Empty-cluster repair: reseed on the point farthest from its centroid
    // within the largest cluster; ties go to the lowest cluster / sample
    // index. Counts and dist2 describe the current labeling.
    const auto reseed_empty = [&](std::uint32_t c, std::vector<double>& target) {
        std::uint32_t largest = 0;
        for (std::uint32_t c2 = 1; c2 < k; ++c2)
            if (counts[c2] > counts[largest]) largest = c2;
        SampleIndex far = 0;
        double far_d2 = -1.0;
        for (SampleIndex i = 0; i < data.n; ++i) {
            if (labels[i] != largest) continue;
            if (dist2[i] > far_d2) {
                far_d2 = dist2[i];
                far = i;
            }
        }
        const float* row = data.values.data() + static_cast<std::size_t>(far) * data.d;
        double* dst = target.data() + static_cast<std::size_t>(c) * data.d;
        for (std::uint32_t j = 0; j < data.d; ++j) dst[j] = static_cast<double>(row[j]);
    };

    const auto count_labels = [&]() {
        std::fill(counts.begin(), counts.end(), 0u);
        for (SampleIndex i = 0; i < data.n; ++i) ++counts[labels[i]];
    };

    double inertia = assign_step();
    for (std::uint32_t iter = 0; iter < options.max_iters; ++iter) {
        // Update step: per-cluster means accumulated in sample-index order.
        std::fill(counts.begin(), counts.end(), 0u);
        std::fill(next.begin(), next.end(), 0.0);
        for (SampleIndex i = 0; i < data.n; ++i) {
            const auto c = labels[i];
            ++counts[c];
            double* dst = next.data() + static_cast<std::size_t>(c) * data.d;
            const float* row = data.values.data() + static_cast<std::size_t>(i) * data.d;
            for (std::uint32_t j = 0; j < data.d; ++j) dst[j] += static_cast<double>(row[j]);
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                double* dst = next.data() + static_cast<std::size_t>(c) * data.d;
                for (std::uint32_t j = 0; j < data.d; ++j)
                    dst[j] /= static_cast<double>(counts[c]);
            } else {
                reseed_empty(c, next);
            }
        }

        double shift2 = 0.0;
        double norm2 = 0.0;
        for (std::size_t i = 0; i < centroids.size(); ++i) {
            const double delta = next[i] - centroids[i];
            shift2 += delta * delta;
            norm2 += centroids[i] * centroids[i];
        }
        centroids.swap(next);
        inertia = assign_step();

        const double rel_shift = std::sqrt(shift2) / std::max(std::sqrt(norm2), 1e-30);
        if (rel_shift < options.tol) break;
    }

    // The final assignment itself may have emptied a cluster; keep
    // repairing until every cluster owns a point (bounded, and observed to
    // settle in one or two rounds whenever the data has >= k distinct rows).
    for (std::uint32_t round = 0; round < 2 * k; ++round) {
        count_labels();
        std::uint32_t empty = k;
        for (std::uint32_t c = 0; c < k; ++c)
            if (counts[c] == 0) {
                empty = c;
                break;
            }
        if (empty == k) break;
        reseed_empty(empty, centroids);
        inertia = assign_step();
    }

    ClusterAssignment out;
    out.k = k;
    out.d = data.d;
    out.labels = labels;
    out.centroids = std::move(centroids);
    out.inertia = inertia;
    out.normalized = options.normalize;
    return out;
}

// Inertia of an arbitrary labeling against given centroids; used by tests.
inline double labeling_inertia(const EmbeddingMatrix& m, const std::vector<std::uint32_t>& labels,
                               const std::vector<double>& centroids) {
    double acc = 0.0;
    for (SampleIndex i = 0; i < m.n; ++i)
        acc += detail::squared_distance_to_centroid(
            m, i, centroids.data() + static_cast<std::size_t>(labels[i]) * m.d);
    return acc;
}

}  // namespace adadedup
