#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "adadedup/error.hpp"
#include "adadedup/rng.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

// Seeded Gaussian-blob generator with controllable redundancy: within each
// cluster a fixed fraction of points are near-copies of earlier points.
struct SynthSpec {
    std::uint32_t d = 2;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> sizes;
    std::vector<double> spreads;              // sigma per cluster, > 0
    std::vector<double> duplicate_fractions;  // in [0, 1) per cluster
    std::vector<std::vector<double>> centers; // empty: drawn from the seed stream

    std::uint32_t n() const {
        std::uint32_t total = 0;
        for (auto s : sizes) total += s;
        return total;
    }

    std::uint32_t k() const { return static_cast<std::uint32_t>(sizes.size()); }
};

inline void validate_spec(const SynthSpec& spec) {
    if (spec.d < 1 || spec.sizes.empty())
        throw ConfigError(ErrorCode::InvalidSpec, "need d >= 1 and at least one cluster");
    if (spec.spreads.size() != spec.sizes.size() ||
        spec.duplicate_fractions.size() != spec.sizes.size())
        throw ConfigError(ErrorCode::InvalidSpec, "sizes, spreads, duplicate_fractions must align");
    for (auto s : spec.sizes)
        if (s == 0) throw ConfigError(ErrorCode::InvalidSpec, "cluster sizes must be >= 1");
    for (auto s : spec.spreads)
        if (!(s > 0.0)) throw ConfigError(ErrorCode::InvalidSpec, "spreads must be > 0");
    for (auto f : spec.duplicate_fractions)
        if (f < 0.0 || f >= 1.0)
            throw ConfigError(ErrorCode::InvalidSpec, "duplicate fractions must lie in [0, 1)");
    if (!spec.centers.empty()) {
        if (spec.centers.size() != spec.sizes.size())
            throw ConfigError(ErrorCode::InvalidSpec, "centers must cover every cluster");
        for (const auto& c : spec.centers)
            if (c.size() != spec.d)
                throw ConfigError(ErrorCode::InvalidSpec, "center dimension mismatch");
    }
}

struct SynthResult {
    EmbeddingMatrix embeddings;
    std::vector<std::uint32_t> labels;  // generating cluster per sample
};

// Cluster blocks are emitted in cluster order. Fresh points come first,
// then duplicates: each duplicate copies a uniformly chosen earlier point
// of the same cluster and moves it by a random direction scaled to less
// than sigma/100, so every duplicate has a neighbor within that radius.
inline SynthResult generate(const SynthSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed, "synth-gen");

    std::vector<std::vector<double>> centers = spec.centers;
    if (centers.empty()) {
        const double side = 20.0 * *std::max_element(spec.spreads.begin(), spec.spreads.end()) *
                            static_cast<double>(spec.k());
        centers.resize(spec.k());
        for (auto& c : centers) {
            c.resize(spec.d);
            for (auto& v : c) v = side * (rng.uniform() - 0.5);
        }
    }

    SynthResult out;
    out.embeddings.d = spec.d;
    out.embeddings.n = spec.n();
    out.embeddings.values.reserve(static_cast<std::size_t>(out.embeddings.n) * spec.d);
    out.labels.reserve(out.embeddings.n);

    std::vector<double> point(spec.d);
    for (std::uint32_t c = 0; c < spec.k(); ++c) {
        const std::uint32_t size = spec.sizes[c];
        const std::uint32_t dup_count =
            static_cast<std::uint32_t>(std::floor(spec.duplicate_fractions[c] * size));
        const std::uint32_t fresh_count = size - dup_count;
        const double sigma = spec.spreads[c];
        const double epsilon = sigma / 100.0;
        const std::size_t block_start = out.labels.size();

        for (std::uint32_t i = 0; i < size; ++i) {
            if (i < fresh_count) {
                for (std::uint32_t j = 0; j < spec.d; ++j)
                    point[j] = centers[c][j] + sigma * rng.normal();
            } else {
                const auto src = block_start + rng.uniform_index(i);
                const float* row =
                    out.embeddings.values.data() + src * spec.d;
                double norm2 = 0.0;
                for (std::uint32_t j = 0; j < spec.d; ++j) {
                    point[j] = rng.normal();
                    norm2 += point[j] * point[j];
                }
                const double radius = epsilon * rng.uniform();
                const double scale = norm2 > 0.0 ? radius / std::sqrt(norm2) : 0.0;
                for (std::uint32_t j = 0; j < spec.d; ++j)
                    point[j] = static_cast<double>(row[j]) + scale * point[j];
            }
            for (std::uint32_t j = 0; j < spec.d; ++j)
                out.embeddings.values.push_back(static_cast<float>(point[j]));
            out.labels.push_back(c);
        }
    }
    return out;
}

// The heterogeneous reference instance: three redundant clusters next to
// three diffuse ones, centers on scaled basis vectors (pairwise distance
// 25*sqrt(2), comfortably past ten times the largest spread).
inline SynthSpec heterogeneous_spec(std::uint64_t seed) {
    SynthSpec spec;
    spec.d = 16;
    spec.seed = seed;
    spec.sizes = {200, 200, 200, 100, 100, 200};
    spec.spreads = {0.1, 0.1, 0.2, 1.0, 1.5, 2.0};
    spec.duplicate_fractions = {0.6, 0.6, 0.4, 0.0, 0.0, 0.0};
    spec.centers.assign(6, std::vector<double>(16, 0.0));
    for (std::size_t c = 0; c < 6; ++c) spec.centers[c][c] = 25.0;
    return spec;
}

inline SynthSpec spec_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {"preset", "d",       "seed",
                                                   "sizes",  "spreads", "duplicate_fractions",
                                                   "centers"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError(ErrorCode::UnknownKey, "synth spec key '" + key + "'");
    }
    if (j.contains("preset")) {
        if (j.at("preset").get<std::string>() != "heterogeneous-6")
            throw ConfigError(ErrorCode::InvalidSpec, "unknown preset");
        SynthSpec spec = heterogeneous_spec(j.value("seed", std::uint64_t{0}));
        return spec;
    }
    SynthSpec spec;
    spec.d = j.at("d").get<std::uint32_t>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.sizes = j.at("sizes").get<std::vector<std::uint32_t>>();
    spec.spreads = j.at("spreads").get<std::vector<double>>();
    spec.duplicate_fractions = j.at("duplicate_fractions").get<std::vector<double>>();
    if (j.contains("centers"))
        spec.centers = j.at("centers").get<std::vector<std::vector<double>>>();
    validate_spec(spec);
    return spec;
}

}  // namespace adadedup
