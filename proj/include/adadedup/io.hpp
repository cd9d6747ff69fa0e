#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adadedup/error.hpp"
#include "adadedup/hash.hpp"
#include "adadedup/types.hpp"

namespace adadedup {

// ---------------------------------------------------------------------------
// Formatting helpers. All numeric text uses shortest round-trip form so
// write -> read is exact and reruns are byte-identical.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string format_float(float v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view text, bool& ok) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    ok = res.ec == std::errc{} && res.ptr == text.data() + text.size();
    return v;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(ErrorCode::IoFailure, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(ErrorCode::IoFailure, "short write to " + path.string());
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

inline std::vector<std::string_view> split_fields(const std::string& line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t end = line.find(',', start);
        if (end == std::string::npos) {
            out.emplace_back(line.data() + start, line.size() - start);
            break;
        }
        out.emplace_back(line.data() + start, end - start);
        start = end + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding container: "ADDEMB1\0", u32le n, u32le d, n*d float32le row-major.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kEmbeddingMagic[8] = {'A', 'D', 'D', 'E', 'M', 'B', '1', '\0'};
constexpr char kCentroidMagic[8] = {'A', 'D', 'D', 'C', 'E', 'N', '1', '\0'};

inline void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

static_assert(std::endian::native == std::endian::little,
              "file I/O assumes a little-endian host");

}  // namespace detail

inline std::string serialize_embeddings(const EmbeddingMatrix& m) {
    std::string out;
    out.reserve(16 + m.values.size() * 4);
    out.append(detail::kEmbeddingMagic, 8);
    detail::put_u32le(out, m.n);
    detail::put_u32le(out, m.d);
    const std::size_t bytes = m.values.size() * sizeof(float);
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, m.values.data(), bytes);
    return out;
}

inline EmbeddingMatrix parse_embeddings(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), detail::kEmbeddingMagic, 8) != 0)
        throw FormatError(ErrorCode::BadMagic, origin);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    EmbeddingMatrix m;
    m.n = detail::get_u32le(p + 8);
    m.d = detail::get_u32le(p + 12);
    if (m.n < 1 || m.d < 1)
        throw FormatError(ErrorCode::TruncatedFile, origin + ": n and d must be >= 1");
    const std::size_t expected = 16 + static_cast<std::size_t>(m.n) * m.d * 4;
    if (bytes.size() != expected)
        throw FormatError(ErrorCode::TruncatedFile,
                          origin + ": expected " + std::to_string(expected) + " bytes, got " +
                              std::to_string(bytes.size()));
    m.values.resize(static_cast<std::size_t>(m.n) * m.d);
    std::memcpy(m.values.data(), bytes.data() + 16, m.values.size() * sizeof(float));
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (!std::isfinite(m.values[i]))
            throw FormatError(ErrorCode::NonFiniteValue,
                              origin + ": at (" + std::to_string(i / m.d) + "," +
                                  std::to_string(i % m.d) + ")");
    }
    return m;
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    return parse_embeddings(read_file_bytes(path), path.string());
}

inline void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    write_file_bytes(path, serialize_embeddings(m));
}

inline std::string embedding_content_hash(const EmbeddingMatrix& m) {
    return fnv1a64_hex(serialize_embeddings(m));
}

// ---------------------------------------------------------------------------
// Centroid container: same layout with its own magic and float64 payload,
// so fitted centroids round-trip bit-exactly.
// ---------------------------------------------------------------------------

inline std::string serialize_centroids(const ClusterAssignment& a) {
    std::string out;
    out.append(detail::kCentroidMagic, 8);
    detail::put_u32le(out, a.k);
    detail::put_u32le(out, a.d);
    detail::put_u32le(out, a.normalized ? 1 : 0);
    const std::size_t bytes = a.centroids.size() * sizeof(double);
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, a.centroids.data(), bytes);
    return out;
}

inline void write_centroids(const std::filesystem::path& path, const ClusterAssignment& a) {
    write_file_bytes(path, serialize_centroids(a));
}

// Returns k, d, the normalization flag and the centroid payload.
inline ClusterAssignment read_centroids(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 20 || std::memcmp(bytes.data(), detail::kCentroidMagic, 8) != 0)
        throw FormatError(ErrorCode::BadMagic, path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    ClusterAssignment a;
    a.k = detail::get_u32le(p + 8);
    a.d = detail::get_u32le(p + 12);
    a.normalized = detail::get_u32le(p + 16) != 0;
    const std::size_t expected = 20 + static_cast<std::size_t>(a.k) * a.d * 8;
    if (bytes.size() != expected)
        throw FormatError(ErrorCode::TruncatedFile, path.string());
    a.centroids.resize(static_cast<std::size_t>(a.k) * a.d);
    std::memcpy(a.centroids.data(), bytes.data() + 20, a.centroids.size() * sizeof(double));
    return a;
}

// ---------------------------------------------------------------------------
// CSV embedding import. Rectangular numeric table; an optional leading
// column of external ids is detected from the first data row.
// ---------------------------------------------------------------------------

struct CsvImport {
    EmbeddingMatrix matrix;
    std::vector<std::string> external_ids;  // empty when the CSV had none
};

inline CsvImport import_csv_embeddings(const std::filesystem::path& path, bool has_header) {
    const auto lines = split_lines(read_file_bytes(path));
    std::size_t first = has_header ? 1 : 0;
    if (lines.size() <= first) throw FormatError(ErrorCode::EmptyFile, path.string());

    const auto first_fields = split_fields(lines[first]);
    bool ok = false;
    parse_double(first_fields[0], ok);
    const bool has_ids = !ok;
    const std::size_t dim = first_fields.size() - (has_ids ? 1 : 0);
    if (dim < 1) throw FormatError(ErrorCode::EmptyFile, path.string() + ": no numeric columns");

    CsvImport out;
    out.matrix.n = static_cast<std::uint32_t>(lines.size() - first);
    out.matrix.d = static_cast<std::uint32_t>(dim);
    out.matrix.values.reserve(static_cast<std::size_t>(out.matrix.n) * out.matrix.d);

    for (std::size_t r = first; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        if (fields.size() != first_fields.size())
            throw FormatError(ErrorCode::RaggedRows,
                              path.string() + ": row " + std::to_string(r - first) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(first_fields.size()));
        std::size_t c0 = 0;
        if (has_ids) {
            out.external_ids.emplace_back(fields[0]);
            c0 = 1;
        }
        for (std::size_t c = c0; c < fields.size(); ++c) {
            bool field_ok = false;
            const double v = parse_double(fields[c], field_ok);
            if (!field_ok || !std::isfinite(v))
                throw FormatError(ErrorCode::NonFiniteValue,
                                  path.string() + ": row " + std::to_string(r - first) +
                                      " col " + std::to_string(c - c0));
            out.matrix.values.push_back(static_cast<float>(v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loss table: "sample_id,loss" text, one row per sample, LF endings.
// ---------------------------------------------------------------------------

inline std::string serialize_loss_table(const LossTable& table) {
    std::string out = "sample_id,loss\n";
    for (std::size_t i = 0; i < table.loss.size(); ++i)
        out += std::to_string(i) + "," + format_double(table.loss[i]) + "\n";
    return out;
}

inline void write_loss_table(const std::filesystem::path& path, const LossTable& table) {
    write_file_bytes(path, serialize_loss_table(table));
}

inline LossTable parse_loss_table(const std::string& bytes, std::uint32_t n,
                                  const std::string& origin) {
    const auto lines = split_lines(bytes);
    if (lines.empty()) throw FormatError(ErrorCode::EmptyFile, origin);
    std::size_t first = lines[0] == "sample_id,loss" ? 1 : 0;

    LossTable table;
    table.source = LossTable::Source::external;
    table.loss.assign(n, -1.0);
    std::vector<std::uint8_t> seen(n, 0);
    for (std::size_t r = first; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        if (fields.size() != 2)
            throw FormatError(ErrorCode::RaggedRows, origin + ": line " + std::to_string(r + 1));
        bool ok = false;
        const double idx = parse_double(fields[0], ok);
        if (!ok || idx < 0 || idx != std::floor(idx) || idx >= static_cast<double>(n))
            throw FormatError(ErrorCode::MissingLoss,
                              origin + ": bad sample id '" + std::string(fields[0]) + "'");
        const auto id = static_cast<std::uint32_t>(idx);
        if (seen[id]) throw FormatError(ErrorCode::DuplicateLoss, origin + ": id " + std::to_string(id));
        const double v = parse_double(fields[1], ok);
        if (!ok || !std::isfinite(v))
            throw FormatError(ErrorCode::NonFiniteValue, origin + ": id " + std::to_string(id));
        if (v < 0.0)
            throw FormatError(ErrorCode::NegativeLoss, origin + ": id " + std::to_string(id));
        seen[id] = 1;
        table.loss[id] = v;
    }
    for (std::uint32_t i = 0; i < n; ++i)
        if (!seen[i]) throw FormatError(ErrorCode::MissingLoss, origin + ": id " + std::to_string(i));
    return table;
}

inline LossTable read_loss_table(const std::filesystem::path& path, std::uint32_t n) {
    return parse_loss_table(read_file_bytes(path), n, path.string());
}

// ---------------------------------------------------------------------------
// Cluster assignment table: "sample_id,cluster".
// ---------------------------------------------------------------------------

inline std::string serialize_assignment_table(const std::vector<std::uint32_t>& labels) {
    std::string out = "sample_id,cluster\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
    return out;
}

inline void write_assignment_table(const std::filesystem::path& path,
                                   const std::vector<std::uint32_t>& labels) {
    write_file_bytes(path, serialize_assignment_table(labels));
}

inline std::vector<std::uint32_t> read_assignment_table(const std::filesystem::path& path) {
    const auto lines = split_lines(read_file_bytes(path));
    if (lines.empty()) throw FormatError(ErrorCode::EmptyFile, path.string());
    std::size_t first = lines[0] == "sample_id,cluster" ? 1 : 0;
    std::vector<std::uint32_t> labels;
    labels.reserve(lines.size() - first);
    for (std::size_t r = first; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        if (fields.size() != 2)
            throw FormatError(ErrorCode::RaggedRows, path.string() + ": line " + std::to_string(r + 1));
        bool ok = false;
        const double idx = parse_double(fields[0], ok);
        bool ok2 = false;
        const double cluster = parse_double(fields[1], ok2);
        if (!ok || !ok2 || idx != static_cast<double>(r - first) || cluster < 0)
            throw FormatError(ErrorCode::RaggedRows,
                              path.string() + ": line " + std::to_string(r + 1));
        labels.push_back(static_cast<std::uint32_t>(cluster));
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Selection manifest: JSON lines. First record is a header carrying the
// config echo, seed, generator name and the embedding content hash; then
// one record per sample in id order. File paths never appear here, so two
// runs over identical content are byte-identical regardless of layout.
// ---------------------------------------------------------------------------

struct ManifestConfigEcho {
    PruneConfig prune;
    bool normalize_clustering = true;
    std::string initial_mode = "global";
    std::string dedup_order = "ascending-index";
};

inline nlohmann::json config_echo_to_json(const ManifestConfigEcho& echo) {
    nlohmann::json j;
    j["k_clusters"] = echo.prune.k_clusters;
    j["budget_m"] = echo.prune.budget_m;
    j["alpha_plus"] = echo.prune.alpha_plus;
    j["alpha_minus"] = echo.prune.alpha_minus;
    j["beta"] = echo.prune.beta ? nlohmann::json(*echo.prune.beta) : nlohmann::json(nullptr);
    j["churn_target"] =
        echo.prune.churn_target ? nlohmann::json(*echo.prune.churn_target) : nlohmann::json(nullptr);
    j["seed"] = echo.prune.seed;
    j["bandwidth"] =
        echo.prune.bandwidth ? nlohmann::json(*echo.prune.bandwidth) : nlohmann::json(nullptr);
    j["signal_mode"] = signal_mode_name(echo.prune.signal_mode);
    j["normalize_clustering"] = echo.normalize_clustering;
    j["initial_mode"] = echo.initial_mode;
    j["dedup_order"] = echo.dedup_order;
    return j;
}

struct Manifest {
    PruneState state;
    std::vector<std::uint32_t> clusters;          // per sample
    std::vector<std::string> external_ids;        // empty or size n
    ManifestConfigEcho config;
    std::string embedding_hash;
    std::string generator;
};

inline std::string serialize_manifest(const Manifest& m) {
    const std::uint32_t n = m.state.n();
    nlohmann::json header;
    header["type"] = "header";
    header["version"] = 1;
    header["n"] = n;
    header["budget"] = m.config.prune.budget_m;
    header["kept"] = m.state.kept_count();
    header["stage"] = stage_name(m.state.stage);
    header["seed"] = m.config.prune.seed;
    header["generator"] = m.generator;
    header["embedding_hash"] = m.embedding_hash;
    header["config"] = config_echo_to_json(m.config);

    std::string out = header.dump();
    out += '\n';
    for (std::uint32_t i = 0; i < n; ++i) {
        nlohmann::json rec;
        rec["id"] = i;
        rec["external_id"] = m.external_ids.empty() ? nlohmann::json(nullptr)
                                                    : nlohmann::json(m.external_ids[i]);
        rec["cluster"] = m.clusters[i];
        rec["kept"] = static_cast<bool>(m.state.kept[i]);
        rec["stage"] = stage_name(m.state.stage);
        out += rec.dump();
        out += '\n';
    }
    return out;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    write_file_bytes(path, serialize_manifest(m));
}

inline Manifest parse_manifest(const std::string& bytes, const std::string& origin) {
    const auto lines = split_lines(bytes);
    if (lines.empty()) throw FormatError(ErrorCode::EmptyFile, origin);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(lines[0]);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(ErrorCode::TruncatedFile, origin + ": bad header: " + e.what());
    }
    if (!header.contains("type") || header["type"] != "header")
        throw FormatError(ErrorCode::TruncatedFile, origin + ": missing header record");

    Manifest m;
    const std::uint32_t n = header.at("n").get<std::uint32_t>();
    if (lines.size() != static_cast<std::size_t>(n) + 1)
        throw FormatError(ErrorCode::TruncatedFile,
                          origin + ": expected " + std::to_string(n + 1) + " records, got " +
                              std::to_string(lines.size()));
    m.embedding_hash = header.at("embedding_hash").get<std::string>();
    m.generator = header.at("generator").get<std::string>();
    const auto& cfg = header.at("config");
    m.config.prune.k_clusters = cfg.at("k_clusters").get<std::uint32_t>();
    m.config.prune.budget_m = cfg.at("budget_m").get<std::uint32_t>();
    m.config.prune.alpha_plus = cfg.at("alpha_plus").get<double>();
    m.config.prune.alpha_minus = cfg.at("alpha_minus").get<double>();
    if (!cfg.at("beta").is_null()) m.config.prune.beta = cfg.at("beta").get<double>();
    if (!cfg.at("churn_target").is_null())
        m.config.prune.churn_target = cfg.at("churn_target").get<double>();
    m.config.prune.seed = cfg.at("seed").get<std::uint64_t>();
    if (!cfg.at("bandwidth").is_null()) m.config.prune.bandwidth = cfg.at("bandwidth").get<double>();
    m.config.prune.signal_mode =
        cfg.at("signal_mode").get<std::string>() == "mean" ? SignalMode::mean : SignalMode::sum;
    m.config.normalize_clustering = cfg.at("normalize_clustering").get<bool>();
    m.config.initial_mode = cfg.at("initial_mode").get<std::string>();
    m.config.dedup_order = cfg.at("dedup_order").get<std::string>();

    const std::string stage = header.at("stage").get<std::string>();
    m.state.stage = stage == "init" ? Stage::initial : Stage::final_;
    m.state.kept.assign(n, 0);
    m.clusters.assign(n, 0);
    bool any_external = false;
    std::vector<std::string> externals(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(lines[i + 1]);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(ErrorCode::TruncatedFile,
                              origin + ": bad record " + std::to_string(i) + ": " + e.what());
        }
        if (rec.at("id").get<std::uint32_t>() != i)
            throw FormatError(ErrorCode::TruncatedFile, origin + ": record out of order at " +
                                                            std::to_string(i));
        m.state.kept[i] = rec.at("kept").get<bool>() ? 1 : 0;
        m.clusters[i] = rec.at("cluster").get<std::uint32_t>();
        if (!rec.at("external_id").is_null()) {
            externals[i] = rec.at("external_id").get<std::string>();
            any_external = true;
        }
    }
    if (any_external) m.external_ids = std::move(externals);

    const std::uint32_t declared_kept = header.at("kept").get<std::uint32_t>();
    if (declared_kept != m.state.kept_count())
        throw FormatError(ErrorCode::TruncatedFile, origin + ": kept count mismatch");
    if (declared_kept != m.config.prune.budget_m)
        throw FormatError(ErrorCode::TruncatedFile,
                          origin + ": kept count " + std::to_string(declared_kept) +
                              " does not match the recorded budget " +
                              std::to_string(m.config.prune.budget_m));

    std::uint32_t k = 0;
    for (auto c : m.clusters) k = std::max(k, c + 1);
    ClusterAssignment assignment;
    assignment.k = k;
    assignment.labels = m.clusters;
    m.state.gamma = compute_gamma(m.state.kept, assignment);
    return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    return parse_manifest(read_file_bytes(path), path.string());
}

// Verifies the recorded hash against an embedding matrix; catches any
// single-byte corruption of the embedding file.
inline void verify_manifest_hash(const Manifest& m, const EmbeddingMatrix& embeddings) {
    const std::string actual = embedding_content_hash(embeddings);
    if (actual != m.embedding_hash)
        throw FormatError(ErrorCode::HashMismatch,
                          "manifest records " + m.embedding_hash + " but embeddings hash to " + actual);
}

}  // namespace adadedup
