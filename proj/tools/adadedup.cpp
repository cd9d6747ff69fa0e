// Command-line pipeline around the adadedup library. Every stage reads and
// writes plain files so external proxy-model training can be spliced in
// between prune-init and adapt.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adadedup/adadedup.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfigFile {
    adadedup::RunOptions options;
    std::optional<double> prune_ratio;  // resolved against n when known
    bool has_budget_m = false;
    fs::path embeddings;
    std::optional<fs::path> cluster_embeddings;
    std::optional<fs::path> losses;
    std::optional<fs::path> external_ids;
    fs::path out;
    std::uint32_t threads = 0;
};

const std::vector<std::string> kKnownKeys = {
    "embeddings", "cluster_embeddings", "losses",        "external_ids",  "out",
    "k_clusters", "budget_m",           "prune_ratio",   "alpha_plus",    "alpha_minus",
    "beta",       "churn_target",       "seed",          "bandwidth",     "signal_mode",
    "normalize_clustering", "initial_mode", "kmeans_max_iters", "kmeans_tol", "knn_k",
    "bandwidth_subsample",  "threads"};

RunConfigFile load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(adadedup::read_file_bytes(path));
    } catch (const json::exception& e) {
        throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec,
                                    path.string() + ": " + e.what());
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end())
            throw adadedup::ConfigError(adadedup::ErrorCode::UnknownKey,
                                        path.string() + ": '" + key + "'");
    }

    RunConfigFile cfg;
    if (j.contains("embeddings")) cfg.embeddings = j.at("embeddings").get<std::string>();
    if (j.contains("cluster_embeddings"))
        cfg.cluster_embeddings = fs::path(j.at("cluster_embeddings").get<std::string>());
    if (j.contains("losses")) cfg.losses = fs::path(j.at("losses").get<std::string>());
    if (j.contains("external_ids"))
        cfg.external_ids = fs::path(j.at("external_ids").get<std::string>());
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();

    auto& prune = cfg.options.prune;
    if (j.contains("k_clusters")) prune.k_clusters = j.at("k_clusters").get<std::uint32_t>();
    if (j.contains("budget_m")) {
        prune.budget_m = j.at("budget_m").get<std::uint32_t>();
        cfg.has_budget_m = true;
    }
    if (j.contains("prune_ratio")) cfg.prune_ratio = j.at("prune_ratio").get<double>();
    if (cfg.has_budget_m && cfg.prune_ratio)
        throw adadedup::ConfigError(adadedup::ErrorCode::AmbiguousBeta,
                                    "budget_m and prune_ratio are mutually exclusive");
    if (!cfg.has_budget_m && !cfg.prune_ratio)
        throw adadedup::ConfigError(adadedup::ErrorCode::BudgetOutOfRange,
                                    "one of budget_m / prune_ratio is required");
    if (j.contains("alpha_plus")) prune.alpha_plus = j.at("alpha_plus").get<double>();
    if (j.contains("alpha_minus")) prune.alpha_minus = j.at("alpha_minus").get<double>();
    if (j.contains("beta")) prune.beta = j.at("beta").get<double>();
    if (j.contains("churn_target")) prune.churn_target = j.at("churn_target").get<double>();
    if (j.contains("seed")) prune.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("bandwidth")) prune.bandwidth = j.at("bandwidth").get<double>();
    if (j.contains("signal_mode")) {
        const auto mode = j.at("signal_mode").get<std::string>();
        if (mode == "sum")
            prune.signal_mode = adadedup::SignalMode::sum;
        else if (mode == "mean")
            prune.signal_mode = adadedup::SignalMode::mean;
        else
            throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec,
                                        "signal_mode must be sum or mean");
    }
    if (j.contains("normalize_clustering"))
        cfg.options.kmeans.normalize = j.at("normalize_clustering").get<bool>();
    if (j.contains("initial_mode")) {
        const auto mode = j.at("initial_mode").get<std::string>();
        if (mode == "global")
            cfg.options.initial_mode = adadedup::InitialMode::global;
        else if (mode == "cluster-uniform")
            cfg.options.initial_mode = adadedup::InitialMode::cluster_uniform;
        else
            throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec,
                                        "initial_mode must be global or cluster-uniform");
    }
    if (j.contains("kmeans_max_iters"))
        cfg.options.kmeans.max_iters = j.at("kmeans_max_iters").get<std::uint32_t>();
    if (j.contains("kmeans_tol")) cfg.options.kmeans.tol = j.at("kmeans_tol").get<double>();
    if (j.contains("knn_k")) cfg.options.knn_k = j.at("knn_k").get<std::uint32_t>();
    if (j.contains("bandwidth_subsample"))
        cfg.options.bandwidth_subsample = j.at("bandwidth_subsample").get<std::uint32_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<std::uint32_t>();
    return cfg;
}

std::uint32_t resolve_budget(RunConfigFile& cfg, std::uint32_t n) {
    if (cfg.prune_ratio)
        cfg.options.prune.budget_m = adadedup::budget_from_prune_ratio(*cfg.prune_ratio, n);
    return cfg.options.prune.budget_m;
}

std::vector<std::string> load_external_ids(const RunConfigFile& cfg, std::uint32_t n) {
    if (!cfg.external_ids) return {};
    auto lines = adadedup::split_lines(adadedup::read_file_bytes(*cfg.external_ids));
    if (lines.size() != n)
        throw adadedup::FormatError(adadedup::ErrorCode::TruncatedFile,
                                    cfg.external_ids->string() + ": expected " + std::to_string(n) +
                                        " ids, got " + std::to_string(lines.size()));
    return lines;
}

adadedup::ClusterAssignment load_assignment(const RunConfigFile& cfg, std::uint32_t n) {
    const fs::path labels_path = cfg.out / "assignment.csv";
    const fs::path centroids_path = cfg.out / "centroids.bin";
    adadedup::ClusterAssignment a = adadedup::read_centroids(centroids_path);
    a.labels = adadedup::read_assignment_table(labels_path);
    if (a.labels.size() != n)
        throw adadedup::FormatError(adadedup::ErrorCode::TruncatedFile,
                                    "assignment covers " + std::to_string(a.labels.size()) +
                                        " samples, embeddings have " + std::to_string(n));
    std::uint32_t max_label = 0;
    for (auto l : a.labels) max_label = std::max(max_label, l);
    if (max_label >= a.k)
        throw adadedup::FormatError(adadedup::ErrorCode::TruncatedFile,
                                    "assignment labels exceed centroid count");
    return a;
}

struct StageFile {
    std::string name;
    std::string hash;
};

void write_stage_file(const fs::path& out_dir, const std::string& name, const std::string& bytes,
                      std::vector<StageFile>* summary) {
    adadedup::write_file_bytes(out_dir / name, bytes);
    if (summary) summary->push_back({name, adadedup::fnv1a64_hex(bytes)});
}

// ---------------------------------------------------------------------------
// Stage commands. Each one is file-in, file-out so reruns are byte-exact.
// ---------------------------------------------------------------------------

void cmd_synth(const fs::path& spec_path, const fs::path& out_dir,
               std::vector<StageFile>* summary = nullptr) {
    json j;
    try {
        j = json::parse(adadedup::read_file_bytes(spec_path));
    } catch (const json::exception& e) {
        throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec, e.what());
    }
    const adadedup::SynthSpec spec = adadedup::spec_from_json(j);
    const adadedup::SynthResult data = adadedup::generate(spec);
    fs::create_directories(out_dir);
    write_stage_file(out_dir, "embeddings.bin", adadedup::serialize_embeddings(data.embeddings),
                     summary);
    std::string labels = "sample_id,cluster\n";
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        labels += std::to_string(i) + "," + std::to_string(data.labels[i]) + "\n";
    write_stage_file(out_dir, "labels_true.csv", labels, summary);
    std::cout << "synth: n=" << data.embeddings.n << " d=" << data.embeddings.d
              << " clusters=" << spec.k() << "\n";
}

void cmd_embed_import(const fs::path& csv_path, bool has_header, const fs::path& out_dir) {
    const adadedup::CsvImport import = adadedup::import_csv_embeddings(csv_path, has_header);
    fs::create_directories(out_dir);
    adadedup::write_embeddings(out_dir / "embeddings.bin", import.matrix);
    if (!import.external_ids.empty()) {
        std::string ids;
        for (const auto& id : import.external_ids) ids += id + "\n";
        adadedup::write_file_bytes(out_dir / "external_ids.txt", ids);
    }
    std::cout << "imported: n=" << import.matrix.n << " d=" << import.matrix.d
              << (import.external_ids.empty() ? "" : " (with external ids)") << "\n";
}

void cmd_cluster(RunConfigFile& cfg, std::vector<StageFile>* summary = nullptr) {
    const auto embeddings = adadedup::read_embeddings(cfg.embeddings);
    const auto cluster_matrix =
        cfg.cluster_embeddings ? adadedup::read_embeddings(*cfg.cluster_embeddings) : embeddings;
    if (cluster_matrix.n != embeddings.n)
        throw adadedup::PreconditionError(adadedup::ErrorCode::DimensionMismatch,
                                          "cluster_embeddings row count differs");
    const auto assignment = adadedup::kmeans_fit(cluster_matrix, cfg.options.prune.k_clusters,
                                                 cfg.options.prune.seed, cfg.options.kmeans);
    fs::create_directories(cfg.out);
    write_stage_file(cfg.out, "assignment.csv",
                     adadedup::serialize_assignment_table(assignment.labels), summary);
    write_stage_file(cfg.out, "centroids.bin", adadedup::serialize_centroids(assignment), summary);
    std::cout << "cluster: k=" << assignment.k << " seed=" << cfg.options.prune.seed
              << " inertia=" << adadedup::format_double(assignment.inertia) << "\n";
}

void cmd_prune_init(RunConfigFile& cfg, std::vector<StageFile>* summary = nullptr) {
    const auto embeddings = adadedup::read_embeddings(cfg.embeddings);
    const auto assignment = load_assignment(cfg, embeddings.n);
    const std::uint32_t budget = resolve_budget(cfg, embeddings.n);
    adadedup::validate_config(cfg.options.prune, embeddings.n);
    const auto order = adadedup::DedupOrder::ascending(embeddings.n);
    const auto state =
        adadedup::initial_prune(embeddings, assignment, budget, order, cfg.options.initial_mode);
    const auto manifest = adadedup::make_manifest(state, assignment, cfg.options, embeddings,
                                                  load_external_ids(cfg, embeddings.n));
    fs::create_directories(cfg.out);
    write_stage_file(cfg.out, "manifest_initial.jsonl", adadedup::serialize_manifest(manifest),
                     summary);
    std::cout << "prune-init: kept=" << state.kept_count() << "/" << embeddings.n << "\n";
}

void cmd_losses(RunConfigFile& cfg, std::vector<StageFile>* summary = nullptr) {
    const auto embeddings = adadedup::read_embeddings(cfg.embeddings);
    const auto manifest = adadedup::read_manifest(cfg.out / "manifest_initial.jsonl");
    adadedup::verify_manifest_hash(manifest, embeddings);
    adadedup::LossTable table;
    if (cfg.losses) {
        table = adadedup::import_losses(*cfg.losses, embeddings.n);
    } else {
        const double bandwidth = adadedup::resolve_bandwidth(embeddings, cfg.options);
        table = adadedup::kde_proxy_losses(embeddings, manifest.state.kept_set(), bandwidth);
    }
    write_stage_file(cfg.out, "losses.csv", adadedup::serialize_loss_table(table), summary);
    std::cout << "losses: " << (cfg.losses ? "external" : "kde-proxy") << " n=" << embeddings.n
              << "\n";
}

void cmd_adapt(RunConfigFile& cfg, std::vector<StageFile>* summary = nullptr) {
    const auto embeddings = adadedup::read_embeddings(cfg.embeddings);
    auto manifest = adadedup::read_manifest(cfg.out / "manifest_initial.jsonl");
    adadedup::verify_manifest_hash(manifest, embeddings);
    const auto assignment = load_assignment(cfg, embeddings.n);
    const auto losses = adadedup::read_loss_table(cfg.out / "losses.csv", embeddings.n);
    resolve_budget(cfg, embeddings.n);
    const auto config = adadedup::validate_config(cfg.options.prune, embeddings.n);
    const auto order = adadedup::DedupOrder::ascending(embeddings.n);

    const auto adapted = adadedup::adapt(manifest.state, losses, assignment, config);
    const auto final_state = adadedup::final_selection(embeddings, manifest.state, assignment,
                                                       adapted.keep_counts, order);

    adadedup::RunOptions echo_options = cfg.options;
    echo_options.prune = config;
    const auto final_manifest = adadedup::make_manifest(final_state, assignment, echo_options,
                                                        embeddings, manifest.external_ids);
    write_stage_file(cfg.out, "adapt_report.csv",
                     adadedup::serialize_adaptation_report(adapted.summaries, adapted.adjustments,
                                                           manifest.state.gamma,
                                                           adapted.keep_counts),
                     summary);
    write_stage_file(cfg.out, "manifest_final.jsonl",
                     adadedup::serialize_manifest(final_manifest), summary);
    std::cout << "adapt: beta=" << adadedup::format_double(adapted.resolved_beta)
              << " kept=" << final_state.kept_count() << "/" << embeddings.n << "\n";
}

void cmd_baseline(RunConfigFile& cfg, const std::string& selector) {
    const auto embeddings = adadedup::read_embeddings(cfg.embeddings);
    const std::uint32_t budget = resolve_budget(cfg, embeddings.n);
    adadedup::validate_config(cfg.options.prune, embeddings.n);
    const auto order = adadedup::DedupOrder::ascending(embeddings.n);

    adadedup::IndexSet kept;
    adadedup::ClusterAssignment assignment;
    assignment.k = 1;
    assignment.labels.assign(embeddings.n, 0);
    if (selector == "random") {
        kept = adadedup::random_select(embeddings.n, budget, cfg.options.prune.seed);
    } else if (selector == "global-dedup") {
        kept = adadedup::global_dedup_select(embeddings, budget, order);
    } else if (selector == "sse-uniform") {
        assignment = load_assignment(cfg, embeddings.n);
        kept = adadedup::cluster_uniform_dedup_select(embeddings, assignment, budget, order);
    } else {
        throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec,
                                    "selector must be random, global-dedup or sse-uniform");
    }
    const auto state = adadedup::make_prune_state(kept, assignment, adadedup::Stage::final_);
    const auto manifest = adadedup::make_manifest(state, assignment, cfg.options, embeddings,
                                                  load_external_ids(cfg, embeddings.n));
    fs::create_directories(cfg.out);
    adadedup::write_file_bytes(cfg.out / ("manifest_baseline_" + selector + ".jsonl"),
                               adadedup::serialize_manifest(manifest));
    std::cout << "baseline " << selector << ": kept=" << state.kept_count() << "/" << embeddings.n
              << "\n";
}

void cmd_report(RunConfigFile& cfg) {
    const auto embeddings = adadedup::read_embeddings(cfg.embeddings);
    const fs::path final_path = cfg.out / "manifest_final.jsonl";
    const fs::path initial_path = cfg.out / "manifest_initial.jsonl";
    const auto manifest =
        adadedup::read_manifest(fs::exists(final_path) ? final_path : initial_path);
    adadedup::verify_manifest_hash(manifest, embeddings);
    const auto losses = adadedup::read_loss_table(cfg.out / "losses.csv", embeddings.n);

    adadedup::ClusterAssignment assignment;
    assignment.k = 0;
    for (auto c : manifest.clusters) assignment.k = std::max(assignment.k, c + 1);
    assignment.labels = manifest.clusters;

    const auto summaries = adadedup::differential_loss(losses, manifest.state, assignment,
                                                       cfg.options.prune.signal_mode);
    std::string loss_summary = "cluster,size,kept,pruned,loss_kept,loss_pruned,delta\n";
    for (const auto& s : summaries) {
        loss_summary += std::to_string(s.cluster) + "," + std::to_string(s.size) + "," +
                        std::to_string(s.kept_count) + "," + std::to_string(s.pruned_count) + ",";
        loss_summary += s.kept_count == 0 ? "" : adadedup::format_double(s.kept_loss_sum);
        loss_summary += ",";
        loss_summary += s.pruned_count == 0 ? "" : adadedup::format_double(s.pruned_loss_sum);
        loss_summary += "," + adadedup::format_double(s.delta) + "\n";
    }
    adadedup::write_file_bytes(cfg.out / "loss_summary.csv", loss_summary);

    const auto knn = adadedup::knn_distance_report(embeddings, assignment, cfg.options.knn_k);
    adadedup::write_file_bytes(cfg.out / "knn_distances.csv", adadedup::serialize_knn_report(knn));
    std::cout << "report: " << summaries.size() << " clusters\n";
}

void cmd_run(RunConfigFile& cfg) {
    std::vector<StageFile> summary;
    cmd_cluster(cfg, &summary);
    cmd_prune_init(cfg, &summary);
    cmd_losses(cfg, &summary);
    cmd_adapt(cfg, &summary);

    json j;
    j["stages"] = json::array();
    for (const auto& f : summary) j["stages"].push_back({{"file", f.name}, {"hash", f.hash}});
    j["config"] = adadedup::config_echo_to_json(adadedup::make_config_echo(cfg.options));
    adadedup::write_file_bytes(cfg.out / "run_summary.json", j.dump(2) + "\n");
    std::cout << "run: complete, " << summary.size() << " stage files\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage adaptive de-duplication over precomputed embeddings"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string config_path;
    std::string out_override;
    std::int64_t seed_override = -1;
    std::uint32_t threads = 0;
    app.add_option("--config", config_path, "Run configuration (JSON)");
    app.add_option("--out", out_override, "Output directory (overrides config)");
    app.add_option("--seed", seed_override, "Seed override");
    app.add_option("--threads", threads, "Worker threads (0 = auto)");

    auto* sub_cluster = app.add_subcommand("cluster", "Fit k-means and write the assignment");
    auto* sub_init = app.add_subcommand("prune-init", "Stage 1: density pruning to the budget");
    auto* sub_losses = app.add_subcommand("losses", "Proxy losses for the initial selection");
    auto* sub_adapt = app.add_subcommand("adapt", "Stage 2: adaptive re-pruning");
    auto* sub_run = app.add_subcommand("run", "All stages in sequence");
    auto* sub_report = app.add_subcommand("report", "Per-cluster diagnostics tables");

    auto* sub_baseline = app.add_subcommand("baseline", "Comparison selector");
    std::string selector;
    sub_baseline->add_option("--selector", selector, "random | global-dedup | sse-uniform")
        ->required();

    auto* sub_synth = app.add_subcommand("synth", "Generate a synthetic embedding file");
    std::string spec_path;
    sub_synth->add_option("--spec", spec_path, "Synthetic spec (JSON)")->required();

    auto* sub_import = app.add_subcommand("embed-import", "Convert CSV embeddings to binary");
    std::string csv_path;
    bool csv_header = false;
    sub_import->add_option("--csv", csv_path, "Input CSV")->required();
    sub_import->add_flag("--header", csv_header, "First line is a header");

    CLI11_PARSE(app, argc, argv);

    try {
        adadedup::set_thread_count(threads);

        RunConfigFile cfg;
        const bool needs_config = !sub_synth->parsed() && !sub_import->parsed();
        if (needs_config) {
            if (config_path.empty())
                throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec, "--config is required");
            cfg = load_config(config_path);
            if (!out_override.empty()) cfg.out = out_override;
            if (seed_override >= 0)
                cfg.options.prune.seed = static_cast<std::uint64_t>(seed_override);
            if (cfg.out.empty())
                throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec,
                                            "no output directory configured");
        }

        if (sub_synth->parsed()) {
            if (out_override.empty())
                throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec, "--out is required");
            cmd_synth(spec_path, out_override);
        } else if (sub_import->parsed()) {
            if (out_override.empty())
                throw adadedup::ConfigError(adadedup::ErrorCode::InvalidSpec, "--out is required");
            cmd_embed_import(csv_path, csv_header, out_override);
        } else if (sub_cluster->parsed()) {
            cmd_cluster(cfg);
        } else if (sub_init->parsed()) {
            cmd_prune_init(cfg);
        } else if (sub_losses->parsed()) {
            cmd_losses(cfg);
        } else if (sub_adapt->parsed()) {
            cmd_adapt(cfg);
        } else if (sub_run->parsed()) {
            cmd_run(cfg);
        } else if (sub_baseline->parsed()) {
            cmd_baseline(cfg, selector);
        } else if (sub_report->parsed()) {
            cmd_report(cfg);
        }
        return 0;
    } catch (const adadedup::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const adadedup::FormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const adadedup::PreconditionError& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
