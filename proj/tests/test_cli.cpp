#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "adadedup/io.hpp"
#include "adadedup/synth.hpp"

using namespace adadedup;
namespace fs = std::filesystem;

namespace {

const char* cli_path() { return ADADEDUP_CLI_PATH; }

struct RunResult {
    int exit_code = 0;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string command = std::string(cli_path()) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char buffer[512];
    while (fgets(buffer, sizeof(buffer), pipe)) result.output += buffer;
    const int status = pclose(pipe);
    result.exit_code = WEXITSTATUS(status);
    return result;
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir =
        fs::temp_directory_path() / ("adadedup_cli_" + std::to_string(::getpid()) + "_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_small_config(const fs::path& path, const fs::path& embeddings, const fs::path& out,
                        const std::string& extra = "") {
    std::string config = "{\n";
    config += "  \"embeddings\": \"" + embeddings.string() + "\",\n";
    config += "  \"out\": \"" + out.string() + "\",\n";
    config += "  \"k_clusters\": 3,\n  \"budget_m\": 24,\n  \"seed\": 5,\n";
    config += "  \"signal_mode\": \"mean\"";
    if (!extra.empty()) config += ",\n  " + extra;
    config += "\n}\n";
    write_file_bytes(path, config);
}

fs::path make_embeddings(const fs::path& dir) {
    SynthSpec spec;
    spec.d = 4;
    spec.seed = 21;
    spec.sizes = {15, 15, 10};
    spec.spreads = {0.05, 1.0, 2.0};
    spec.duplicate_fractions = {0.5, 0.0, 0.0};
    spec.centers = {{0, 0, 0, 0}, {30, 0, 0, 0}, {0, 30, 0, 0}};
    const auto data = generate(spec);
    const fs::path path = dir / "embeddings.bin";
    write_embeddings(path, data.embeddings);
    return path;
}

}  // namespace

TEST_CASE("cli: full run succeeds and is byte-identical on rerun") {
    const auto dir = fresh_dir("run");
    const auto embeddings = make_embeddings(dir);
    const auto out1 = dir / "out1";
    const auto out2 = dir / "out2";
    write_small_config(dir / "config.json", embeddings, out1);

    const auto first = run_cli("--config " + (dir / "config.json").string() + " run");
    REQUIRE(first.exit_code == 0);

    const auto second =
        run_cli("--config " + (dir / "config.json").string() + " --out " + out2.string() + " run");
    REQUIRE(second.exit_code == 0);

    for (const char* name : {"assignment.csv", "centroids.bin", "manifest_initial.jsonl",
                             "losses.csv", "adapt_report.csv", "manifest_final.jsonl",
                             "run_summary.json"}) {
        REQUIRE(fs::exists(out1 / name));
        REQUIRE(read_file_bytes(out1 / name) == read_file_bytes(out2 / name));
    }
    const auto manifest = read_manifest(out1 / "manifest_final.jsonl");
    REQUIRE(manifest.state.kept_count() == 24);
}

TEST_CASE("cli: threads flag does not change outputs") {
    const auto dir = fresh_dir("threads");
    const auto embeddings = make_embeddings(dir);
    write_small_config(dir / "config.json", embeddings, dir / "t1");
    REQUIRE(run_cli("--config " + (dir / "config.json").string() + " --threads 1 run").exit_code ==
            0);
    REQUIRE(run_cli("--config " + (dir / "config.json").string() + " --out " +
                    (dir / "t2").string() + " --threads 2 run")
                .exit_code == 0);
    for (const char* name : {"manifest_initial.jsonl", "losses.csv", "manifest_final.jsonl"})
        REQUIRE(read_file_bytes(dir / "t1" / name) == read_file_bytes(dir / "t2" / name));
}

TEST_CASE("cli: unknown config key is a config error (exit 2)") {
    const auto dir = fresh_dir("badkey");
    const auto embeddings = make_embeddings(dir);
    write_small_config(dir / "config.json", embeddings, dir / "out", "\"typo_key\": 1");
    const auto result = run_cli("--config " + (dir / "config.json").string() + " run");
    REQUIRE(result.exit_code == 2);
    REQUIRE(result.output.find("UnknownKey") != std::string::npos);
}

TEST_CASE("cli: corrupt embedding file is an input error (exit 3)") {
    const auto dir = fresh_dir("badmagic");
    const fs::path bad = dir / "bad.bin";
    write_file_bytes(bad, "NOTMAGIC-------------");
    write_small_config(dir / "config.json", bad, dir / "out");
    const auto result = run_cli("--config " + (dir / "config.json").string() + " run");
    REQUIRE(result.exit_code == 3);
    REQUIRE(result.output.find("BadMagic") != std::string::npos);
}

TEST_CASE("cli: k larger than n is a precondition error (exit 4)") {
    const auto dir = fresh_dir("ktoolarge");
    EmbeddingMatrix tiny;
    tiny.n = 2;
    tiny.d = 2;
    tiny.values = {0.f, 0.f, 1.f, 1.f};
    write_embeddings(dir / "tiny.bin", tiny);
    write_file_bytes(dir / "config.json",
                     "{\"embeddings\": \"" + (dir / "tiny.bin").string() +
                         "\", \"out\": \"" + (dir / "out").string() +
                         "\", \"k_clusters\": 5, \"budget_m\": 2}");
    const auto result = run_cli("--config " + (dir / "config.json").string() + " cluster");
    REQUIRE(result.exit_code == 4);
    REQUIRE(result.output.find("KTooLarge") != std::string::npos);
}

TEST_CASE("cli: missing stage input fails cleanly") {
    const auto dir = fresh_dir("missing");
    const auto embeddings = make_embeddings(dir);
    write_small_config(dir / "config.json", embeddings, dir / "out");
    // adapt before prune-init: no manifest yet
    const auto result = run_cli("--config " + (dir / "config.json").string() + " adapt");
    REQUIRE(result.exit_code == 3);
}

TEST_CASE("cli: baseline selectors write exact-budget manifests") {
    const auto dir = fresh_dir("baseline");
    const auto embeddings = make_embeddings(dir);
    write_small_config(dir / "config.json", embeddings, dir / "out");
    const std::string base = "--config " + (dir / "config.json").string();

    REQUIRE(run_cli(base + " baseline --selector random").exit_code == 0);
    const auto random_manifest = read_manifest(dir / "out" / "manifest_baseline_random.jsonl");
    REQUIRE(random_manifest.state.kept_count() == 24);

    REQUIRE(run_cli(base + " baseline --selector global-dedup").exit_code == 0);
    REQUIRE(read_manifest(dir / "out" / "manifest_baseline_global-dedup.jsonl")
                .state.kept_count() == 24);

    // sse-uniform needs the assignment file
    const auto before = run_cli(base + " baseline --selector sse-uniform");
    REQUIRE(before.exit_code == 3);
    REQUIRE(run_cli(base + " cluster").exit_code == 0);
    REQUIRE(run_cli(base + " baseline --selector sse-uniform").exit_code == 0);
    REQUIRE(read_manifest(dir / "out" / "manifest_baseline_sse-uniform.jsonl")
                .state.kept_count() == 24);
}

TEST_CASE("cli: synth echoes the canonical spec and reruns identically") {
    const auto dir = fresh_dir("synth");
    write_file_bytes(dir / "spec.json", "{\"preset\": \"heterogeneous-6\", \"seed\": 12}");
    REQUIRE(run_cli("synth --spec " + (dir / "spec.json").string() + " --out " +
                    (dir / "s1").string())
                .exit_code == 0);
    const auto m = read_embeddings(dir / "s1" / "embeddings.bin");
    REQUIRE(m.n == 1000);
    REQUIRE(m.d == 16);
    REQUIRE(run_cli("synth --spec " + (dir / "spec.json").string() + " --out " +
                    (dir / "s2").string())
                .exit_code == 0);
    REQUIRE(read_file_bytes(dir / "s1" / "embeddings.bin") ==
            read_file_bytes(dir / "s2" / "embeddings.bin"));

    // inconsistent sizes in an explicit spec
    write_file_bytes(dir / "bad.json",
                     "{\"d\": 2, \"sizes\": [5, 5], \"spreads\": [1.0], "
                     "\"duplicate_fractions\": [0, 0]}");
    REQUIRE(run_cli("synth --spec " + (dir / "bad.json").string() + " --out " +
                    (dir / "s3").string())
                .exit_code == 2);
}

TEST_CASE("cli: embed-import converts csv and keeps external ids") {
    const auto dir = fresh_dir("import");
    write_file_bytes(dir / "in.csv", "id,x,y\nalpha,1,2\nbeta,3,4\n");
    REQUIRE(run_cli("embed-import --csv " + (dir / "in.csv").string() + " --header --out " +
                    (dir / "imp").string())
                .exit_code == 0);
    const auto m = read_embeddings(dir / "imp" / "embeddings.bin");
    REQUIRE(m.n == 2);
    REQUIRE(m.d == 2);
    REQUIRE(read_file_bytes(dir / "imp" / "external_ids.txt") == "alpha\nbeta\n");
}

TEST_CASE("cli: report writes both diagnostics tables with one row per cluster") {
    const auto dir = fresh_dir("report");
    const auto embeddings = make_embeddings(dir);
    write_small_config(dir / "config.json", embeddings, dir / "out");
    const std::string base = "--config " + (dir / "config.json").string();
    REQUIRE(run_cli(base + " run").exit_code == 0);
    REQUIRE(run_cli(base + " report").exit_code == 0);

    const auto loss_summary = split_lines(read_file_bytes(dir / "out" / "loss_summary.csv"));
    REQUIRE(loss_summary.size() == 4);  // header + 3 clusters
    REQUIRE(loss_summary[0] == "cluster,size,kept,pruned,loss_kept,loss_pruned,delta");
    const auto knn = split_lines(read_file_bytes(dir / "out" / "knn_distances.csv"));
    REQUIRE(knn.size() == 4);
    REQUIRE(knn[0] == "cluster,size,mean_knn_distance");

    // rerun reproduces the tables byte for byte
    const auto first = read_file_bytes(dir / "out" / "loss_summary.csv");
    REQUIRE(run_cli(base + " report").exit_code == 0);
    REQUIRE(read_file_bytes(dir / "out" / "loss_summary.csv") == first);
}

TEST_CASE("cli: two-matrix mode clusters on the secondary embeddings") {
    const auto dir = fresh_dir("twomatrix");
    const auto embeddings = make_embeddings(dir);
    // secondary matrix: same rows scaled, so the same partition falls out
    auto matrix = read_embeddings(embeddings);
    for (auto& v : matrix.values) v *= 0.25f;
    write_embeddings(dir / "semantic.bin", matrix);

    write_small_config(dir / "config.json", embeddings, dir / "out",
                       "\"cluster_embeddings\": \"" + (dir / "semantic.bin").string() + "\"");
    REQUIRE(run_cli("--config " + (dir / "config.json").string() + " run").exit_code == 0);
    const auto manifest = read_manifest(dir / "out" / "manifest_final.jsonl");
    REQUIRE(manifest.state.kept_count() == 24);
    // the recorded hash is the pruning matrix's, not the clustering one's
    REQUIRE_NOTHROW(verify_manifest_hash(manifest, read_embeddings(embeddings)));

    // mismatched row counts are rejected
    auto bad = matrix;
    bad.n -= 1;
    bad.values.resize(static_cast<std::size_t>(bad.n) * bad.d);
    write_embeddings(dir / "semantic.bin", bad);
    REQUIRE(run_cli("--config " + (dir / "config.json").string() + " run").exit_code == 4);
}

TEST_CASE("bench harness writes comparison tables and a summary") {
    const auto dir = fresh_dir("bench");
    write_file_bytes(dir / "spec.json",
                     "{\"d\": 3, \"seed\": 8, \"sizes\": [20, 20], \"spreads\": [0.05, 1.5], "
                     "\"duplicate_fractions\": [0.5, 0.0], \"centers\": [[0,0,0], [20,0,0]]}");
    const fs::path bench = fs::path(cli_path()).parent_path() / "adadedup-bench";
    const std::string command = bench.string() + " --spec " + (dir / "spec.json").string() +
                                " --out " + (dir / "res").string() +
                                " --budget 24 --trials 2 --k 2 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buffer[256];
    while (fgets(buffer, sizeof(buffer), pipe)) output += buffer;
    REQUIRE(WEXITSTATUS(pclose(pipe)) == 0);
    REQUIRE(output.find("selector,mean_J,std_J") != std::string::npos);

    const auto table = split_lines(read_file_bytes(dir / "res" / "comparison.csv"));
    REQUIRE(table[0] == "selector,trial,J,budget,seed");
    REQUIRE(table.size() == 1 + 4 * 2);  // four selectors, two trials
    const auto counts = split_lines(read_file_bytes(dir / "res" / "keep_counts.csv"));
    REQUIRE(counts[0] == "selector,trial,cluster,size,kept");
    REQUIRE(counts.size() == 1 + 4 * 2 * 2);  // ... times two generator clusters
}

TEST_CASE("cli: beta zero yields a final manifest matching the initial selection") {
    const auto dir = fresh_dir("beta0");
    const auto embeddings = make_embeddings(dir);
    write_small_config(dir / "config.json", embeddings, dir / "out", "\"beta\": 0.0");
    REQUIRE(run_cli("--config " + (dir / "config.json").string() + " run").exit_code == 0);
    const auto initial = read_manifest(dir / "out" / "manifest_initial.jsonl");
    const auto final_manifest = read_manifest(dir / "out" / "manifest_final.jsonl");
    REQUIRE(final_manifest.state.kept == initial.state.kept);
}
