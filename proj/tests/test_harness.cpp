#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "exbench/harness.hpp"
#include "exbench/metrics.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace exbench;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

std::string small_config_json(const std::string& out_dir) {
    return R"({
      "name": "tiny",
      "dataset": {"synthetic": {
        "d": 12, "n": 160, "noise_rate": 0.0, "seed": 5,
        "label_names": ["benign", "malicious"],
        "rule_sets": [
          [[{"feature":0,"bit":0},{"feature":1,"bit":0}]],
          [[{"feature":0,"bit":1},{"feature":1,"bit":1}]]
        ]
      }},
      "split": {"policy": "per_class"},
      "family": {
        "algorithm": "random_forest", "tree_count": 6, "seed": 3,
        "variation": {"rf_tree_counts": [5, 6]}, "base_value": 6
      },
      "approaches": ["lime", "shap"],
      "explainer_params": {
        "lime": {"t": 100},
        "shap": {"coalition_count": 60}
      },
      "k_max": 4,
      "breakdown_k": 2,
      "explain_samples": 6,
      "bench_samples": 2,
      "seed": 11,
      "jobs": 2,
      "output_dir": ")" + out_dir + R"("
    })";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// Caches record wall-clock per line; strip it before comparing runs.
std::string cache_modulo_elapsed(const std::string& path) {
    std::ifstream in(path);
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto doc = nlohmann::json::parse(line);
        doc["elapsed_s"] = 0.0;
        out += doc.dump() + "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("config validation lists every violation") {
    std::string bad = R"({
      "name": "broken",
      "split": {"policy": "nope", "train_fraction": 2.0},
      "approaches": [],
      "k_max": 0
    })";
    try {
        parse_experiment_config(bad);
        FAIL("expected validation failure");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("dataset") != std::string::npos);
        CHECK(msg.find("policy") != std::string::npos);
        CHECK(msg.find("train_fraction") != std::string::npos);
        CHECK(msg.find("approach") != std::string::npos);
        CHECK(msg.find("k_max") != std::string::npos);
        CHECK(msg.find("classifier") != std::string::npos);
    }
}

TEST_CASE("config snapshot round-trips") {
    TempDir dir("cfg");
    auto config = parse_experiment_config(small_config_json(dir.file("out")));
    auto text = experiment_config_to_json(config);
    auto back = parse_experiment_config(text);
    CHECK(back.name == config.name);
    CHECK(back.k_max == config.k_max);
    CHECK(back.approaches == config.approaches);
    CHECK(back.family->variation.values == config.family->variation.values);
    CHECK(experiment_config_to_json(back) == text);
}

TEST_CASE("synth materializes a loadable, deterministic dataset") {
    TempDir dir("synth");
    std::ofstream spec(dir.file("spec.json"));
    spec << R"({"d": 8, "n": 40, "seed": 2, "rule_sets": [
        [[{"feature":0,"bit":0}]], [[{"feature":0,"bit":1}]]
    ]})";
    spec.close();
    auto path1 = run_synth(dir.file("spec.json"), dir.file("outA"));
    auto ds = load_csv(path1);
    CHECK(ds.size() == 40);
    CHECK(ds.feature_count() == 8);
    auto path2 = run_synth(dir.file("spec.json"), dir.file("outB"));
    CHECK(read_file(path1) == read_file(path2));
}

TEST_CASE("train / explain / metrics / bench end to end") {
    TempDir dir("e2e");
    auto config = parse_experiment_config(small_config_json(dir.file("out")));

    run_train(config);
    CHECK(fs::exists(dir.file("out") + "/models/rf_t5.model.json"));
    CHECK(fs::exists(dir.file("out") + "/models/rf_t6.model.json"));
    auto perf = read_file(dir.file("out") + "/performance.csv");
    CHECK(count_lines(perf) == 3);  // header + 2 family members
    CHECK(perf.find("dataset,classifier,algorithm,tpr,fpr,") == 0);

    // Idempotent retrain: identical model files.
    auto before = read_file(dir.file("out") + "/models/rf_t6.model.json");
    run_train(config);
    CHECK(read_file(dir.file("out") + "/models/rf_t6.model.json") == before);

    run_explain(config);
    for (const char* name : {"lime__rf_t5.jsonl", "lime__rf_t6.jsonl", "shap__rf_t5.jsonl",
                             "shap__rf_t6.jsonl"}) {
        auto cache = read_file(dir.file("out") + "/cache/" + name);
        CHECK(count_lines(cache) == 6);
    }
    // Every line carries a positive elapsed time.
    {
        std::ifstream in(dir.file("out") + "/cache/lime__rf_t6.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            auto e = explanation_from_json_line(line);
            CHECK(e.elapsed_s > 0.0);
        }
    }

    run_metrics(config);
    auto metrics = read_file(dir.file("out") + "/metrics.csv");
    // stability/robustness/effectiveness x 2 approaches x 4 k + consistency x 4 k.
    CHECK(count_lines(metrics) == 1 + 3 * 2 * 4 + 4);
    std::istringstream rows(metrics);
    std::string row;
    std::getline(rows, row);  // header
    while (std::getline(rows, row)) {
        // n_samples + n_skipped = explained subset size, per row.
        auto last_comma = row.rfind(',');
        auto prev_comma = row.rfind(',', last_comma - 1);
        int skipped = std::stoi(row.substr(last_comma + 1));
        int used = std::stoi(row.substr(prev_comma + 1, last_comma - prev_comma - 1));
        CHECK(used + skipped == 6);
    }
    CHECK(fs::exists(dir.file("out") + "/robustness_by_class.csv"));
    CHECK(fs::exists(dir.file("out") + "/effective_features.csv"));
    CHECK(fs::exists(dir.file("out") + "/summary.md"));

    // rob = s_bar - d_bar per row of the per-class table.
    {
        std::ifstream in(dir.file("out") + "/robustness_by_class.csv");
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            REQUIRE(cells.size() == 2 + 2 * 3);
            for (std::size_t a = 0; a < 2; ++a) {
                double s = std::stod(cells[2 + a * 3]);
                double dd = std::stod(cells[3 + a * 3]);
                double rob = std::stod(cells[4 + a * 3]);
                CHECK(std::abs(rob - (s - dd)) < 1e-9);
            }
        }
    }

    run_bench(config);
    auto bench = read_file(dir.file("out") + "/bench.csv");
    CHECK(count_lines(bench) == 1 + 2);  // header + one row per approach
    CHECK(fs::exists(dir.file("out") + "/bench_host.txt"));
}

TEST_CASE("explain is resumable: truncated caches are recomputed identically") {
    TempDir dir("resume");
    auto config = parse_experiment_config(small_config_json(dir.file("out")));
    run_train(config);
    run_explain(config);

    const std::string cache = dir.file("out") + "/cache/lime__rf_t6.jsonl";
    auto uninterrupted = cache_modulo_elapsed(cache);

    // Simulate an interrupt: keep 2 complete lines plus a torn partial line.
    {
        std::ifstream in(cache);
        std::string line, kept;
        for (int i = 0; i < 2 && std::getline(in, line); ++i) kept += line + "\n";
        kept += "{\"sample_id\": \"torn";
        std::ofstream out(cache, std::ios::binary);
        out << kept;
    }
    run_explain(config);
    CHECK(cache_modulo_elapsed(cache) == uninterrupted);
}

TEST_CASE("metrics reports missing cache triples") {
    TempDir dir("missing");
    auto config = parse_experiment_config(small_config_json(dir.file("out")));
    run_train(config);
    run_explain(config);
    fs::remove(dir.file("out") + "/cache/shap__rf_t5.jsonl");
    try {
        run_metrics(config);
        FAIL("expected missing-cache error");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("shap") != std::string::npos);
        CHECK(msg.find("rf_t5") != std::string::npos);
    }
}

TEST_CASE("a mock cache of identical explanations yields stability 1") {
    TempDir dir("mock");
    auto config = parse_experiment_config(small_config_json(dir.file("out")));
    run_train(config);
    run_explain(config);

    // Overwrite both lime caches with identical items per sample.
    for (const char* name : {"rf_t5", "rf_t6"}) {
        const std::string path = dir.file("out") + "/cache/lime__" + std::string(name) + ".jsonl";
        std::ifstream in(path);
        std::string line;
        std::vector<Explanation> lines;
        while (std::getline(in, line)) lines.push_back(explanation_from_json_line(line));
        in.close();
        std::ofstream out(path, std::ios::binary);
        for (auto& e : lines) {
            e.items = {ExplanationItem{1, ItemConstraint::weighted, 2.0},
                       ExplanationItem{2, ItemConstraint::weighted, 1.0}};
            out << explanation_to_json_line(e) << "\n";
        }
    }
    run_metrics(config);
    std::ifstream in(dir.file("out") + "/metrics.csv");
    std::string row;
    std::getline(in, row);
    bool saw_lime_stability = false;
    while (std::getline(in, row)) {
        if (row.rfind("stability,lime,", 0) == 0) {
            saw_lime_stability = true;
            std::vector<std::string> cells;
            std::stringstream ss(row);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            CHECK(std::stod(cells[5]) == doctest::Approx(1.0));
        }
    }
    CHECK(saw_lime_stability);
}

TEST_CASE("two end-to-end runs produce byte-identical reports") {
    TempDir dir("det");
    for (const char* out : {"outA", "outB"}) {
        auto config = parse_experiment_config(small_config_json(dir.file(out)));
        run_train(config);
        run_explain(config);
        run_metrics(config);
    }
    CHECK(read_file(dir.file("outA") + "/metrics.csv") ==
          read_file(dir.file("outB") + "/metrics.csv"));
    CHECK(read_file(dir.file("outA") + "/robustness_by_class.csv") ==
          read_file(dir.file("outB") + "/robustness_by_class.csv"));
    CHECK(read_file(dir.file("outA") + "/performance.csv") ==
          read_file(dir.file("outB") + "/performance.csv"));
}

TEST_CASE("bench rejects a zero-sample request") {
    TempDir dir("bench0");
    auto text = small_config_json(dir.file("out"));
    auto doc = nlohmann::json::parse(text);
    doc["bench_samples"] = 0;
    auto config = parse_experiment_config(doc.dump());
    CHECK_THROWS_AS(run_bench(config), ValidationError);
}

#ifdef EXBENCH_BIN
namespace {

int run_cli(const std::string& args) {
    int status = std::system((std::string(EXBENCH_BIN) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("CLI subcommands and exit codes") {
    TempDir dir("cli");
    {
        std::ofstream spec(dir.file("spec.json"));
        spec << R"({"d": 10, "n": 60, "seed": 4, "rule_sets": [
            [[{"feature":0,"bit":0}]], [[{"feature":0,"bit":1}]]
        ]})";
    }
    CHECK(run_cli("synth --config " + dir.file("spec.json") + " --out " + dir.file("data")) == 0);
    CHECK(fs::exists(dir.file("data") + "/dataset.csv"));

    {
        std::ofstream cfg(dir.file("exp.json"));
        cfg << small_config_json(dir.file("out"));
    }
    CHECK(run_cli("train --config " + dir.file("exp.json")) == 0);
    CHECK(run_cli("explain --config " + dir.file("exp.json") + " --jobs 1") == 0);
    CHECK(run_cli("metrics --config " + dir.file("exp.json")) == 0);
    CHECK(run_cli("bench --config " + dir.file("exp.json")) == 0);
    CHECK(fs::exists(dir.file("out") + "/metrics.csv"));
    CHECK(fs::exists(dir.file("out") + "/bench.csv"));
    CHECK(fs::exists(dir.file("out") + "/information_gain.csv"));
    CHECK(fs::exists(dir.file("out") + "/effective_config.json"));

    // Validation problem -> exit 1 (config file missing).
    CHECK(run_cli("train --config " + dir.file("nope.json")) == 1);
    // Invalid config contents -> exit 1.
    {
        std::ofstream bad(dir.file("bad.json"));
        bad << R"({"approaches": []})";
    }
    CHECK(run_cli("train --config " + dir.file("bad.json")) == 1);
    // Runtime problem -> exit 2 (metrics without trained models/caches).
    {
        std::ofstream cfg(dir.file("exp2.json"));
        cfg << small_config_json(dir.file("out2"));
    }
    CHECK(run_cli("metrics --config " + dir.file("exp2.json")) == 2);
}
#endif

#ifdef EXBENCH_BIN
TEST_CASE("CLI usage problems exit with the validation code") {
    CHECK(run_cli("") == 1);                   // missing subcommand
    CHECK(run_cli("train") == 1);              // missing --config
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("nonsense --config x") == 1);
}
#endif
