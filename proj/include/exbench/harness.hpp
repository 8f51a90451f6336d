#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exbench/classifier.hpp"
#include "exbench/dataset.hpp"
#include "exbench/explain.hpp"

namespace exbench {

struct ClassifierSpec {
    std::string name;
    TrainConfig config;
};

struct FamilySpec {
    TrainConfig base_config;
    FamilyVariation variation;
    std::uint64_t base_value = 0;  // which member anchors robustness/effectiveness
};

/// Single-file experiment description; every run writes its effective copy
/// beside the outputs.
struct ExperimentConfig {
    std::string name = "dataset";
    std::string dataset_csv;                 // exactly one of csv / synthetic
    std::optional<SyntheticSpec> synthetic;
    std::string dictionary_sidecar;

    std::string split_policy = "per_class";  // per_class | random
    double train_fraction = 0.5;

    std::vector<ClassifierSpec> classifiers;  // standalone, for the performance table
    std::optional<FamilySpec> family;         // similar-model family for stability

    std::vector<ExplainerKind> approaches;
    ExplainerParams params;

    int k_max = 20;
    int breakdown_k = 5;
    std::size_t explain_samples = 0;  // 0 = all test samples
    std::size_t bench_samples = 10;
    std::size_t neighbor_cap = 200;
    std::uint64_t seed = 42;
    unsigned jobs = 0;  // 0 = hardware concurrency
    std::string output_dir = "out";

    /// Collects every violation before throwing.
    void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);

/// Derived per-member name, e.g. rf_t98, rf_s7, knn_k8, mlp_i100.
std::string family_member_name(const FamilySpec& family, std::uint64_t value);

/// synth: materialize a synthetic spec into the ingestion CSV format.
/// A non-negative seed_override replaces the spec's seed. Returns the
/// written dataset path.
std::string run_synth(const std::string& spec_path, const std::string& out_dir,
                      std::int64_t seed_override = -1);

/// train: fit the standalone classifiers and the similar-model family, save
/// model files under <out>/models and write performance.csv.
void run_train(const ExperimentConfig& config);

/// explain: produce one JSON-lines cache per (approach, family member) over
/// the configured test subset. Existing cache lines are reused; files are
/// rewritten in canonical sample order.
void run_explain(const ExperimentConfig& config);

/// metrics: stability over the family, robustness/effectiveness/consistency
/// against the base member; writes metrics.csv, robustness_by_class.csv,
/// effective_features.csv and summary.md.
void run_metrics(const ExperimentConfig& config);

/// bench: per-sample wall-clock per approach on the base member; writes
/// bench.csv and bench_host.txt.
void run_bench(const ExperimentConfig& config);

}  // namespace exbench
