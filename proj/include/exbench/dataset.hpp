#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace exbench {

enum class FeatureKind { api, permission, intent, synthetic };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

/// Named feature space shared by a dataset and every model trained on it.
struct FeatureDictionary {
    std::vector<std::string> names;
    std::vector<FeatureKind> kinds;  // one entry per name

    std::size_t size() const { return names.size(); }
    /// Hash of the ordered names; models refuse inputs from a different space.
    std::uint64_t fingerprint() const;
    void validate() const;
    bool operator==(const FeatureDictionary&) const = default;
};

/// One sample: d bits, one per dictionary entry.
struct FeatureVector {
    std::vector<std::uint8_t> bits;
    bool operator==(const FeatureVector&) const = default;
};

struct LabeledDataset {
    FeatureDictionary dictionary;
    std::vector<FeatureVector> samples;
    std::vector<int> labels;  // index into label_names
    std::vector<std::string> label_names;
    std::vector<std::string> sample_ids;

    std::size_t size() const { return samples.size(); }
    std::size_t feature_count() const { return dictionary.size(); }
    std::size_t class_count() const { return label_names.size(); }
    void validate() const;
    bool operator==(const LabeledDataset&) const = default;
};

struct Split {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

/// Conjunction of required bits: every listed feature must hold its value.
struct PlantedConjunction {
    std::vector<std::pair<std::size_t, std::uint8_t>> terms;
    bool operator==(const PlantedConjunction&) const = default;
};

/// Recipe for an oracle dataset with known ground-truth rules. Each class owns
/// one or more conjunctions; a sample is generated by picking one conjunction
/// uniformly over all entries (so listing a conjunction several times weights
/// it, and class balance follows the per-class entry counts), planting those
/// bits, and drawing the rest Bernoulli(0.5). Conjunctions of other classes
/// that come out satisfied by accident are broken by flipping one of their
/// free bits, so at noise 0 the label is a deterministic function of the
/// planted features.
struct SyntheticSpec {
    std::size_t d = 0;
    std::size_t n = 0;
    std::vector<std::vector<PlantedConjunction>> rule_sets;  // per class
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> label_names;  // optional; defaults to class0..N

    void validate() const;
};

/// Parses the ingestion CSV: header `sample_id,label,<feature names...>`,
/// feature cells in {0,1}, UTF-8, LF newlines. An optional sidecar (JSON array
/// of {name, kind}) assigns feature kinds; absent entries default to
/// "synthetic". Errors name the offending row/column.
LabeledDataset load_csv(const std::string& path, const std::string& dictionary_sidecar = {});

void write_csv(const LabeledDataset& ds, const std::string& path);

/// Per-class halving split: floor(|c|/2) samples to train, the odd extra one
/// to test, a singleton class entirely to train. Deterministic per seed.
Split split_per_class(const LabeledDataset& ds, std::uint64_t seed);

/// Unstratified Bernoulli(train_fraction) assignment per sample. Throws if
/// either side comes out empty.
Split split_random(const LabeledDataset& ds, double train_fraction, std::uint64_t seed);

LabeledDataset generate_synthetic(const SyntheticSpec& spec);

SyntheticSpec load_synthetic_spec(const std::string& path);
SyntheticSpec parse_synthetic_spec(const std::string& json_text);

}  // namespace exbench
