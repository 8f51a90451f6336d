#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exbench/classifier.hpp"
#include "exbench/dataset.hpp"

namespace exbench {

enum class ExplainerKind { lime, anchor, lore, shap, lemna };

std::string to_string(ExplainerKind k);
ExplainerKind explainer_kind_from_string(const std::string& s);

enum class ItemConstraint { weighted, equals_one, equals_zero };

std::string to_string(ItemConstraint c);
ItemConstraint item_constraint_from_string(const std::string& s);

struct ExplanationItem {
    std::size_t feature = 0;
    ItemConstraint constraint = ItemConstraint::weighted;
    double weight = 0.0;
};

/// Ranked attribution for one sample by one interpreter. Weighted items are
/// kept sorted by |weight| descending (feature index breaks ties); rule items
/// stay in selection order, strongest first. Feature indices are unique.
struct Explanation {
    ExplainerKind approach = ExplainerKind::lime;
    std::string model_id;
    std::string sample_id;
    int predicted_label = -1;
    std::vector<ExplanationItem> items;
    double elapsed_s = 0.0;
    std::uint64_t seed = 0;
    std::string params_hash;
    std::vector<std::string> flags;  // "degenerate", "non_anchored", "em_collapsed"

    bool empty() const { return items.empty(); }
    bool has_flag(const std::string& f) const;
    /// First min(k, |items|) feature indices in ranked order.
    std::vector<std::size_t> top_features(std::size_t k) const;
};

std::string explanation_to_json_line(const Explanation& e);
Explanation explanation_from_json_line(const std::string& line);

struct PerturbationSet {
    std::string base_sample_id;
    std::vector<FeatureVector> vectors;
    std::vector<int> labels;  // filled by label_perturbations
};

/// t independent draws around x, each bit flipped with probability flip_prob.
/// The unperturbed x is not inserted explicitly (draws may still coincide
/// with it).
PerturbationSet perturb(const FeatureVector& x, std::size_t t, double flip_prob,
                        std::uint64_t seed);

void label_perturbations(const Predictor& model, PerturbationSet& set);

enum class LimeProximity { exponential_cosine, raw_cosine };

struct LimeParams {
    std::size_t t = 1000;
    double flip_prob = 0.1;
    double kernel_width = 0.25;
    double lambda = 0.005;
    LimeProximity proximity = LimeProximity::exponential_cosine;
    double tol = 1e-7;
    std::size_t max_iter = 1000;
};

struct ShapParams {
    std::size_t coalition_count = 2000;
    double ridge = 1e-9;
    bool enumerate_all = false;            // exact kernel weights, d <= 20
    std::vector<std::uint8_t> reference;   // empty = all-zero background
};

struct LemnaParams {
    std::size_t t = 1000;
    double flip_prob = 0.1;
    std::size_t mixture_components = 3;  // M
    double tol = 1e-6;
    std::size_t max_iter = 100;
    double l1 = 0.0;
};

struct AnchorParams {
    double precision_threshold = 0.95;  // pi
    double confidence = 0.05;           // delta for the Hoeffding bounds
    std::size_t beam_width = 3;
    std::size_t batch_size = 100;
    std::size_t max_batches_per_candidate = 8;
    std::size_t coverage_samples = 1000;
    double flip_prob = 0.1;             // resampling distribution for free bits
    std::size_t max_rule_size = 8;
};

struct LoreParams {
    std::size_t population = 100;
    std::size_t generations = 20;
    double crossover_rate = 0.7;
    double mutation_rate = 0.02;  // per-bit flip probability
    double init_flip_prob = 0.1;
    std::size_t tree_max_depth = 6;
    std::size_t tree_min_leaf = 2;
};

struct ExplainerParams {
    LimeParams lime;
    ShapParams shap;
    LemnaParams lemna;
    AnchorParams anchor;
    LoreParams lore;

    void validate() const;
    std::string hash_for(ExplainerKind kind) const;
};

Explanation explain_lime(const Predictor& model, const FeatureVector& x, const LimeParams& params,
                         std::uint64_t seed);
Explanation explain_shap(const Predictor& model, const FeatureVector& x, const ShapParams& params,
                         std::uint64_t seed);
Explanation explain_lemna(const Predictor& model, const FeatureVector& x,
                          const LemnaParams& params, std::uint64_t seed);
Explanation explain_anchor(const Predictor& model, const FeatureVector& x,
                           const AnchorParams& params, std::uint64_t seed);
Explanation explain_lore(const Predictor& model, const FeatureVector& x, const LoreParams& params,
                         std::uint64_t seed);

/// Neighborhood fitness used by the genetic runs: label indicator plus
/// (1 - normalized Hamming distance) minus a self-exclusion penalty, so a
/// correct-label neighbor one bit away scores above the sample itself.
double lore_fitness(bool label_indicator, double normalized_distance, bool is_self);

/// Exact Shapley values of the predicted-class score by full subset
/// enumeration (cost 2^d, d <= 20). Test oracle for the kernel estimator.
std::vector<double> exact_shapley(const Predictor& model, const FeatureVector& x,
                                  const std::vector<std::uint8_t>& reference);

/// Dispatches to the per-kind routine and stamps model_id, sample_id, seed,
/// params hash and wall-clock time onto the result.
Explanation explain(ExplainerKind kind, const Predictor& model, const std::string& model_id,
                    const FeatureVector& x, const std::string& sample_id,
                    const ExplainerParams& params, std::uint64_t seed);

}  // namespace exbench
