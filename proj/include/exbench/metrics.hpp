#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "exbench/classifier.hpp"
#include "exbench/explain.hpp"

namespace exbench {

struct MetricPoint {
    int k = 0;
    double value = 0.0;
    std::size_t n_used = 0;
    std::size_t n_skipped = 0;
};

/// One metric swept over k = 1..k_max. per_sample[k-1][i] is the i-th
/// sample's term (NaN when the sample was skipped at that k).
struct MetricSeries {
    std::string metric;
    std::vector<MetricPoint> points;
    std::vector<std::vector<double>> per_sample;
};

/// Explanations for one source (one model or one approach), keyed by sample.
using ExplanationMap = std::unordered_map<std::string, Explanation>;

/// Dice coefficient of the top-min(k,|e|) feature sets: 2|a&b| / (|a|+|b|).
/// Undefined (nullopt) when both sets are empty; that case is reported as
/// skipped by the aggregate metrics, never scored 0.
std::optional<double> dice_similarity(const Explanation& a, const Explanation& b, int k);

/// Mean pairwise dice across the family's interpreters, averaged over
/// samples. A sample missing any family explanation (or with only empty
/// ones) is skipped and counted.
MetricSeries stability(const std::vector<ExplanationMap>& per_model,
                       const std::vector<std::string>& sample_ids, int k_max);

/// Same shape as stability but across approaches on one model.
MetricSeries consistency(const std::vector<ExplanationMap>& per_approach,
                         const std::vector<std::string>& sample_ids, int k_max);

struct RobustnessBreakdownRow {
    int label = -1;
    std::size_t n = 0;       // samples of this predicted class that scored
    double s_bar = 0.0;      // mean same-label similarity
    double d_bar = 0.0;      // mean different-label similarity
    double rob = 0.0;        // s_bar - d_bar
};

struct RobustnessResult {
    MetricSeries series;
    /// Per-class rows for every k: breakdown[k-1] lists classes ascending.
    std::vector<std::vector<RobustnessBreakdownRow>> breakdown;
};

/// Per sample: mean dice against same-predicted-label neighbors minus mean
/// dice against different-label ones (self excluded, neighbor sets capped at
/// neighbor_cap by a seeded draw). Samples with an empty side are skipped;
/// a single-label test set (everything skipped at k=1) is an error.
RobustnessResult robustness(const ExplanationMap& explanations,
                            const std::vector<std::string>& sample_ids, int k_max,
                            std::size_t neighbor_cap, std::uint64_t seed);

/// Contradicts the top-min(k,|e|) items of e on a copy of x: weighted items
/// flip the bit, equals_one forces 0, equals_zero forces 1.
FeatureVector mutate(const FeatureVector& x, const Explanation& e, int k);

struct EffectivenessResult {
    MetricSeries series;
    /// Fraction of scored samples whose minimal label-flipping prefix (at
    /// weights_k) contains each feature; descending, zeros omitted.
    std::vector<std::pair<std::size_t, double>> effective_feature_weights;
    int weights_k = 0;
};

/// Fraction of samples whose prediction changes after mutation. Explanations
/// must have been produced against exactly this model.
EffectivenessResult effectiveness(const ClassifierModel& model, const LabeledDataset& ds,
                                  const ExplanationMap& explanations,
                                  const std::vector<std::string>& sample_ids, int k_max,
                                  int weights_k);

}  // namespace exbench
