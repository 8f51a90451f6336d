#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "exbench/dataset.hpp"

namespace exbench {

enum class Algorithm { random_forest, knn, mlp };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct RandomForestParams {
    std::size_t tree_count = 100;
    std::size_t min_samples_leaf = 1;
    std::size_t min_samples_split = 2;
    std::size_t max_depth = 0;          // 0 = unlimited
    std::size_t features_per_split = 0; // 0 = floor(sqrt(d))
};

struct KnnParams {
    std::size_t neighbor_count = 10;  // uniform weights, Hamming distance
};

struct MlpParams {
    std::size_t hidden_layers = 3;
    std::size_t neurons_per_layer = 128;
    std::string activation = "relu";  // relu | tanh
    std::size_t max_iterations = 200; // epochs of mini-batch gradient descent
    std::size_t batch_size = 200;
    double learning_rate = 0.05;
};

struct TrainConfig {
    Algorithm algorithm = Algorithm::random_forest;
    RandomForestParams rf;
    KnnParams knn;
    MlpParams mlp;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Minimal prediction surface the explainers see. Trained models implement it;
/// tests plug in hand-written oracles.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::size_t feature_count() const = 0;
    virtual std::size_t class_count() const = 0;
    /// Per-class scores (vote fractions / probabilities), summing to 1.
    virtual std::vector<double> class_scores(const FeatureVector& x) const = 0;
    /// Argmax of class_scores; ties break toward the smallest class index.
    virtual int predict(const FeatureVector& x) const;
};

struct ClassifierModel {
    TrainConfig config;
    std::uint64_t dictionary_fingerprint = 0;
    std::size_t feature_count = 0;
    std::size_t class_count = 0;
    std::string model_id;  // content hash of config + learned parameters
    std::shared_ptr<const Predictor> learned;
};

struct SimilarModelFamily {
    std::vector<ClassifierModel> models;  // length alpha >= 2
    std::string variation;                // which knob was varied, and how
};

struct FamilyVariation {
    enum class Kind { rf_tree_counts, seeds, knn_neighbors, mlp_iterations };
    Kind kind = Kind::rf_tree_counts;
    std::vector<std::uint64_t> values;
};

struct ClassRates {
    int label = 0;
    std::size_t support = 0;
    double tpr = 0.0, fpr = 0.0, precision = 0.0, recall = 0.0, f_measure = 0.0;
};

/// Test-side metrics. For binary tasks the headline numbers treat class
/// index 1 (the second label name) as positive; multi-class tasks report
/// macro averages. Per-class one-vs-rest rates are always included.
struct PerformanceReport {
    double tpr = 0.0, fpr = 0.0, precision = 0.0, recall = 0.0, f_measure = 0.0, accuracy = 0.0;
    std::vector<ClassRates> per_class;
};

ClassifierModel train(const LabeledDataset& ds, const Split& split, const TrainConfig& cfg);

int predict(const ClassifierModel& model, const FeatureVector& x);
std::vector<double> class_scores(const ClassifierModel& model, const FeatureVector& x);

PerformanceReport evaluate(const ClassifierModel& model, const LabeledDataset& ds,
                           const Split& split);

SimilarModelFamily train_similar_family(const LabeledDataset& ds, const Split& split,
                                        const TrainConfig& cfg, const FamilyVariation& variation);

/// Train-side information gain per feature, descending; ties break toward the
/// lower feature index. Entropy in bits.
std::vector<std::pair<std::string, double>> information_gain_ranking(const LabeledDataset& ds,
                                                                     const Split& split,
                                                                     std::size_t top_n);

void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path);

}  // namespace exbench
