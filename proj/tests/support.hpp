#pragma once

// Shared helpers for the test binaries: temp directories, random datasets,
// and hand-written oracle predictors the explainer tests run against.

#include <filesystem>
#include <string>
#include <vector>

#include "exbench/classifier.hpp"
#include "exbench/dataset.hpp"
#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"

namespace testsupport {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("exbench_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline exbench::LabeledDataset random_dataset(std::size_t n, std::size_t d, std::size_t classes,
                                              std::uint64_t seed) {
    exbench::detail::Rng rng(seed);
    exbench::LabeledDataset ds;
    for (std::size_t f = 0; f < d; ++f) {
        ds.dictionary.names.push_back("f" + std::to_string(f));
        ds.dictionary.kinds.push_back(exbench::FeatureKind::synthetic);
    }
    for (std::size_t c = 0; c < classes; ++c) ds.label_names.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
        exbench::FeatureVector fv;
        fv.bits.resize(d);
        for (auto& b : fv.bits) b = rng.bernoulli(0.5) ? 1 : 0;
        ds.samples.push_back(std::move(fv));
        ds.labels.push_back(static_cast<int>(rng.uniform_index(classes)));
        ds.sample_ids.push_back("s" + std::to_string(i));
    }
    // Ensure every class appears so CSV round-trips preserve label_names.
    for (std::size_t c = 0; c < classes && c < n; ++c) ds.labels[c] = static_cast<int>(c);
    return ds;
}

inline exbench::Split full_split(const exbench::LabeledDataset& ds, double fraction = 0.5) {
    exbench::Split split;
    const auto cut = static_cast<std::size_t>(static_cast<double>(ds.size()) * fraction);
    for (std::size_t i = 0; i < ds.size(); ++i)
        (i < cut ? split.train_indices : split.test_indices).push_back(i);
    return split;
}

// Binary model fully determined by one feature: class 1 iff bits[pivot] == 1.
struct DictatorModel final : exbench::Predictor {
    std::size_t d;
    std::size_t pivot;
    DictatorModel(std::size_t d, std::size_t pivot) : d(d), pivot(pivot) {}
    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return 2; }
    std::vector<double> class_scores(const exbench::FeatureVector& x) const override {
        double on = x.bits[pivot] ? 1.0 : 0.0;
        return {1.0 - on, on};
    }
};

struct ConstantModel final : exbench::Predictor {
    std::size_t d;
    int label;
    std::size_t classes;
    ConstantModel(std::size_t d, int label, std::size_t classes = 2)
        : d(d), label(label), classes(classes) {}
    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return classes; }
    std::vector<double> class_scores(const exbench::FeatureVector&) const override {
        std::vector<double> s(classes, 0.0);
        s[label] = 1.0;
        return s;
    }
};

// Smooth binary model: P(class 1) = sigmoid(w . bits + b).
struct LinearScoreModel final : exbench::Predictor {
    std::vector<double> w;
    double b;
    LinearScoreModel(std::vector<double> w, double b) : w(std::move(w)), b(b) {}
    std::size_t feature_count() const override { return w.size(); }
    std::size_t class_count() const override { return 2; }
    std::vector<double> class_scores(const exbench::FeatureVector& x) const override {
        double z = b;
        for (std::size_t f = 0; f < w.size(); ++f) z += w[f] * x.bits[f];
        double p = 1.0 / (1.0 + std::exp(-z));
        return {1.0 - p, p};
    }
};

// class 1 iff both gate features are set.
struct AndModel final : exbench::Predictor {
    std::size_t d, a, b;
    AndModel(std::size_t d, std::size_t a, std::size_t b) : d(d), a(a), b(b) {}
    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return 2; }
    std::vector<double> class_scores(const exbench::FeatureVector& x) const override {
        double on = (x.bits[a] && x.bits[b]) ? 1.0 : 0.0;
        return {1.0 - on, on};
    }
};

// Majority vote over three features.
struct MajorityModel final : exbench::Predictor {
    std::size_t d;
    explicit MajorityModel(std::size_t d) : d(d) {}
    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return 2; }
    std::vector<double> class_scores(const exbench::FeatureVector& x) const override {
        int ones = x.bits[0] + x.bits[1] + x.bits[2];
        double on = ones >= 2 ? 1.0 : 0.0;
        return {1.0 - on, on};
    }
};

// Label follows f0 when bits[gate] == 1, f1 otherwise.
struct TwoRegimeModel final : exbench::Predictor {
    std::size_t d, gate;
    TwoRegimeModel(std::size_t d, std::size_t gate) : d(d), gate(gate) {}
    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return 2; }
    std::vector<double> class_scores(const exbench::FeatureVector& x) const override {
        double on = x.bits[gate] ? (x.bits[0] ? 1.0 : 0.0) : (x.bits[1] ? 1.0 : 0.0);
        return {1.0 - on, on};
    }
};

// Wraps a lookup from sample index (encoded in the low bits) to a fixed
// label; used to hand-build confusion matrices.
struct TableModel final : exbench::Predictor {
    std::size_t d;
    std::vector<int> outputs;  // indexed by the integer encoded in the bits
    std::size_t classes;
    TableModel(std::size_t d, std::vector<int> outputs, std::size_t classes)
        : d(d), outputs(std::move(outputs)), classes(classes) {}
    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return classes; }
    std::vector<double> class_scores(const exbench::FeatureVector& x) const override {
        std::size_t key = 0;
        for (std::size_t f = 0; f < d && f < 16; ++f)
            if (x.bits[f]) key |= (std::size_t{1} << f);
        std::vector<double> s(classes, 0.0);
        s[outputs[key % outputs.size()]] = 1.0;
        return s;
    }
};

inline exbench::ClassifierModel wrap_model(std::shared_ptr<const exbench::Predictor> predictor,
                                           const exbench::LabeledDataset& ds,
                                           const std::string& id) {
    exbench::ClassifierModel model;
    model.config.algorithm = exbench::Algorithm::knn;
    model.dictionary_fingerprint = ds.dictionary.fingerprint();
    model.feature_count = predictor->feature_count();
    model.class_count = predictor->class_count();
    model.model_id = id;
    model.learned = std::move(predictor);
    return model;
}

}  // namespace testsupport
