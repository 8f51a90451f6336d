#include "exbench/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"
#include "exbench/solvers.hpp"
#include "json.hpp"

namespace exbench {

using detail::Rng;
using nlohmann::json;

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::random_forest: return "random_forest";
        case Algorithm::knn: return "knn";
        case Algorithm::mlp: return "mlp";
    }
    return "random_forest";
}

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "random_forest") return Algorithm::random_forest;
    if (s == "knn") return Algorithm::knn;
    if (s == "mlp") return Algorithm::mlp;
    throw ValidationError("unknown algorithm: '" + s + "'");
}

void TrainConfig::validate() const {
    if (algorithm == Algorithm::random_forest && rf.tree_count == 0)
        throw ValidationError("rf.tree_count must be >= 1");
    if (algorithm == Algorithm::knn && knn.neighbor_count == 0)
        throw ValidationError("knn.neighbor_count must be >= 1");
    if (algorithm == Algorithm::mlp) {
        if (mlp.max_iterations == 0) throw ValidationError("mlp.max_iterations must be >= 1");
        if (mlp.batch_size == 0) throw ValidationError("mlp.batch_size must be >= 1");
        if (mlp.hidden_layers == 0 || mlp.neurons_per_layer == 0)
            throw ValidationError("mlp layer sizes must be >= 1");
        if (mlp.activation != "relu" && mlp.activation != "tanh")
            throw ValidationError("mlp.activation must be 'relu' or 'tanh'");
        if (!(mlp.learning_rate > 0.0)) throw ValidationError("mlp.learning_rate must be > 0");
    }
}

int Predictor::predict(const FeatureVector& x) const {
    auto scores = class_scores(x);
    int best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = static_cast<int>(c);
    return best;
}

namespace {

// ---------------------------------------------------------------------------
// Random forest

struct ForestPredictor final : Predictor {
    std::vector<DecisionTree> trees;
    std::size_t d = 0;
    std::size_t classes = 0;

    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return classes; }

    std::vector<double> class_scores(const FeatureVector& x) const override {
        std::vector<double> votes(classes, 0.0);
        for (const auto& tree : trees) votes[tree.predict(x)] += 1.0;
        for (auto& v : votes) v /= static_cast<double>(trees.size());
        return votes;
    }
};

std::shared_ptr<ForestPredictor> train_forest(const LabeledDataset& ds, const Split& split,
                                              const TrainConfig& cfg, std::size_t num_classes) {
    auto forest = std::make_shared<ForestPredictor>();
    forest->d = ds.feature_count();
    forest->classes = num_classes;
    const auto& train = split.train_indices;
    const std::size_t n = train.size();

    std::vector<double> unit_weights(ds.size(), 1.0);
    std::size_t fps = cfg.rf.features_per_split;
    if (fps == 0)
        fps = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(forest->d)))));

    CartParams params;
    params.max_depth = cfg.rf.max_depth;
    params.min_leaf = cfg.rf.min_samples_leaf;
    params.min_split = cfg.rf.min_samples_split;

    forest->trees.reserve(cfg.rf.tree_count);
    for (std::size_t t = 0; t < cfg.rf.tree_count; ++t) {
        Rng rng(detail::mix_seed(cfg.seed, 0x7000 + t));
        std::vector<std::size_t> bootstrap(n);
        for (std::size_t i = 0; i < n; ++i) bootstrap[i] = train[rng.uniform_index(n)];
        forest->trees.push_back(detail::cart_build_on_indices(
            ds.samples, ds.labels, unit_weights, bootstrap, num_classes, params, fps, &rng));
    }
    return forest;
}

// ---------------------------------------------------------------------------
// k-nearest neighbors (Hamming distance, uniform weights)

struct KnnPredictor final : Predictor {
    std::vector<FeatureVector> vectors;
    std::vector<int> labels;
    std::size_t k = 1;
    std::size_t classes = 0;

    std::size_t feature_count() const override {
        return vectors.empty() ? 0 : vectors[0].bits.size();
    }
    std::size_t class_count() const override { return classes; }

    std::vector<double> class_scores(const FeatureVector& x) const override {
        const std::size_t n = vectors.size();
        const std::size_t kk = std::min(k, n);
        // (distance, index) pairs; the index tiebreak keeps neighbor choice
        // deterministic when distances tie at the cut.
        std::vector<std::pair<std::size_t, std::size_t>> order(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t dist = 0;
            const auto& v = vectors[i].bits;
            for (std::size_t f = 0; f < v.size(); ++f) dist += v[f] != x.bits[f];
            order[i] = {dist, i};
        }
        std::partial_sort(order.begin(), order.begin() + kk, order.end());
        std::vector<double> votes(classes, 0.0);
        for (std::size_t i = 0; i < kk; ++i) votes[labels[order[i].second]] += 1.0;
        for (auto& v : votes) v /= static_cast<double>(kk);
        return votes;
    }
};

// ---------------------------------------------------------------------------
// Multilayer perceptron, plain mini-batch gradient descent

struct MlpPredictor final : Predictor {
    struct Layer {
        std::size_t in = 0, out = 0;
        std::vector<double> w;  // out x in, row-major
        std::vector<double> b;
    };
    std::vector<Layer> layers;  // hidden layers then the output layer
    bool relu = true;
    std::size_t d = 0;
    std::size_t classes = 0;

    std::size_t feature_count() const override { return d; }
    std::size_t class_count() const override { return classes; }

    static void affine(const Layer& l, const std::vector<double>& in, std::vector<double>& out) {
        out.assign(l.out, 0.0);
        for (std::size_t r = 0; r < l.out; ++r) {
            double acc = l.b[r];
            const double* wr = &l.w[r * l.in];
            for (std::size_t c = 0; c < l.in; ++c) acc += wr[c] * in[c];
            out[r] = acc;
        }
    }

    std::vector<double> class_scores(const FeatureVector& x) const override {
        std::vector<double> cur(d);
        for (std::size_t f = 0; f < d; ++f) cur[f] = x.bits[f];
        std::vector<double> next;
        for (std::size_t li = 0; li + 1 < layers.size(); ++li) {
            affine(layers[li], cur, next);
            for (auto& v : next) v = relu ? std::max(0.0, v) : std::tanh(v);
            cur = next;
        }
        affine(layers.back(), cur, next);
        double mx = *std::max_element(next.begin(), next.end());
        double denom = 0.0;
        for (auto& v : next) {
            v = std::exp(v - mx);
            denom += v;
        }
        for (auto& v : next) v /= denom;
        return next;
    }
};

std::shared_ptr<MlpPredictor> train_mlp(const LabeledDataset& ds, const Split& split,
                                        const TrainConfig& cfg, std::size_t num_classes) {
    auto mlp = std::make_shared<MlpPredictor>();
    mlp->d = ds.feature_count();
    mlp->classes = num_classes;
    mlp->relu = cfg.mlp.activation == "relu";

    std::vector<std::size_t> dims;
    dims.push_back(mlp->d);
    for (std::size_t i = 0; i < cfg.mlp.hidden_layers; ++i) dims.push_back(cfg.mlp.neurons_per_layer);
    dims.push_back(num_classes);

    Rng init_rng(detail::mix_seed(cfg.seed, "mlp_init"));
    for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
        MlpPredictor::Layer layer;
        layer.in = dims[li];
        layer.out = dims[li + 1];
        double r = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        layer.w.resize(layer.out * layer.in);
        for (auto& w : layer.w) w = init_rng.uniform(-r, r);
        layer.b.assign(layer.out, 0.0);
        mlp->layers.push_back(std::move(layer));
    }

    const auto& train = split.train_indices;
    const std::size_t n = train.size();
    const std::size_t L = mlp->layers.size();
    Rng shuffle_rng(detail::mix_seed(cfg.seed, "mlp_epochs"));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    // Per-sample activations reused across the batch.
    std::vector<std::vector<double>> act(L + 1), delta(L);
    std::vector<MlpPredictor::Layer> grad = mlp->layers;  // same shapes

    for (std::size_t epoch = 0; epoch < cfg.mlp.max_iterations; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.mlp.batch_size) {
            const std::size_t end = std::min(n, start + cfg.mlp.batch_size);
            for (auto& g : grad) {
                std::fill(g.w.begin(), g.w.end(), 0.0);
                std::fill(g.b.begin(), g.b.end(), 0.0);
            }
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t si = train[order[bi]];
                const auto& x = ds.samples[si];
                act[0].resize(mlp->d);
                for (std::size_t f = 0; f < mlp->d; ++f) act[0][f] = x.bits[f];
                for (std::size_t li = 0; li < L; ++li) {
                    MlpPredictor::affine(mlp->layers[li], act[li], act[li + 1]);
                    if (li + 1 < L)
                        for (auto& v : act[li + 1]) v = mlp->relu ? std::max(0.0, v) : std::tanh(v);
                }
                // Softmax cross-entropy gradient at the output.
                auto& out = act[L];
                double mx = *std::max_element(out.begin(), out.end());
                double denom = 0.0;
                for (auto& v : out) {
                    v = std::exp(v - mx);
                    denom += v;
                }
                for (auto& v : out) v /= denom;
                delta[L - 1] = out;
                delta[L - 1][ds.labels[si]] -= 1.0;

                for (std::size_t li = L; li-- > 0;) {
                    auto& g = grad[li];
                    const auto& input = act[li];
                    const auto& dl = delta[li];
                    for (std::size_t r = 0; r < g.out; ++r) {
                        g.b[r] += dl[r];
                        double* gw = &g.w[r * g.in];
                        const double dr = dl[r];
                        if (dr != 0.0)
                            for (std::size_t c = 0; c < g.in; ++c) gw[c] += dr * input[c];
                    }
                    if (li == 0) break;
                    auto& prev = delta[li - 1];
                    prev.assign(mlp->layers[li].in, 0.0);
                    for (std::size_t r = 0; r < mlp->layers[li].out; ++r) {
                        const double dr = dl[r];
                        if (dr == 0.0) continue;
                        const double* wr = &mlp->layers[li].w[r * mlp->layers[li].in];
                        for (std::size_t c = 0; c < mlp->layers[li].in; ++c) prev[c] += dr * wr[c];
                    }
                    for (std::size_t c = 0; c < prev.size(); ++c) {
                        double a = act[li][c];
                        prev[c] *= mlp->relu ? (a > 0.0 ? 1.0 : 0.0) : (1.0 - a * a);
                    }
                }
            }
            const double scale = cfg.mlp.learning_rate / static_cast<double>(end - start);
            for (std::size_t li = 0; li < L; ++li) {
                auto& layer = mlp->layers[li];
                const auto& g = grad[li];
                for (std::size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= scale * g.w[i];
                for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= scale * g.b[i];
            }
        }
    }
    return mlp;
}

// ---------------------------------------------------------------------------
// Serialization

json tree_to_json(const DecisionTree& tree) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
        if (node.feature >= 0)
            nodes.push_back(json{{"f", node.feature}, {"l", node.left}, {"r", node.right}});
        else
            nodes.push_back(json{{"d", node.dist}});
    }
    return json{{"nodes", std::move(nodes)}, {"classes", tree.num_classes}};
}

DecisionTree tree_from_json(const json& doc) {
    DecisionTree tree;
    tree.num_classes = doc.at("classes").get<std::size_t>();
    for (const auto& jn : doc.at("nodes")) {
        DecisionTree::Node node;
        if (jn.contains("f")) {
            node.feature = jn.at("f").get<int>();
            node.left = jn.at("l").get<int>();
            node.right = jn.at("r").get<int>();
        } else {
            node.dist = jn.at("d").get<std::vector<double>>();
        }
        tree.nodes.push_back(std::move(node));
    }
    return tree;
}

std::string bits_to_string(const FeatureVector& v) {
    std::string s(v.bits.size(), '0');
    for (std::size_t i = 0; i < v.bits.size(); ++i) s[i] = v.bits[i] ? '1' : '0';
    return s;
}

FeatureVector bits_from_string(const std::string& s) {
    FeatureVector v;
    v.bits.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v.bits[i] = s[i] == '1' ? 1 : 0;
    return v;
}

json config_to_json(const TrainConfig& cfg) {
    json j{{"algorithm", to_string(cfg.algorithm)}, {"seed", cfg.seed}};
    switch (cfg.algorithm) {
        case Algorithm::random_forest:
            j["rf"] = json{{"tree_count", cfg.rf.tree_count},
                           {"split_criterion", "gini"},
                           {"min_samples_leaf", cfg.rf.min_samples_leaf},
                           {"min_samples_split", cfg.rf.min_samples_split},
                           {"max_depth", cfg.rf.max_depth},
                           {"features_per_split", cfg.rf.features_per_split}};
            break;
        case Algorithm::knn:
            j["knn"] = json{{"neighbor_count", cfg.knn.neighbor_count}, {"weighting", "uniform"}};
            break;
        case Algorithm::mlp:
            j["mlp"] = json{{"hidden_layers", cfg.mlp.hidden_layers},
                            {"neurons_per_layer", cfg.mlp.neurons_per_layer},
                            {"activation", cfg.mlp.activation},
                            {"max_iterations", cfg.mlp.max_iterations},
                            {"batch_size", cfg.mlp.batch_size},
                            {"learning_rate", cfg.mlp.learning_rate}};
            break;
    }
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("rf")) {
        const auto& r = j.at("rf");
        cfg.rf.tree_count = r.at("tree_count").get<std::size_t>();
        cfg.rf.min_samples_leaf = r.at("min_samples_leaf").get<std::size_t>();
        cfg.rf.min_samples_split = r.at("min_samples_split").get<std::size_t>();
        cfg.rf.max_depth = r.at("max_depth").get<std::size_t>();
        cfg.rf.features_per_split = r.at("features_per_split").get<std::size_t>();
    }
    if (j.contains("knn")) cfg.knn.neighbor_count = j.at("knn").at("neighbor_count").get<std::size_t>();
    if (j.contains("mlp")) {
        const auto& m = j.at("mlp");
        cfg.mlp.hidden_layers = m.at("hidden_layers").get<std::size_t>();
        cfg.mlp.neurons_per_layer = m.at("neurons_per_layer").get<std::size_t>();
        cfg.mlp.activation = m.at("activation").get<std::string>();
        cfg.mlp.max_iterations = m.at("max_iterations").get<std::size_t>();
        cfg.mlp.batch_size = m.at("batch_size").get<std::size_t>();
        cfg.mlp.learning_rate = m.at("learning_rate").get<double>();
    }
    return cfg;
}

json learned_to_json(const ClassifierModel& model) {
    switch (model.config.algorithm) {
        case Algorithm::random_forest: {
            const auto* forest = dynamic_cast<const ForestPredictor*>(model.learned.get());
            json trees = json::array();
            for (const auto& tree : forest->trees) trees.push_back(tree_to_json(tree));
            return json{{"trees", std::move(trees)}};
        }
        case Algorithm::knn: {
            const auto* knn = dynamic_cast<const KnnPredictor*>(model.learned.get());
            json vecs = json::array();
            for (const auto& v : knn->vectors) vecs.push_back(bits_to_string(v));
            return json{{"vectors", std::move(vecs)}, {"labels", knn->labels}, {"k", knn->k}};
        }
        case Algorithm::mlp: {
            const auto* mlp = dynamic_cast<const MlpPredictor*>(model.learned.get());
            json layers = json::array();
            for (const auto& l : mlp->layers)
                layers.push_back(json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
            return json{{"layers", std::move(layers)}, {"relu", mlp->relu}};
        }
    }
    throw std::runtime_error("unreachable");
}

std::shared_ptr<const Predictor> learned_from_json(const json& doc, const TrainConfig& cfg,
                                                   std::size_t d, std::size_t classes) {
    switch (cfg.algorithm) {
        case Algorithm::random_forest: {
            auto forest = std::make_shared<ForestPredictor>();
            forest->d = d;
            forest->classes = classes;
            for (const auto& jt : doc.at("trees")) forest->trees.push_back(tree_from_json(jt));
            return forest;
        }
        case Algorithm::knn: {
            auto knn = std::make_shared<KnnPredictor>();
            knn->classes = classes;
            knn->k = doc.at("k").get<std::size_t>();
            for (const auto& jv : doc.at("vectors"))
                knn->vectors.push_back(bits_from_string(jv.get<std::string>()));
            knn->labels = doc.at("labels").get<std::vector<int>>();
            return knn;
        }
        case Algorithm::mlp: {
            auto mlp = std::make_shared<MlpPredictor>();
            mlp->d = d;
            mlp->classes = classes;
            mlp->relu = doc.at("relu").get<bool>();
            for (const auto& jl : doc.at("layers")) {
                MlpPredictor::Layer layer;
                layer.in = jl.at("in").get<std::size_t>();
                layer.out = jl.at("out").get<std::size_t>();
                layer.w = jl.at("w").get<std::vector<double>>();
                layer.b = jl.at("b").get<std::vector<double>>();
                mlp->layers.push_back(std::move(layer));
            }
            return mlp;
        }
    }
    throw std::runtime_error("unreachable");
}

json model_body_json(const ClassifierModel& model) {
    return json{{"magic", "exbench-model"},
                {"version", 1},
                {"config", config_to_json(model.config)},
                {"dictionary_fingerprint", detail::to_hex(model.dictionary_fingerprint)},
                {"feature_count", model.feature_count},
                {"class_count", model.class_count},
                {"learned", learned_to_json(model)}};
}

std::string hash_model_body(const json& body) {
    return detail::to_hex(detail::fnv1a(body.dump()));
}

}  // namespace

ClassifierModel train(const LabeledDataset& ds, const Split& split, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (split.train_indices.empty()) throw ValidationError("training side of the split is empty");
    for (auto i : split.train_indices)
        if (i >= ds.size()) throw ValidationError("split index out of range");

    const std::size_t num_classes = ds.class_count();
    bool single_class = true;
    for (auto i : split.train_indices)
        if (ds.labels[i] != ds.labels[split.train_indices[0]]) {
            single_class = false;
            break;
        }
    if (single_class &&
        (cfg.algorithm == Algorithm::random_forest || cfg.algorithm == Algorithm::mlp))
        throw ValidationError("training set contains a single class; " + to_string(cfg.algorithm) +
                              " needs at least two");

    ClassifierModel model;
    model.config = cfg;
    model.dictionary_fingerprint = ds.dictionary.fingerprint();
    model.feature_count = ds.feature_count();
    model.class_count = num_classes;

    switch (cfg.algorithm) {
        case Algorithm::random_forest:
            model.learned = train_forest(ds, split, cfg, num_classes);
            break;
        case Algorithm::knn: {
            auto knn = std::make_shared<KnnPredictor>();
            knn->classes = num_classes;
            knn->k = cfg.knn.neighbor_count;
            for (auto i : split.train_indices) {
                knn->vectors.push_back(ds.samples[i]);
                knn->labels.push_back(ds.labels[i]);
            }
            model.learned = knn;
            break;
        }
        case Algorithm::mlp:
            model.learned = train_mlp(ds, split, cfg, num_classes);
            break;
    }
    model.model_id = hash_model_body(model_body_json(model));
    return model;
}

int predict(const ClassifierModel& model, const FeatureVector& x) {
    if (x.bits.size() != model.feature_count)
        throw std::runtime_error("predict: input has dimension " + std::to_string(x.bits.size()) +
                                 ", model expects " + std::to_string(model.feature_count));
    return model.learned->predict(x);
}

std::vector<double> class_scores(const ClassifierModel& model, const FeatureVector& x) {
    if (x.bits.size() != model.feature_count)
        throw std::runtime_error("class_scores: input dimension mismatch");
    return model.learned->class_scores(x);
}

PerformanceReport evaluate(const ClassifierModel& model, const LabeledDataset& ds,
                           const Split& split) {
    if (split.test_indices.empty()) throw ValidationError("test side of the split is empty");
    const std::size_t classes = ds.class_count();
    std::vector<std::vector<std::size_t>> confusion(classes, std::vector<std::size_t>(classes, 0));
    std::size_t correct = 0;
    for (auto i : split.test_indices) {
        int pred = predict(model, ds.samples[i]);
        confusion[ds.labels[i]][pred] += 1;
        if (pred == ds.labels[i]) ++correct;
    }
    const double total = static_cast<double>(split.test_indices.size());

    PerformanceReport report;
    report.accuracy = correct / total;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t tp = confusion[c][c];
        std::size_t fn = 0, fp = 0;
        for (std::size_t o = 0; o < classes; ++o) {
            if (o == c) continue;
            fn += confusion[c][o];
            fp += confusion[o][c];
        }
        std::size_t support = tp + fn;
        std::size_t tn = split.test_indices.size() - tp - fn - fp;
        ClassRates rates;
        rates.label = static_cast<int>(c);
        rates.support = support;
        rates.tpr = support ? static_cast<double>(tp) / support : 0.0;
        rates.recall = rates.tpr;
        rates.fpr = (fp + tn) ? static_cast<double>(fp) / (fp + tn) : 0.0;
        rates.precision = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        rates.f_measure = (rates.precision + rates.recall) > 0.0
                              ? 2.0 * rates.precision * rates.recall /
                                    (rates.precision + rates.recall)
                              : 0.0;
        report.per_class.push_back(rates);
    }
    if (classes == 2) {
        const auto& pos = report.per_class[1];
        report.tpr = pos.tpr;
        report.fpr = pos.fpr;
        report.precision = pos.precision;
        report.recall = pos.recall;
        report.f_measure = pos.f_measure;
    } else {
        for (const auto& r : report.per_class) {
            report.tpr += r.tpr;
            report.fpr += r.fpr;
            report.precision += r.precision;
            report.recall += r.recall;
            report.f_measure += r.f_measure;
        }
        const double k = static_cast<double>(classes);
        report.tpr /= k;
        report.fpr /= k;
        report.precision /= k;
        report.recall /= k;
        report.f_measure /= k;
    }
    return report;
}

SimilarModelFamily train_similar_family(const LabeledDataset& ds, const Split& split,
                                        const TrainConfig& cfg, const FamilyVariation& variation) {
    if (variation.values.size() < 2)
        throw ValidationError("similar-model family needs at least 2 variation values (alpha >= 2)");
    const bool rf_kind = variation.kind == FamilyVariation::Kind::rf_tree_counts;
    const bool knn_kind = variation.kind == FamilyVariation::Kind::knn_neighbors;
    const bool mlp_kind = variation.kind == FamilyVariation::Kind::mlp_iterations;
    if ((rf_kind && cfg.algorithm != Algorithm::random_forest) ||
        (knn_kind && cfg.algorithm != Algorithm::knn) ||
        (mlp_kind && cfg.algorithm != Algorithm::mlp))
        throw ValidationError("family variation does not match the configured algorithm; "
                              "a family cannot mix algorithms");

    SimilarModelFamily family;
    for (auto value : variation.values) {
        TrainConfig member = cfg;
        switch (variation.kind) {
            case FamilyVariation::Kind::rf_tree_counts:
                member.rf.tree_count = static_cast<std::size_t>(value);
                family.variation = "rf_tree_counts";
                break;
            case FamilyVariation::Kind::seeds:
                member.seed = value;
                family.variation = "seeds";
                break;
            case FamilyVariation::Kind::knn_neighbors:
                member.knn.neighbor_count = static_cast<std::size_t>(value);
                family.variation = "knn_neighbors";
                break;
            case FamilyVariation::Kind::mlp_iterations:
                member.mlp.max_iterations = static_cast<std::size_t>(value);
                family.variation = "mlp_iterations";
                break;
        }
        family.models.push_back(train(ds, split, member));
    }
    return family;
}

std::vector<std::pair<std::string, double>> information_gain_ranking(const LabeledDataset& ds,
                                                                     const Split& split,
                                                                     std::size_t top_n) {
    if (split.train_indices.empty()) throw ValidationError("training side of the split is empty");
    const std::size_t classes = ds.class_count();
    const std::size_t d = ds.feature_count();
    const double n = static_cast<double>(split.train_indices.size());

    auto entropy = [](const std::vector<double>& counts, double total) {
        if (total <= 0.0) return 0.0;
        double h = 0.0;
        for (double c : counts) {
            if (c <= 0.0) continue;
            double p = c / total;
            h -= p * std::log2(p);
        }
        return h;
    };

    std::vector<double> label_counts(classes, 0.0);
    for (auto i : split.train_indices) label_counts[ds.labels[i]] += 1.0;
    const double h_labels = entropy(label_counts, n);

    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(d);
    std::vector<double> ones(classes), zeros(classes);
    for (std::size_t f = 0; f < d; ++f) {
        std::fill(ones.begin(), ones.end(), 0.0);
        std::fill(zeros.begin(), zeros.end(), 0.0);
        double n1 = 0.0;
        for (auto i : split.train_indices) {
            if (ds.samples[i].bits[f]) {
                ones[ds.labels[i]] += 1.0;
                n1 += 1.0;
            } else {
                zeros[ds.labels[i]] += 1.0;
            }
        }
        double n0 = n - n1;
        double gain = h_labels - (n0 / n) * entropy(zeros, n0) - (n1 / n) * entropy(ones, n1);
        ranked.emplace_back(ds.dictionary.names[f], gain);
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (ranked[a].second != ranked[b].second) return ranked[a].second > ranked[b].second;
        return a < b;
    });
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < std::min(top_n, d); ++i) out.push_back(ranked[order[i]]);
    return out;
}

void save_model(const ClassifierModel& model, const std::string& path) {
    json body = model_body_json(model);
    body["model_id"] = model.model_id;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << body.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

ClassifierModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": corrupt model file: " + e.what());
    }
    if (!doc.contains("magic") || doc.at("magic") != "exbench-model")
        throw std::runtime_error(path + ": not a model file (bad magic)");
    if (doc.at("version").get<int>() != 1)
        throw std::runtime_error(path + ": unsupported model format version");

    ClassifierModel model;
    model.config = config_from_json(doc.at("config"));
    model.feature_count = doc.at("feature_count").get<std::size_t>();
    model.class_count = doc.at("class_count").get<std::size_t>();
    {
        std::string hex = doc.at("dictionary_fingerprint").get<std::string>();
        model.dictionary_fingerprint = std::stoull(hex, nullptr, 16);
    }
    model.learned =
        learned_from_json(doc.at("learned"), model.config, model.feature_count, model.class_count);
    model.model_id = hash_model_body(model_body_json(model));
    const std::string stored = doc.value("model_id", model.model_id);
    if (stored != model.model_id)
        throw std::runtime_error(path + ": model_id mismatch, file is corrupt");
    return model;
}

}  // namespace exbench
