#include "exbench/harness.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"
#include "exbench/metrics.hpp"
#include "json.hpp"

namespace exbench {

namespace fs = std::filesystem;
using detail::fmt_double;
using nlohmann::json;

namespace {

TrainConfig classifier_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    cfg.seed = j.value("seed", 0ull);
    if (j.contains("tree_count")) cfg.rf.tree_count = j.at("tree_count").get<std::size_t>();
    if (j.contains("min_samples_leaf"))
        cfg.rf.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    if (j.contains("min_samples_split"))
        cfg.rf.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    if (j.contains("max_depth")) cfg.rf.max_depth = j.at("max_depth").get<std::size_t>();
    if (j.contains("features_per_split"))
        cfg.rf.features_per_split = j.at("features_per_split").get<std::size_t>();
    if (j.contains("neighbor_count"))
        cfg.knn.neighbor_count = j.at("neighbor_count").get<std::size_t>();
    if (j.contains("hidden_layers")) cfg.mlp.hidden_layers = j.at("hidden_layers").get<std::size_t>();
    if (j.contains("neurons_per_layer"))
        cfg.mlp.neurons_per_layer = j.at("neurons_per_layer").get<std::size_t>();
    if (j.contains("activation")) cfg.mlp.activation = j.at("activation").get<std::string>();
    if (j.contains("max_iterations"))
        cfg.mlp.max_iterations = j.at("max_iterations").get<std::size_t>();
    if (j.contains("batch_size")) cfg.mlp.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("learning_rate")) cfg.mlp.learning_rate = j.at("learning_rate").get<double>();
    return cfg;
}

json classifier_config_to_json(const TrainConfig& cfg) {
    json j{{"algorithm", to_string(cfg.algorithm)}, {"seed", cfg.seed}};
    switch (cfg.algorithm) {
        case Algorithm::random_forest:
            j["tree_count"] = cfg.rf.tree_count;
            j["min_samples_leaf"] = cfg.rf.min_samples_leaf;
            j["min_samples_split"] = cfg.rf.min_samples_split;
            j["max_depth"] = cfg.rf.max_depth;
            j["features_per_split"] = cfg.rf.features_per_split;
            break;
        case Algorithm::knn:
            j["neighbor_count"] = cfg.knn.neighbor_count;
            break;
        case Algorithm::mlp:
            j["hidden_layers"] = cfg.mlp.hidden_layers;
            j["neurons_per_layer"] = cfg.mlp.neurons_per_layer;
            j["activation"] = cfg.mlp.activation;
            j["max_iterations"] = cfg.mlp.max_iterations;
            j["batch_size"] = cfg.mlp.batch_size;
            j["learning_rate"] = cfg.mlp.learning_rate;
            break;
    }
    return j;
}

json synthetic_spec_to_json(const SyntheticSpec& spec) {
    json rule_sets = json::array();
    for (const auto& cls : spec.rule_sets) {
        json conjunctions = json::array();
        for (const auto& conj : cls) {
            json terms = json::array();
            for (auto [f, bit] : conj.terms) terms.push_back(json{{"feature", f}, {"bit", bit}});
            conjunctions.push_back(std::move(terms));
        }
        rule_sets.push_back(std::move(conjunctions));
    }
    json j{{"d", spec.d},
           {"n", spec.n},
           {"noise_rate", spec.noise_rate},
           {"seed", spec.seed},
           {"rule_sets", std::move(rule_sets)}};
    if (!spec.label_names.empty()) j["label_names"] = spec.label_names;
    return j;
}

FamilyVariation::Kind variation_kind_from_string(const std::string& s) {
    if (s == "rf_tree_counts") return FamilyVariation::Kind::rf_tree_counts;
    if (s == "seeds") return FamilyVariation::Kind::seeds;
    if (s == "knn_neighbors") return FamilyVariation::Kind::knn_neighbors;
    if (s == "mlp_iterations") return FamilyVariation::Kind::mlp_iterations;
    throw ValidationError("unknown family variation '" + s +
                          "' (expected rf_tree_counts | seeds | knn_neighbors | mlp_iterations)");
}

std::string variation_kind_to_string(FamilyVariation::Kind kind) {
    switch (kind) {
        case FamilyVariation::Kind::rf_tree_counts: return "rf_tree_counts";
        case FamilyVariation::Kind::seeds: return "seeds";
        case FamilyVariation::Kind::knn_neighbors: return "knn_neighbors";
        case FamilyVariation::Kind::mlp_iterations: return "mlp_iterations";
    }
    return "rf_tree_counts";
}

void parse_explainer_params(const json& j, ExplainerParams& p) {
    if (j.contains("lime")) {
        const auto& l = j.at("lime");
        p.lime.t = l.value("t", p.lime.t);
        p.lime.flip_prob = l.value("flip_prob", p.lime.flip_prob);
        p.lime.kernel_width = l.value("kernel_width", p.lime.kernel_width);
        p.lime.lambda = l.value("lambda", p.lime.lambda);
        p.lime.tol = l.value("tol", p.lime.tol);
        p.lime.max_iter = l.value("max_iter", p.lime.max_iter);
        if (l.contains("proximity")) {
            std::string prox = l.at("proximity").get<std::string>();
            if (prox == "exponential_cosine")
                p.lime.proximity = LimeProximity::exponential_cosine;
            else if (prox == "raw_cosine")
                p.lime.proximity = LimeProximity::raw_cosine;
            else
                throw ValidationError("unknown lime proximity '" + prox + "'");
        }
    }
    if (j.contains("shap")) {
        const auto& s = j.at("shap");
        p.shap.coalition_count = s.value("coalition_count", p.shap.coalition_count);
        p.shap.ridge = s.value("ridge", p.shap.ridge);
        p.shap.enumerate_all = s.value("enumerate_all", p.shap.enumerate_all);
        if (s.contains("reference"))
            p.shap.reference = s.at("reference").get<std::vector<std::uint8_t>>();
    }
    if (j.contains("lemna")) {
        const auto& l = j.at("lemna");
        p.lemna.t = l.value("t", p.lemna.t);
        p.lemna.flip_prob = l.value("flip_prob", p.lemna.flip_prob);
        p.lemna.mixture_components = l.value("M", p.lemna.mixture_components);
        p.lemna.tol = l.value("tol", p.lemna.tol);
        p.lemna.max_iter = l.value("max_iter", p.lemna.max_iter);
        p.lemna.l1 = l.value("l1", p.lemna.l1);
    }
    if (j.contains("anchor")) {
        const auto& a = j.at("anchor");
        p.anchor.precision_threshold = a.value("precision_threshold", p.anchor.precision_threshold);
        p.anchor.confidence = a.value("confidence", p.anchor.confidence);
        p.anchor.beam_width = a.value("beam_width", p.anchor.beam_width);
        p.anchor.batch_size = a.value("batch_size", p.anchor.batch_size);
        p.anchor.max_batches_per_candidate =
            a.value("max_batches_per_candidate", p.anchor.max_batches_per_candidate);
        p.anchor.coverage_samples = a.value("coverage_samples", p.anchor.coverage_samples);
        p.anchor.flip_prob = a.value("flip_prob", p.anchor.flip_prob);
        p.anchor.max_rule_size = a.value("max_rule_size", p.anchor.max_rule_size);
    }
    if (j.contains("lore")) {
        const auto& l = j.at("lore");
        p.lore.population = l.value("population", p.lore.population);
        p.lore.generations = l.value("generations", p.lore.generations);
        p.lore.crossover_rate = l.value("crossover_rate", p.lore.crossover_rate);
        p.lore.mutation_rate = l.value("mutation_rate", p.lore.mutation_rate);
        p.lore.init_flip_prob = l.value("init_flip_prob", p.lore.init_flip_prob);
        p.lore.tree_max_depth = l.value("tree_max_depth", p.lore.tree_max_depth);
        p.lore.tree_min_leaf = l.value("tree_min_leaf", p.lore.tree_min_leaf);
    }
}

json explainer_params_to_json(const ExplainerParams& p) {
    return json{
        {"lime",
         {{"t", p.lime.t},
          {"flip_prob", p.lime.flip_prob},
          {"kernel_width", p.lime.kernel_width},
          {"lambda", p.lime.lambda},
          {"proximity", p.lime.proximity == LimeProximity::exponential_cosine
                            ? "exponential_cosine"
                            : "raw_cosine"},
          {"tol", p.lime.tol},
          {"max_iter", p.lime.max_iter}}},
        {"shap",
         {{"coalition_count", p.shap.coalition_count},
          {"ridge", p.shap.ridge},
          {"enumerate_all", p.shap.enumerate_all},
          {"reference", p.shap.reference}}},
        {"lemna",
         {{"t", p.lemna.t},
          {"flip_prob", p.lemna.flip_prob},
          {"M", p.lemna.mixture_components},
          {"tol", p.lemna.tol},
          {"max_iter", p.lemna.max_iter},
          {"l1", p.lemna.l1}}},
        {"anchor",
         {{"precision_threshold", p.anchor.precision_threshold},
          {"confidence", p.anchor.confidence},
          {"beam_width", p.anchor.beam_width},
          {"batch_size", p.anchor.batch_size},
          {"max_batches_per_candidate", p.anchor.max_batches_per_candidate},
          {"coverage_samples", p.anchor.coverage_samples},
          {"flip_prob", p.anchor.flip_prob},
          {"max_rule_size", p.anchor.max_rule_size}}},
        {"lore",
         {{"population", p.lore.population},
          {"generations", p.lore.generations},
          {"crossover_rate", p.lore.crossover_rate},
          {"mutation_rate", p.lore.mutation_rate},
          {"init_flip_prob", p.lore.init_flip_prob},
          {"tree_max_depth", p.lore.tree_max_depth},
          {"tree_min_leaf", p.lore.tree_min_leaf}}}};
}

}  // namespace

void ExperimentConfig::validate() const {
    std::vector<std::string> problems;
    if (dataset_csv.empty() == !synthetic.has_value())
        problems.push_back("config needs exactly one of dataset.csv / dataset.synthetic");
    if (split_policy != "per_class" && split_policy != "random")
        problems.push_back("split.policy must be 'per_class' or 'random'");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        problems.push_back("split.train_fraction must be in (0,1)");
    if (approaches.empty()) problems.push_back("at least one explanation approach is required");
    {
        std::set<ExplainerKind> seen;
        for (auto a : approaches)
            if (!seen.insert(a).second)
                problems.push_back("approach '" + to_string(a) + "' listed twice");
    }
    if (classifiers.empty() && !family.has_value())
        problems.push_back("at least one classifier (standalone or family) is required");
    {
        std::set<std::string> names;
        for (const auto& c : classifiers) {
            if (c.name.empty()) problems.push_back("every classifier needs a nonempty name");
            if (!names.insert(c.name).second)
                problems.push_back("duplicate classifier name '" + c.name + "'");
            try {
                c.config.validate();
            } catch (const std::exception& e) {
                problems.push_back("classifier '" + c.name + "': " + e.what());
            }
        }
    }
    if (family.has_value()) {
        if (family->variation.values.size() < 2)
            problems.push_back("family.variation needs at least 2 values (alpha >= 2)");
        bool base_found = false;
        for (auto v : family->variation.values) base_found = base_found || v == family->base_value;
        if (!base_found)
            problems.push_back("family.base_value must be one of the variation values");
        try {
            family->base_config.validate();
        } catch (const std::exception& e) {
            problems.push_back(std::string("family: ") + e.what());
        }
    }
    if (k_max < 1) problems.push_back("k_max must be >= 1");
    if (breakdown_k < 1 || breakdown_k > k_max)
        problems.push_back("breakdown_k must be in [1, k_max]");
    if (neighbor_cap == 0) problems.push_back("neighbor_cap must be >= 1");
    if (synthetic.has_value()) {
        try {
            synthetic->validate();
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
        if (synthetic.has_value() && k_max > static_cast<int>(synthetic->d))
            problems.push_back("k_max exceeds the feature count d");
    }
    try {
        params.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    if (!problems.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("invalid config JSON: ") + e.what());
    }
    ExperimentConfig config;
    try {
        config.name = doc.value("name", config.name);
        if (doc.contains("dataset")) {
            const auto& ds = doc.at("dataset");
            if (ds.contains("csv")) config.dataset_csv = ds.at("csv").get<std::string>();
            if (ds.contains("synthetic"))
                config.synthetic = parse_synthetic_spec(ds.at("synthetic").dump());
        }
        config.dictionary_sidecar = doc.value("dictionary", std::string{});
        if (doc.contains("split")) {
            const auto& sp = doc.at("split");
            config.split_policy = sp.value("policy", config.split_policy);
            config.train_fraction = sp.value("train_fraction", config.train_fraction);
        }
        if (doc.contains("classifiers"))
            for (const auto& jc : doc.at("classifiers")) {
                ClassifierSpec spec;
                spec.name = jc.value("name", std::string{});
                spec.config = classifier_config_from_json(jc);
                config.classifiers.push_back(std::move(spec));
            }
        if (doc.contains("family")) {
            const auto& jf = doc.at("family");
            FamilySpec family;
            family.base_config = classifier_config_from_json(jf);
            const auto& jv = jf.at("variation");
            if (jv.size() != 1)
                throw ValidationError("family.variation must contain exactly one kind");
            for (const auto& [key, values] : jv.items()) {
                family.variation.kind = variation_kind_from_string(key);
                family.variation.values = values.get<std::vector<std::uint64_t>>();
            }
            family.base_value = jf.value("base_value", family.variation.values.empty()
                                                           ? 0ull
                                                           : family.variation.values.front());
            config.family = std::move(family);
        }
        if (doc.contains("approaches"))
            for (const auto& ja : doc.at("approaches"))
                config.approaches.push_back(explainer_kind_from_string(ja.get<std::string>()));
        if (doc.contains("explainer_params"))
            parse_explainer_params(doc.at("explainer_params"), config.params);
        config.k_max = doc.value("k_max", config.k_max);
        config.breakdown_k = doc.value("breakdown_k", config.breakdown_k);
        config.explain_samples = doc.value("explain_samples", config.explain_samples);
        config.bench_samples = doc.value("bench_samples", config.bench_samples);
        config.neighbor_cap = doc.value("neighbor_cap", config.neighbor_cap);
        config.seed = doc.value("seed", config.seed);
        config.jobs = doc.value("jobs", config.jobs);
        config.output_dir = doc.value("output_dir", config.output_dir);
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("invalid config: ") + e.what());
    }
    config.validate();
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
    json doc;
    doc["name"] = config.name;
    if (!config.dataset_csv.empty())
        doc["dataset"] = json{{"csv", config.dataset_csv}};
    else
        doc["dataset"] = json{{"synthetic", synthetic_spec_to_json(*config.synthetic)}};
    if (!config.dictionary_sidecar.empty()) doc["dictionary"] = config.dictionary_sidecar;
    doc["split"] = json{{"policy", config.split_policy}, {"train_fraction", config.train_fraction}};
    json classifiers = json::array();
    for (const auto& c : config.classifiers) {
        json jc = classifier_config_to_json(c.config);
        jc["name"] = c.name;
        classifiers.push_back(std::move(jc));
    }
    doc["classifiers"] = std::move(classifiers);
    if (config.family.has_value()) {
        json jf = classifier_config_to_json(config.family->base_config);
        jf["variation"] =
            json{{variation_kind_to_string(config.family->variation.kind),
                  config.family->variation.values}};
        jf["base_value"] = config.family->base_value;
        doc["family"] = std::move(jf);
    }
    json approaches = json::array();
    for (auto a : config.approaches) approaches.push_back(to_string(a));
    doc["approaches"] = std::move(approaches);
    doc["explainer_params"] = explainer_params_to_json(config.params);
    doc["k_max"] = config.k_max;
    doc["breakdown_k"] = config.breakdown_k;
    doc["explain_samples"] = config.explain_samples;
    doc["bench_samples"] = config.bench_samples;
    doc["neighbor_cap"] = config.neighbor_cap;
    doc["seed"] = config.seed;
    doc["jobs"] = config.jobs;
    doc["output_dir"] = config.output_dir;
    return doc.dump(2) + "\n";
}

std::string family_member_name(const FamilySpec& family, std::uint64_t value) {
    std::string algo;
    switch (family.base_config.algorithm) {
        case Algorithm::random_forest: algo = "rf"; break;
        case Algorithm::knn: algo = "knn"; break;
        case Algorithm::mlp: algo = "mlp"; break;
    }
    std::string tag;
    switch (family.variation.kind) {
        case FamilyVariation::Kind::rf_tree_counts: tag = "t"; break;
        case FamilyVariation::Kind::seeds: tag = "s"; break;
        case FamilyVariation::Kind::knn_neighbors: tag = "k"; break;
        case FamilyVariation::Kind::mlp_iterations: tag = "i"; break;
    }
    return algo + "_" + tag + std::to_string(value);
}

namespace {

struct LoadedExperiment {
    LabeledDataset dataset;
    Split split;
    std::vector<std::string> explain_ids;  // test subset in split order
};

LoadedExperiment load_experiment(const ExperimentConfig& config) {
    LoadedExperiment exp;
    if (!config.dataset_csv.empty())
        exp.dataset = load_csv(config.dataset_csv, config.dictionary_sidecar);
    else
        exp.dataset = generate_synthetic(*config.synthetic);
    if (config.k_max > static_cast<int>(exp.dataset.feature_count()))
        throw ValidationError("k_max exceeds the feature count d");
    exp.split = config.split_policy == "per_class"
                    ? split_per_class(exp.dataset, config.seed)
                    : split_random(exp.dataset, config.train_fraction, config.seed);
    std::size_t take = config.explain_samples == 0
                           ? exp.split.test_indices.size()
                           : std::min(config.explain_samples, exp.split.test_indices.size());
    for (std::size_t i = 0; i < take; ++i)
        exp.explain_ids.push_back(exp.dataset.sample_ids[exp.split.test_indices[i]]);
    return exp;
}

fs::path models_dir(const ExperimentConfig& config) {
    return fs::path(config.output_dir) / "models";
}
fs::path cache_dir(const ExperimentConfig& config) {
    return fs::path(config.output_dir) / "cache";
}
fs::path cache_path(const ExperimentConfig& config, ExplainerKind kind,
                    const std::string& model_name) {
    return cache_dir(config) / (to_string(kind) + "__" + model_name + ".jsonl");
}

void write_effective_config(const ExperimentConfig& config) {
    fs::create_directories(config.output_dir);
    std::ofstream out(fs::path(config.output_dir) / "effective_config.json", std::ios::binary);
    out << experiment_config_to_json(config);
}

std::vector<std::pair<std::string, TrainConfig>> family_member_configs(const FamilySpec& family) {
    std::vector<std::pair<std::string, TrainConfig>> members;
    for (auto value : family.variation.values) {
        TrainConfig cfg = family.base_config;
        switch (family.variation.kind) {
            case FamilyVariation::Kind::rf_tree_counts:
                cfg.rf.tree_count = static_cast<std::size_t>(value);
                break;
            case FamilyVariation::Kind::seeds: cfg.seed = value; break;
            case FamilyVariation::Kind::knn_neighbors:
                cfg.knn.neighbor_count = static_cast<std::size_t>(value);
                break;
            case FamilyVariation::Kind::mlp_iterations:
                cfg.mlp.max_iterations = static_cast<std::size_t>(value);
                break;
        }
        members.emplace_back(family_member_name(family, value), cfg);
    }
    return members;
}

ClassifierModel load_named_model(const ExperimentConfig& config, const std::string& name) {
    fs::path path = models_dir(config) / (name + ".model.json");
    if (!fs::exists(path))
        throw std::runtime_error("model file missing: " + path.string() +
                                 " (run the train command first)");
    return load_model(path.string());
}

void check_fingerprint(const ClassifierModel& model, const LabeledDataset& ds,
                       const std::string& name) {
    if (model.dictionary_fingerprint != ds.dictionary.fingerprint())
        throw std::runtime_error("model '" + name +
                                 "' was trained on a different feature dictionary than the "
                                 "configured dataset");
}

std::string csv_performance_row(const std::string& dataset, const std::string& name,
                                const TrainConfig& cfg, const PerformanceReport& report) {
    std::ostringstream row;
    row << dataset << ',' << name << ',' << to_string(cfg.algorithm) << ','
        << fmt_double(report.tpr) << ',' << fmt_double(report.fpr) << ','
        << fmt_double(report.precision) << ',' << fmt_double(report.recall) << ','
        << fmt_double(report.f_measure) << ',' << fmt_double(report.accuracy);
    return row.str();
}

}  // namespace

std::string run_synth(const std::string& spec_path, const std::string& out_dir,
                      std::int64_t seed_override) {
    SyntheticSpec spec = load_synthetic_spec(spec_path);
    if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
    LabeledDataset ds = generate_synthetic(spec);
    fs::create_directories(out_dir);
    fs::path out_path = fs::path(out_dir) / "dataset.csv";
    write_csv(ds, out_path.string());
    std::cerr << "synth: wrote " << ds.size() << " samples x " << ds.feature_count()
              << " features to " << out_path.string() << "\n";
    return out_path.string();
}

void run_train(const ExperimentConfig& config) {
    config.validate();
    write_effective_config(config);
    LoadedExperiment exp = load_experiment(config);
    fs::create_directories(models_dir(config));

    std::vector<std::string> rows;
    auto train_and_save = [&](const std::string& name, const TrainConfig& cfg) {
        const auto started = std::chrono::steady_clock::now();
        ClassifierModel model = train(exp.dataset, exp.split, cfg);
        PerformanceReport report = evaluate(model, exp.dataset, exp.split);
        save_model(model, (models_dir(config) / (name + ".model.json")).string());
        rows.push_back(csv_performance_row(config.name, name, cfg, report));
        std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
        std::cerr << "train: " << name << " accuracy=" << fmt_double(report.accuracy) << " ("
                  << fmt_double(took.count()) << "s)\n";
    };

    for (const auto& spec : config.classifiers) train_and_save(spec.name, spec.config);
    if (config.family.has_value())
        for (const auto& [name, cfg] : family_member_configs(*config.family))
            train_and_save(name, cfg);

    std::ofstream out(fs::path(config.output_dir) / "performance.csv", std::ios::binary);
    out << "dataset,classifier,algorithm,tpr,fpr,precision,recall,f_measure,accuracy\n";
    for (const auto& row : rows) out << row << '\n';
    if (!out) throw std::runtime_error("failed to write performance.csv");

    // Train-side feature ranking (shared by every family member: the gain is
    // a function of the training labels, not of a fitted model).
    auto ranked = information_gain_ranking(exp.dataset, exp.split, 20);
    std::ofstream ig(fs::path(config.output_dir) / "information_gain.csv", std::ios::binary);
    ig << "dataset,rank,feature,gain\n";
    for (std::size_t i = 0; i < ranked.size(); ++i)
        ig << config.name << ',' << i + 1 << ',' << ranked[i].first << ','
           << fmt_double(ranked[i].second) << '\n';
}

void run_explain(const ExperimentConfig& config) {
    config.validate();
    if (!config.family.has_value())
        throw ValidationError("explain requires a similar-model family in the config");
    write_effective_config(config);
    LoadedExperiment exp = load_experiment(config);
    fs::create_directories(cache_dir(config));

    const auto members = family_member_configs(*config.family);
    std::vector<ClassifierModel> models;
    for (const auto& [name, cfg] : members) {
        models.push_back(load_named_model(config, name));
        check_fingerprint(models.back(), exp.dataset, name);
    }

    std::unordered_map<std::string, std::size_t> sample_index;
    for (std::size_t i = 0; i < exp.dataset.size(); ++i)
        sample_index[exp.dataset.sample_ids[i]] = i;

    for (auto kind : config.approaches) {
        const std::string params_hash = config.params.hash_for(kind);
        for (std::size_t mi = 0; mi < members.size(); ++mi) {
            const std::string& model_name = members[mi].first;
            const ClassifierModel& model = models[mi];
            fs::path path = cache_path(config, kind, model_name);

            // Reuse existing lines (resume); unreadable trailing lines from an
            // interrupted run are dropped and recomputed.
            std::unordered_map<std::string, Explanation> existing;
            if (fs::exists(path)) {
                std::ifstream in(path);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    try {
                        Explanation e = explanation_from_json_line(line);
                        if (e.model_id == model.model_id && e.params_hash == params_hash)
                            existing.emplace(e.sample_id, std::move(e));
                    } catch (const std::exception&) {
                        break;  // truncated tail
                    }
                }
            }

            std::vector<Explanation> results(exp.explain_ids.size());
            std::vector<char> todo(exp.explain_ids.size(), 0);
            std::size_t n_todo = 0;
            for (std::size_t i = 0; i < exp.explain_ids.size(); ++i) {
                auto it = existing.find(exp.explain_ids[i]);
                if (it != existing.end()) {
                    results[i] = it->second;
                } else {
                    todo[i] = 1;
                    ++n_todo;
                }
            }

            const auto started = std::chrono::steady_clock::now();
            detail::parallel_for(exp.explain_ids.size(), config.jobs, [&](std::size_t i) {
                if (!todo[i]) return;
                const std::string& id = exp.explain_ids[i];
                const FeatureVector& x = exp.dataset.samples[sample_index.at(id)];
                std::uint64_t sample_seed = detail::mix_seed(
                    config.seed, detail::fnv1a(id, detail::fnv1a(to_string(kind),
                                                                 detail::fnv1a(model_name))));
                results[i] = explain(kind, *model.learned, model.model_id, x, id, config.params,
                                     sample_seed);
            });
            std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;

            std::ofstream out(path, std::ios::binary);
            for (const auto& e : results) out << explanation_to_json_line(e) << '\n';
            if (!out) throw std::runtime_error("failed to write " + path.string());
            std::cerr << "explain: " << to_string(kind) << " x " << model_name << ": "
                      << exp.explain_ids.size() - n_todo << " cached, " << n_todo << " computed ("
                      << fmt_double(took.count()) << "s)\n";
        }
    }
}

namespace {

struct MetricsInput {
    // per approach: per family member: explanations by sample id
    std::map<ExplainerKind, std::vector<ExplanationMap>> by_approach;
    std::size_t base_index = 0;
    std::vector<std::string> member_names;
};

MetricsInput read_caches(const ExperimentConfig& config, const LoadedExperiment& exp,
                         const std::vector<ClassifierModel>& models,
                         const std::vector<std::pair<std::string, TrainConfig>>& members) {
    MetricsInput input;
    for (std::size_t mi = 0; mi < members.size(); ++mi)
        input.member_names.push_back(members[mi].first);
    for (std::size_t mi = 0; mi < members.size(); ++mi)
        if (config.family->variation.values[mi] == config.family->base_value)
            input.base_index = mi;

    std::vector<std::string> missing;
    for (auto kind : config.approaches) {
        const std::string params_hash = config.params.hash_for(kind);
        auto& maps = input.by_approach[kind];
        maps.resize(members.size());
        for (std::size_t mi = 0; mi < members.size(); ++mi) {
            fs::path path = cache_path(config, kind, members[mi].first);
            if (fs::exists(path)) {
                std::ifstream in(path);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    Explanation e = explanation_from_json_line(line);
                    if (e.model_id == models[mi].model_id && e.params_hash == params_hash)
                        maps[mi].emplace(e.sample_id, std::move(e));
                }
            }
            for (const auto& id : exp.explain_ids)
                if (maps[mi].find(id) == maps[mi].end())
                    missing.push_back("(" + to_string(kind) + ", " + members[mi].first + ", " + id +
                                      ")");
        }
    }
    if (!missing.empty()) {
        std::string msg = "explanation cache incomplete; missing " +
                          std::to_string(missing.size()) + " (approach, model, sample) triples:";
        for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 20); ++i)
            msg += "\n  " + missing[i];
        if (missing.size() > 20) msg += "\n  ...";
        throw std::runtime_error(msg);
    }
    return input;
}

}  // namespace

void run_metrics(const ExperimentConfig& config) {
    config.validate();
    if (!config.family.has_value())
        throw ValidationError("metrics requires a similar-model family in the config");
    write_effective_config(config);
    LoadedExperiment exp = load_experiment(config);

    const auto members = family_member_configs(*config.family);
    std::vector<ClassifierModel> models;
    for (const auto& [name, cfg] : members) {
        models.push_back(load_named_model(config, name));
        check_fingerprint(models.back(), exp.dataset, name);
    }

    MetricsInput input = read_caches(config, exp, models, members);
    const std::string base_name = input.member_names[input.base_index];
    const ClassifierModel& base_model = models[input.base_index];
    const std::string family_name =
        base_name + "_family" + std::to_string(members.size());
    const std::size_t alpha = members.size();

    std::ostringstream metrics_csv;
    metrics_csv << "metric,approach,dataset,classifier,k,value,n_samples,n_skipped\n";
    auto emit_series = [&](const MetricSeries& series, const std::string& approach,
                           const std::string& classifier) {
        for (const auto& point : series.points)
            metrics_csv << series.metric << ',' << approach << ',' << config.name << ','
                        << classifier << ',' << point.k << ',' << fmt_double(point.value) << ','
                        << point.n_used << ',' << point.n_skipped << '\n';
    };

    std::map<ExplainerKind, RobustnessResult> rob_results;
    std::map<ExplainerKind, EffectivenessResult> eff_results;
    std::map<ExplainerKind, MetricSeries> stb_results;

    for (auto kind : config.approaches) {
        const auto& maps = input.by_approach.at(kind);
        stb_results[kind] = stability(maps, exp.explain_ids, config.k_max);
        emit_series(stb_results[kind], to_string(kind), family_name);
    }
    for (auto kind : config.approaches) {
        const auto& base_map = input.by_approach.at(kind)[input.base_index];
        rob_results[kind] =
            robustness(base_map, exp.explain_ids, config.k_max, config.neighbor_cap,
                       detail::mix_seed(config.seed, "robustness"));
        emit_series(rob_results[kind].series, to_string(kind), base_name);
    }
    for (auto kind : config.approaches) {
        const auto& base_map = input.by_approach.at(kind)[input.base_index];
        eff_results[kind] = effectiveness(base_model, exp.dataset, base_map, exp.explain_ids,
                                          config.k_max, config.breakdown_k);
        emit_series(eff_results[kind].series, to_string(kind), base_name);
    }
    if (config.approaches.size() >= 2) {
        std::vector<ExplanationMap> per_approach;
        for (auto kind : config.approaches)
            per_approach.push_back(input.by_approach.at(kind)[input.base_index]);
        MetricSeries cons = consistency(per_approach, exp.explain_ids, config.k_max);
        emit_series(cons, "all", base_name);
    }

    fs::path out_dir(config.output_dir);
    {
        std::ofstream out(out_dir / "metrics.csv", std::ios::binary);
        out << metrics_csv.str();
        if (!out) throw std::runtime_error("failed to write metrics.csv");
    }

    // Per-class robustness at breakdown_k, one triple of columns per approach.
    {
        std::ofstream out(out_dir / "robustness_by_class.csv", std::ios::binary);
        out << "class,n";
        for (auto kind : config.approaches)
            out << ',' << to_string(kind) << "_s_bar," << to_string(kind) << "_d_bar,"
                << to_string(kind) << "_rob";
        out << '\n';
        std::set<int> labels;
        for (auto kind : config.approaches)
            for (const auto& row : rob_results[kind].breakdown[config.breakdown_k - 1])
                labels.insert(row.label);
        for (int label : labels) {
            std::size_t n = 0;
            std::ostringstream line;
            std::ostringstream cells;
            for (auto kind : config.approaches) {
                const RobustnessBreakdownRow* found = nullptr;
                for (const auto& row : rob_results[kind].breakdown[config.breakdown_k - 1])
                    if (row.label == label) found = &row;
                if (found != nullptr) {
                    n = std::max(n, found->n);
                    cells << ',' << fmt_double(found->s_bar) << ',' << fmt_double(found->d_bar)
                          << ',' << fmt_double(found->rob);
                } else {
                    cells << ",,,";
                }
            }
            line << exp.dataset.label_names[label] << ',' << n << cells.str();
            out << line.str() << '\n';
        }
        if (!out) throw std::runtime_error("failed to write robustness_by_class.csv");
    }

    // Effective explanation features at breakdown_k.
    {
        std::ofstream out(out_dir / "effective_features.csv", std::ios::binary);
        out << "approach,k,feature,weight\n";
        for (auto kind : config.approaches) {
            const auto& weights = eff_results[kind].effective_feature_weights;
            for (std::size_t i = 0; i < std::min<std::size_t>(weights.size(), 10); ++i)
                out << to_string(kind) << ',' << config.breakdown_k << ','
                    << exp.dataset.dictionary.names[weights[i].first] << ','
                    << fmt_double(weights[i].second) << '\n';
        }
        if (!out) throw std::runtime_error("failed to write effective_features.csv");
    }

    // Human-readable summary.
    {
        std::ofstream out(out_dir / "summary.md", std::ios::binary);
        out << "# Explanation sanity metrics: " << config.name << "\n\n";
        out << "- samples explained: " << exp.explain_ids.size() << " (test side";
        if (config.explain_samples != 0) out << ", capped";
        out << ")\n- family: " << family_name << " (alpha=" << alpha << ", varied "
            << variation_kind_to_string(config.family->variation.kind)
            << ")\n- base model: " << base_name
            << "\n- k range: 1.." << config.k_max << "\n\n";
        if (alpha == 2)
            out << "> note: the family has alpha=2, the minimum; stability is a single model "
                   "pair per sample.\n\n";
        out << "## Metric means at k=" << config.breakdown_k << "\n\n";
        out << "| approach | stability | robustness | effectiveness |\n";
        out << "| --- | --- | --- | --- |\n";
        for (auto kind : config.approaches) {
            const auto& stb = stb_results[kind].points[config.breakdown_k - 1];
            const auto& rob = rob_results[kind].series.points[config.breakdown_k - 1];
            const auto& eff = eff_results[kind].series.points[config.breakdown_k - 1];
            out << "| " << to_string(kind) << " | " << fmt_double(stb.value) << " | "
                << fmt_double(rob.value) << " | " << fmt_double(eff.value) << " |\n";
        }
        out << "\nSkip counts per metric row are in metrics.csv (n_samples + n_skipped = "
            << exp.explain_ids.size() << ").\n\n";
        out << "Effective-feature weights use the minimal ranked prefix whose mutation flips "
               "the prediction; this is one consistent reading of per-sample feature "
               "effectiveness and is recorded as such here.\n";
    }
    std::cerr << "metrics: wrote metrics.csv, robustness_by_class.csv, effective_features.csv, "
                 "summary.md\n";
}

void run_bench(const ExperimentConfig& config) {
    config.validate();
    if (config.bench_samples == 0)
        throw ValidationError("bench: zero samples requested");
    if (!config.family.has_value())
        throw ValidationError("bench requires a similar-model family in the config");
    write_effective_config(config);
    LoadedExperiment exp = load_experiment(config);

    const auto members = family_member_configs(*config.family);
    std::size_t base_index = 0;
    for (std::size_t mi = 0; mi < members.size(); ++mi)
        if (config.family->variation.values[mi] == config.family->base_value) base_index = mi;
    ClassifierModel model = load_named_model(config, members[base_index].first);
    check_fingerprint(model, exp.dataset, members[base_index].first);

    std::unordered_map<std::string, std::size_t> sample_index;
    for (std::size_t i = 0; i < exp.dataset.size(); ++i)
        sample_index[exp.dataset.sample_ids[i]] = i;
    const std::size_t take = std::min(config.bench_samples, exp.explain_ids.size());
    if (take == 0) throw ValidationError("bench: no test samples available");

    std::ofstream out(fs::path(config.output_dir) / "bench.csv", std::ios::binary);
    out << "dataset,approach,mean_seconds_per_sample,samples,total_seconds\n";
    for (auto kind : config.approaches) {
        double total = 0.0;
        for (std::size_t i = 0; i < take; ++i) {
            const std::string& id = exp.explain_ids[i];
            const FeatureVector& x = exp.dataset.samples[sample_index.at(id)];
            std::uint64_t sample_seed = detail::mix_seed(
                config.seed,
                detail::fnv1a(id, detail::fnv1a(to_string(kind), detail::fnv1a("bench"))));
            Explanation e =
                explain(kind, *model.learned, model.model_id, x, id, config.params, sample_seed);
            total += e.elapsed_s;
        }
        out << config.name << ',' << to_string(kind) << ','
            << fmt_double(total / static_cast<double>(take)) << ',' << take << ','
            << fmt_double(total) << '\n';
        std::cerr << "bench: " << to_string(kind) << " mean "
                  << fmt_double(total / static_cast<double>(take)) << " s/sample over " << take
                  << " samples\n";
    }
    if (!out) throw std::runtime_error("failed to write bench.csv");

    // Reports are machine-relative; record the host beside them.
    std::ofstream host(fs::path(config.output_dir) / "bench_host.txt", std::ios::binary);
    struct utsname uts{};
    if (uname(&uts) == 0)
        host << uts.sysname << ' ' << uts.release << ' ' << uts.machine << '\n';
    host << "hardware_concurrency: " << std::thread::hardware_concurrency() << '\n';
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line))
        if (line.rfind("model name", 0) == 0) {
            host << line << '\n';
            break;
        }
}

}  // namespace exbench
