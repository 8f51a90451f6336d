#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"
#include "exbench/explain.hpp"
#include "exbench/solvers.hpp"
#include "json.hpp"

namespace exbench {

using detail::Rng;
using nlohmann::json;

std::string to_string(ExplainerKind k) {
    switch (k) {
        case ExplainerKind::lime: return "lime";
        case ExplainerKind::anchor: return "anchor";
        case ExplainerKind::lore: return "lore";
        case ExplainerKind::shap: return "shap";
        case ExplainerKind::lemna: return "lemna";
    }
    return "lime";
}

ExplainerKind explainer_kind_from_string(const std::string& s) {
    if (s == "lime") return ExplainerKind::lime;
    if (s == "anchor") return ExplainerKind::anchor;
    if (s == "lore") return ExplainerKind::lore;
    if (s == "shap") return ExplainerKind::shap;
    if (s == "lemna") return ExplainerKind::lemna;
    throw ValidationError("unknown explainer kind: '" + s + "'");
}

std::string to_string(ItemConstraint c) {
    switch (c) {
        case ItemConstraint::weighted: return "weighted";
        case ItemConstraint::equals_one: return "equals_one";
        case ItemConstraint::equals_zero: return "equals_zero";
    }
    return "weighted";
}

ItemConstraint item_constraint_from_string(const std::string& s) {
    if (s == "weighted") return ItemConstraint::weighted;
    if (s == "equals_one") return ItemConstraint::equals_one;
    if (s == "equals_zero") return ItemConstraint::equals_zero;
    throw ValidationError("unknown item constraint: '" + s + "'");
}

bool Explanation::has_flag(const std::string& f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
}

std::vector<std::size_t> Explanation::top_features(std::size_t k) const {
    std::vector<std::size_t> out;
    const std::size_t take = std::min(k, items.size());
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(items[i].feature);
    return out;
}

std::string explanation_to_json_line(const Explanation& e) {
    json items = json::array();
    for (const auto& item : e.items)
        items.push_back(json{{"feature", item.feature},
                             {"constraint", to_string(item.constraint)},
                             {"weight", item.weight}});
    json line{{"sample_id", e.sample_id},
              {"approach", to_string(e.approach)},
              {"model_id", e.model_id},
              {"predicted_label", e.predicted_label},
              {"items", std::move(items)},
              {"elapsed_s", e.elapsed_s},
              {"seed", e.seed},
              {"params_hash", e.params_hash}};
    if (!e.flags.empty()) line["flags"] = e.flags;
    return line.dump();
}

Explanation explanation_from_json_line(const std::string& text) {
    json doc = json::parse(text);
    Explanation e;
    e.sample_id = doc.at("sample_id").get<std::string>();
    e.approach = explainer_kind_from_string(doc.at("approach").get<std::string>());
    e.model_id = doc.at("model_id").get<std::string>();
    e.predicted_label = doc.at("predicted_label").get<int>();
    e.elapsed_s = doc.at("elapsed_s").get<double>();
    e.seed = doc.at("seed").get<std::uint64_t>();
    e.params_hash = doc.at("params_hash").get<std::string>();
    if (doc.contains("flags")) e.flags = doc.at("flags").get<std::vector<std::string>>();
    for (const auto& ji : doc.at("items")) {
        ExplanationItem item;
        item.feature = ji.at("feature").get<std::size_t>();
        item.constraint = item_constraint_from_string(ji.at("constraint").get<std::string>());
        item.weight = ji.at("weight").get<double>();
        e.items.push_back(item);
    }
    return e;
}

PerturbationSet perturb(const FeatureVector& x, std::size_t t, double flip_prob,
                        std::uint64_t seed) {
    if (t < 1) throw ValidationError("perturbation count t must be >= 1");
    if (!(flip_prob > 0.0 && flip_prob < 1.0))
        throw ValidationError("flip_prob must be in (0,1)");
    Rng rng(detail::mix_seed(seed, "perturb"));
    PerturbationSet set;
    set.vectors.reserve(t);
    for (std::size_t i = 0; i < t; ++i) {
        FeatureVector v = x;
        for (auto& bit : v.bits)
            if (rng.bernoulli(flip_prob)) bit ^= 1;
        set.vectors.push_back(std::move(v));
    }
    return set;
}

void label_perturbations(const Predictor& model, PerturbationSet& set) {
    set.labels.resize(set.vectors.size());
    for (std::size_t i = 0; i < set.vectors.size(); ++i)
        set.labels[i] = model.predict(set.vectors[i]);
}

namespace {

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        dot += a.bits[i] & b.bits[i];
        na += a.bits[i];
        nb += b.bits[i];
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Weighted items sorted by |weight| descending, feature index ascending.
std::vector<ExplanationItem> weighted_items(const std::vector<double>& coefs, bool drop_zeros) {
    std::vector<ExplanationItem> items;
    for (std::size_t f = 0; f < coefs.size(); ++f) {
        if (drop_zeros && coefs[f] == 0.0) continue;
        items.push_back(ExplanationItem{f, ItemConstraint::weighted, coefs[f]});
    }
    std::sort(items.begin(), items.end(), [](const ExplanationItem& a, const ExplanationItem& b) {
        double wa = std::abs(a.weight), wb = std::abs(b.weight);
        if (wa != wb) return wa > wb;
        return a.feature < b.feature;
    });
    return items;
}

}  // namespace

Explanation explain_lime(const Predictor& model, const FeatureVector& x, const LimeParams& params,
                         std::uint64_t seed) {
    Explanation e;
    e.approach = ExplainerKind::lime;
    const int pred = model.predict(x);
    e.predicted_label = pred;

    PerturbationSet set = perturb(x, params.t, params.flip_prob, seed);
    const std::size_t t = set.vectors.size();
    const std::size_t d = x.bits.size();

    // Surrogate target: the model's score for the predicted class (vote
    // fraction / probability; degenerates to a 0/1 label-match indicator for
    // models with one-hot scores).
    std::vector<double> targets(t);
    for (std::size_t i = 0; i < t; ++i) targets[i] = model.class_scores(set.vectors[i])[pred];

    double lo = targets[0], hi = targets[0];
    for (double v : targets) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) {
        e.flags.push_back("degenerate");
        return e;
    }

    RegressionProblem prob;
    prob.rows = t;
    prob.cols = d;
    prob.design.resize(t * d);
    prob.targets = std::move(targets);
    prob.weights.resize(t);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t f = 0; f < d; ++f) prob.design[i * d + f] = set.vectors[i].bits[f];
        double dist = 1.0 - cosine_similarity(x, set.vectors[i]);
        double w = params.proximity == LimeProximity::exponential_cosine
                       ? std::exp(-(dist * dist) / (params.kernel_width * params.kernel_width))
                       : 1.0 - dist;
        prob.weights[i] = std::max(w, 1e-12);
    }

    LinearFit fit = lasso_cd(prob, params.lambda, params.tol, params.max_iter);
    e.items = weighted_items(fit.coefficients, /*drop_zeros=*/true);
    return e;
}

// ---------------------------------------------------------------------------
// Kernel SHAP

namespace {

double binomial_coeff(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

double shapley_kernel_weight(std::size_t d, std::size_t s) {
    return static_cast<double>(d - 1) /
           (binomial_coeff(d, s) * static_cast<double>(s) * static_cast<double>(d - s));
}

// Mass of a whole coalition size under the kernel: C(d,s) * weight(d,s).
double size_mass(std::size_t d, std::size_t s) {
    return static_cast<double>(d - 1) / (static_cast<double>(s) * static_cast<double>(d - s));
}

struct CoalitionRow {
    std::vector<std::uint8_t> mask;
    double weight;
};

void emit_all_subsets(std::size_t d, std::size_t s, double weight,
                      std::vector<CoalitionRow>& rows) {
    std::vector<std::size_t> comb(s);
    for (std::size_t i = 0; i < s; ++i) comb[i] = i;
    while (true) {
        CoalitionRow row;
        row.mask.assign(d, 0);
        for (auto f : comb) row.mask[f] = 1;
        row.weight = weight;
        rows.push_back(std::move(row));
        // Next lexicographic combination.
        std::size_t i = s;
        while (i > 0 && comb[i - 1] == d - s + i - 1) --i;
        if (i == 0) break;
        ++comb[i - 1];
        for (std::size_t j = i; j < s; ++j) comb[j] = comb[j - 1] + 1;
    }
}

// Full layers of small/large sizes while the budget affords them (their
// kernel mass is largest), then paired random subsets from the leftover
// sizes. Enumerated rows carry exact kernel weights; each sampled row stands
// for an equal share of the remaining mass.
std::vector<CoalitionRow> sample_coalitions(std::size_t d, std::size_t budget, Rng& rng) {
    std::vector<CoalitionRow> rows;
    std::vector<std::size_t> remaining;
    for (std::size_t s = 1; s < d; ++s) remaining.push_back(s);

    for (std::size_t g = 1; g + g <= d && !remaining.empty(); ++g) {
        std::vector<std::size_t> group;
        group.push_back(g);
        if (d - g != g && d - g < d) group.push_back(d - g);
        double count = 0.0;
        for (auto s : group) count += binomial_coeff(d, s);
        if (count > static_cast<double>(budget)) break;
        for (auto s : group) {
            emit_all_subsets(d, s, shapley_kernel_weight(d, s), rows);
            remaining.erase(std::remove(remaining.begin(), remaining.end(), s), remaining.end());
        }
        budget -= static_cast<std::size_t>(count);
    }

    if (budget == 0 || remaining.empty()) return rows;

    double rem_mass = 0.0;
    for (auto s : remaining) rem_mass += size_mass(d, s);
    const double unit_weight = rem_mass / static_cast<double>(budget);

    while (budget > 0) {
        double u = rng.u01() * rem_mass;
        std::size_t size = remaining.back();
        for (auto s : remaining) {
            u -= size_mass(d, s);
            if (u <= 0.0) {
                size = s;
                break;
            }
        }
        auto members = rng.sample_indices(d, size);
        CoalitionRow row;
        row.mask.assign(d, 0);
        for (auto f : members) row.mask[f] = 1;
        row.weight = unit_weight;
        rows.push_back(row);
        --budget;
        // Antithetic complement, when its size is still in the sampled pool.
        if (budget > 0 &&
            std::find(remaining.begin(), remaining.end(), d - size) != remaining.end()) {
            CoalitionRow comp;
            comp.mask.assign(d, 1);
            for (auto f : members) comp.mask[f] = 0;
            comp.weight = unit_weight;
            rows.push_back(std::move(comp));
            --budget;
        }
    }
    return rows;
}

FeatureVector masked_vector(const FeatureVector& x, const std::vector<std::uint8_t>& mask,
                            const std::vector<std::uint8_t>& reference) {
    FeatureVector v;
    v.bits.resize(x.bits.size());
    for (std::size_t f = 0; f < x.bits.size(); ++f)
        v.bits[f] = mask[f] ? x.bits[f] : reference[f];
    return v;
}

}  // namespace

Explanation explain_shap(const Predictor& model, const FeatureVector& x, const ShapParams& params,
                         std::uint64_t seed) {
    const std::size_t d = x.bits.size();
    std::vector<std::uint8_t> reference = params.reference;
    if (reference.empty()) reference.assign(d, 0);
    if (reference.size() != d) throw ValidationError("shap reference has wrong dimension");
    if (params.enumerate_all && d > 20)
        throw ValidationError("shap full coalition enumeration limited to d <= 20");
    if (!params.enumerate_all && params.coalition_count < d + 2)
        throw ValidationError("shap coalition count " + std::to_string(params.coalition_count) +
                              " is under-determined for d=" + std::to_string(d) +
                              " (need at least d+2)");

    Explanation e;
    e.approach = ExplainerKind::shap;
    const int pred = model.predict(x);
    e.predicted_label = pred;

    const double base = model.class_scores(FeatureVector{std::vector<std::uint8_t>(reference)})[pred];
    const double fx = model.class_scores(x)[pred];
    const double delta = fx - base;

    std::vector<double> phi(d, 0.0);
    if (d == 1) {
        phi[0] = delta;
        e.items = weighted_items(phi, /*drop_zeros=*/false);
        return e;
    }

    std::vector<CoalitionRow> rows;
    if (params.enumerate_all) {
        const std::size_t total = (std::size_t{1} << d) - 2;
        rows.reserve(total);
        for (std::size_t m = 1; m < total + 1; ++m) {
            CoalitionRow row;
            row.mask.assign(d, 0);
            std::size_t s = 0;
            for (std::size_t f = 0; f < d; ++f)
                if (m & (std::size_t{1} << f)) {
                    row.mask[f] = 1;
                    ++s;
                }
            row.weight = shapley_kernel_weight(d, s);
            rows.push_back(std::move(row));
        }
    } else {
        Rng rng(detail::mix_seed(seed, "shap_coalitions"));
        rows = sample_coalitions(d, params.coalition_count, rng);
    }

    // Efficiency constraint folded in by eliminating the last feature:
    //   v(z) - base = delta*z_last + sum_{j<last} phi_j (z_j - z_last).
    RegressionProblem prob;
    prob.rows = rows.size();
    prob.cols = d - 1;
    prob.design.resize(prob.rows * prob.cols);
    prob.targets.resize(prob.rows);
    prob.weights.resize(prob.rows);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const double v = model.class_scores(masked_vector(x, row.mask, reference))[pred];
        const double z_last = row.mask[d - 1];
        for (std::size_t j = 0; j + 1 < d; ++j)
            prob.design[r * prob.cols + j] = static_cast<double>(row.mask[j]) - z_last;
        prob.targets[r] = (v - base) - delta * z_last;
        prob.weights[r] = row.weight;
    }

    auto front = weighted_least_squares_no_intercept(prob, params.ridge);
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < d; ++j) {
        phi[j] = front[j];
        sum += front[j];
    }
    phi[d - 1] = delta - sum;

    e.items = weighted_items(phi, /*drop_zeros=*/false);
    return e;
}

std::vector<double> exact_shapley(const Predictor& model, const FeatureVector& x,
                                  const std::vector<std::uint8_t>& reference_in) {
    const std::size_t d = x.bits.size();
    if (d > 20) throw ValidationError("exact_shapley limited to d <= 20 (cost 2^d)");
    std::vector<std::uint8_t> reference = reference_in;
    if (reference.empty()) reference.assign(d, 0);
    if (reference.size() != d) throw ValidationError("reference has wrong dimension");

    const int pred = model.predict(x);
    const std::size_t total = std::size_t{1} << d;

    std::vector<double> value(total);
    FeatureVector v;
    v.bits.resize(d);
    for (std::size_t m = 0; m < total; ++m) {
        for (std::size_t f = 0; f < d; ++f)
            v.bits[f] = (m & (std::size_t{1} << f)) ? x.bits[f] : reference[f];
        value[m] = model.class_scores(v)[pred];
    }

    // weight(s) = s! (d-s-1)! / d! = 1 / (d * C(d-1, s))
    std::vector<double> weight(d);
    for (std::size_t s = 0; s < d; ++s)
        weight[s] = 1.0 / (static_cast<double>(d) * binomial_coeff(d - 1, s));

    std::vector<double> phi(d, 0.0);
    for (std::size_t m = 0; m < total; ++m) {
        const std::size_t s = static_cast<std::size_t>(__builtin_popcountll(m));
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t bit = std::size_t{1} << j;
            if (m & bit) continue;
            phi[j] += weight[s] * (value[m | bit] - value[m]);
        }
    }
    return phi;
}

Explanation explain_lemna(const Predictor& model, const FeatureVector& x,
                          const LemnaParams& params, std::uint64_t seed) {
    Explanation e;
    e.approach = ExplainerKind::lemna;
    const int pred = model.predict(x);
    e.predicted_label = pred;

    PerturbationSet set = perturb(x, params.t, params.flip_prob, seed);
    label_perturbations(model, set);
    const std::size_t t = set.vectors.size();
    const std::size_t d = x.bits.size();

    RegressionProblem prob;
    prob.rows = t;
    prob.cols = d;
    prob.design.resize(t * d);
    prob.targets.resize(t);
    prob.weights.assign(t, 1.0);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t f = 0; f < d; ++f) prob.design[i * d + f] = set.vectors[i].bits[f];
        prob.targets[i] = set.labels[i] == pred ? 1.0 : 0.0;
    }

    MixtureRegressionModel mix = em_mixture_regression(prob, params.mixture_components, params.tol,
                                                       params.max_iter, seed, params.l1);
    if (mix.collapsed && params.mixture_components > 1) {
        mix = em_mixture_regression(prob, 1, params.tol, params.max_iter, seed, params.l1);
        e.flags.push_back("em_collapsed");
    }

    // Component responsible for the explained sample itself (its own target
    // is 1: the prediction trivially matches).
    std::size_t best = 0;
    double best_log = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < mix.components; ++j) {
        if (mix.mixing[j] <= 0.0) continue;
        double mean = mix.intercepts[j];
        for (std::size_t f = 0; f < d; ++f) mean += mix.betas[j][f] * x.bits[f];
        double s2 = mix.sigmas[j] * mix.sigmas[j];
        double log_r = std::log(mix.mixing[j]) - 0.5 * std::log(s2) -
                       0.5 * (1.0 - mean) * (1.0 - mean) / s2;
        if (log_r > best_log) {
            best_log = log_r;
            best = j;
        }
    }
    e.items = weighted_items(mix.betas[best], /*drop_zeros=*/false);
    return e;
}

void ExplainerParams::validate() const {
    std::vector<std::string> problems;
    if (lime.t < 10) problems.push_back("lime.t must be >= 10");
    if (!(lime.flip_prob > 0.0 && lime.flip_prob < 1.0))
        problems.push_back("lime.flip_prob must be in (0,1)");
    if (!(lime.kernel_width > 0.0)) problems.push_back("lime.kernel_width must be > 0");
    if (lime.lambda < 0.0) problems.push_back("lime.lambda must be >= 0");
    if (shap.coalition_count < 1) problems.push_back("shap.coalition_count must be >= 1");
    if (shap.ridge < 0.0) problems.push_back("shap.ridge must be >= 0");
    if (lemna.t < 10) problems.push_back("lemna.t must be >= 10");
    if (!(lemna.flip_prob > 0.0 && lemna.flip_prob < 1.0))
        problems.push_back("lemna.flip_prob must be in (0,1)");
    if (lemna.mixture_components < 1) problems.push_back("lemna.mixture_components must be >= 1");
    if (!(anchor.precision_threshold > 0.0 && anchor.precision_threshold < 1.0))
        problems.push_back("anchor.precision_threshold must be in (0,1)");
    if (!(anchor.confidence > 0.0 && anchor.confidence < 1.0))
        problems.push_back("anchor.confidence must be in (0,1)");
    if (anchor.beam_width < 1) problems.push_back("anchor.beam_width must be >= 1");
    if (anchor.batch_size < 1) problems.push_back("anchor.batch_size must be >= 1");
    if (anchor.coverage_samples < 1) problems.push_back("anchor.coverage_samples must be >= 1");
    if (!(anchor.flip_prob > 0.0 && anchor.flip_prob < 1.0))
        problems.push_back("anchor.flip_prob must be in (0,1)");
    if (lore.population < 2) problems.push_back("lore.population must be >= 2");
    if (lore.generations < 1) problems.push_back("lore.generations must be >= 1");
    if (!(lore.crossover_rate >= 0.0 && lore.crossover_rate <= 1.0))
        problems.push_back("lore.crossover_rate must be in [0,1]");
    if (!(lore.mutation_rate > 0.0 && lore.mutation_rate < 1.0))
        problems.push_back("lore.mutation_rate must be in (0,1)");
    if (!problems.empty()) {
        std::string msg = "invalid explainer parameters:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
}

std::string ExplainerParams::hash_for(ExplainerKind kind) const {
    json j;
    switch (kind) {
        case ExplainerKind::lime:
            j = json{{"kind", "lime"},
                     {"t", lime.t},
                     {"flip_prob", lime.flip_prob},
                     {"kernel_width", lime.kernel_width},
                     {"lambda", lime.lambda},
                     {"proximity",
                      lime.proximity == LimeProximity::exponential_cosine ? "exponential_cosine"
                                                                          : "raw_cosine"},
                     {"tol", lime.tol},
                     {"max_iter", lime.max_iter}};
            break;
        case ExplainerKind::shap:
            j = json{{"kind", "shap"},
                     {"coalition_count", shap.coalition_count},
                     {"ridge", shap.ridge},
                     {"enumerate_all", shap.enumerate_all},
                     {"reference", shap.reference}};
            break;
        case ExplainerKind::lemna:
            j = json{{"kind", "lemna"},    {"t", lemna.t},
                     {"flip_prob", lemna.flip_prob}, {"M", lemna.mixture_components},
                     {"tol", lemna.tol},   {"max_iter", lemna.max_iter},
                     {"l1", lemna.l1}};
            break;
        case ExplainerKind::anchor:
            j = json{{"kind", "anchor"},
                     {"pi", anchor.precision_threshold},
                     {"delta", anchor.confidence},
                     {"beam_width", anchor.beam_width},
                     {"batch_size", anchor.batch_size},
                     {"max_batches", anchor.max_batches_per_candidate},
                     {"coverage_samples", anchor.coverage_samples},
                     {"flip_prob", anchor.flip_prob},
                     {"max_rule_size", anchor.max_rule_size}};
            break;
        case ExplainerKind::lore:
            j = json{{"kind", "lore"},
                     {"population", lore.population},
                     {"generations", lore.generations},
                     {"crossover_rate", lore.crossover_rate},
                     {"mutation_rate", lore.mutation_rate},
                     {"init_flip_prob", lore.init_flip_prob},
                     {"tree_max_depth", lore.tree_max_depth},
                     {"tree_min_leaf", lore.tree_min_leaf}};
            break;
    }
    return detail::to_hex(detail::fnv1a(j.dump()));
}

Explanation explain(ExplainerKind kind, const Predictor& model, const std::string& model_id,
                    const FeatureVector& x, const std::string& sample_id,
                    const ExplainerParams& params, std::uint64_t seed) {
    params.validate();
    const auto started = std::chrono::steady_clock::now();
    Explanation e;
    switch (kind) {
        case ExplainerKind::lime: e = explain_lime(model, x, params.lime, seed); break;
        case ExplainerKind::shap: e = explain_shap(model, x, params.shap, seed); break;
        case ExplainerKind::lemna: e = explain_lemna(model, x, params.lemna, seed); break;
        case ExplainerKind::anchor: e = explain_anchor(model, x, params.anchor, seed); break;
        case ExplainerKind::lore: e = explain_lore(model, x, params.lore, seed); break;
    }
    const auto finished = std::chrono::steady_clock::now();
    e.model_id = model_id;
    e.sample_id = sample_id;
    e.seed = seed;
    e.params_hash = params.hash_for(kind);
    e.elapsed_s = std::max(std::chrono::duration<double>(finished - started).count(), 1e-9);
    return e;
}

}  // namespace exbench
