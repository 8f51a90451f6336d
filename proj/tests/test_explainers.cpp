#include <cmath>
#include <set>

#include "doctest.h"
#include "exbench/classifier.hpp"
#include "exbench/dataset.hpp"
#include "exbench/explain.hpp"
#include "support.hpp"

using namespace exbench;
using testsupport::AndModel;
using testsupport::ConstantModel;
using testsupport::DictatorModel;
using testsupport::LinearScoreModel;
using testsupport::MajorityModel;
using testsupport::TwoRegimeModel;

namespace {

FeatureVector bits(std::initializer_list<int> vals) {
    FeatureVector v;
    for (int b : vals) v.bits.push_back(static_cast<std::uint8_t>(b));
    return v;
}

FeatureVector random_bits(std::size_t d, exbench::detail::Rng& rng, double p = 0.5) {
    FeatureVector v;
    v.bits.resize(d);
    for (auto& b : v.bits) b = rng.bernoulli(p);
    return v;
}

bool items_equal(const Explanation& a, const Explanation& b) {
    if (a.items.size() != b.items.size()) return false;
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        if (a.items[i].feature != b.items[i].feature) return false;
        if (a.items[i].constraint != b.items[i].constraint) return false;
        if (a.items[i].weight != b.items[i].weight) return false;
    }
    return true;
}

void check_well_formed(const Explanation& e, std::size_t d) {
    std::set<std::size_t> seen;
    for (const auto& item : e.items) {
        CHECK(item.feature < d);
        CHECK(seen.insert(item.feature).second);
        CHECK(std::isfinite(item.weight));
        if (item.constraint != ItemConstraint::weighted) CHECK(item.weight >= 0.0);
    }
    bool all_weighted = !e.items.empty();
    for (const auto& item : e.items)
        all_weighted = all_weighted && item.constraint == ItemConstraint::weighted;
    if (all_weighted)
        for (std::size_t i = 1; i < e.items.size(); ++i)
            CHECK(std::abs(e.items[i - 1].weight) >= std::abs(e.items[i].weight));
}

}  // namespace

TEST_CASE("perturb: determinism and flip statistics") {
    exbench::detail::Rng seed_rng(3);
    FeatureVector x = random_bits(295, seed_rng);
    auto a = perturb(x, 100, 0.1, 17);
    auto b = perturb(x, 100, 0.1, 17);
    CHECK(a.vectors == b.vectors);
    CHECK(a.vectors.size() == 100);

    // Mean Hamming distance approx d * flip_prob = 29.5; +-3 is ~6 sigma of
    // the mean of 100 draws.
    double mean = 0.0;
    for (const auto& v : a.vectors) {
        std::size_t dist = 0;
        for (std::size_t f = 0; f < x.bits.size(); ++f) dist += v.bits[f] != x.bits[f];
        mean += static_cast<double>(dist);
    }
    mean /= 100.0;
    CHECK(mean > 26.5);
    CHECK(mean < 32.5);
}

TEST_CASE("perturb: vanishing flip probability leaves near-copies") {
    exbench::detail::Rng rng(5);
    FeatureVector x = random_bits(40, rng);
    auto set = perturb(x, 10, 1e-9, 7);
    for (const auto& v : set.vectors) {
        std::size_t dist = 0;
        for (std::size_t f = 0; f < x.bits.size(); ++f) dist += v.bits[f] != x.bits[f];
        CHECK(dist <= 1);
    }
}

TEST_CASE("lime finds the dictator feature") {
    DictatorModel model(15, 0);
    exbench::detail::Rng rng(11);
    FeatureVector x = random_bits(15, rng);
    x.bits[0] = 1;
    LimeParams params;
    params.t = 600;
    auto e = explain_lime(model, x, params, 21);
    REQUIRE_FALSE(e.items.empty());
    CHECK(e.items[0].feature == 0);
    check_well_formed(e, 15);

    auto again = explain_lime(model, x, params, 21);
    CHECK(items_equal(e, again));
}

TEST_CASE("lime flags a locally constant model as degenerate") {
    ConstantModel model(10, 1);
    exbench::detail::Rng rng(13);
    FeatureVector x = random_bits(10, rng);
    auto e = explain_lime(model, x, LimeParams{}, 3);
    CHECK(e.empty());
    CHECK(e.has_flag("degenerate"));
}

TEST_CASE("lime top-5 request yields exactly 5 items when enough coefficients survive") {
    LinearScoreModel model({1.2, -1.0, 0.8, -0.7, 0.6, 0.5, -0.4, 0.3}, -0.2);
    exbench::detail::Rng rng(15);
    FeatureVector x = random_bits(8, rng);
    LimeParams params;
    params.t = 800;
    params.lambda = 0.001;
    auto e = explain_lime(model, x, params, 5);
    REQUIRE(e.items.size() >= 5);
    CHECK(e.top_features(5).size() == 5);
}

TEST_CASE("lime recovers the dominant feature of random linear models") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        exbench::detail::Rng rng(900 + seed);
        const std::size_t d = 6 + seed * 2;
        std::vector<double> w(d);
        for (auto& v : w) v = rng.uniform(-0.5, 0.5);
        std::size_t strongest = rng.uniform_index(d);
        w[strongest] = rng.bernoulli(0.5) ? 2.5 : -2.5;
        LinearScoreModel model(w, 0.0);
        FeatureVector x = random_bits(d, rng);
        LimeParams params;
        params.t = 1200;
        params.lambda = 0.002;
        auto e = explain_lime(model, x, params, seed);
        REQUIRE_FALSE(e.items.empty());
        CHECK(e.items[0].feature == strongest);
    }
}

TEST_CASE("kernel shap with full enumeration matches exact shapley") {
    auto ds = testsupport::random_dataset(150, 12, 2, 33);
    auto split = testsupport::full_split(ds, 0.7);
    TrainConfig cfg;
    cfg.algorithm = Algorithm::random_forest;
    cfg.rf.tree_count = 10;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.seed = seed;
        auto model = train(ds, split, cfg);
        exbench::detail::Rng rng(400 + seed);
        FeatureVector x = random_bits(12, rng);

        auto exact = exact_shapley(*model.learned, x, {});
        ShapParams params;
        params.enumerate_all = true;
        auto e = explain_shap(*model.learned, x, params, seed);
        std::vector<double> kernel(12, 0.0);
        for (const auto& item : e.items) kernel[item.feature] = item.weight;
        for (std::size_t f = 0; f < 12; ++f)
            CHECK(std::abs(kernel[f] - exact[f]) < 1e-6);

        ShapParams sampled;
        sampled.coalition_count = 2000;
        auto es = explain_shap(*model.learned, x, sampled, seed);
        for (const auto& item : es.items)
            CHECK(std::abs(item.weight - exact[item.feature]) < 0.05);
    }
}

TEST_CASE("shap symmetry and efficiency") {
    AndModel model(2, 0, 1);
    FeatureVector x = bits({1, 1});
    ShapParams params;
    params.enumerate_all = true;
    auto e = explain_shap(model, x, params, 3);
    REQUIRE(e.items.size() == 2);
    CHECK(e.items[0].weight == doctest::Approx(e.items[1].weight).epsilon(1e-9));

    double sum = 0.0;
    for (const auto& item : e.items) sum += item.weight;
    double fx = model.class_scores(x)[model.predict(x)];
    double fr = model.class_scores(bits({0, 0}))[model.predict(x)];
    CHECK(sum == doctest::Approx(fx - fr).epsilon(1e-9));
}

TEST_CASE("shap rejects an under-determined coalition budget") {
    DictatorModel model(30, 2);
    exbench::detail::Rng rng(8);
    FeatureVector x = random_bits(30, rng);
    ShapParams params;
    params.coalition_count = 20;  // < d + 2
    CHECK_THROWS_AS(explain_shap(model, x, params, 1), ValidationError);
}

TEST_CASE("exact shapley worked cases") {
    DictatorModel dictator(5, 0);
    FeatureVector x = bits({1, 0, 1, 0, 1});
    auto phi = exact_shapley(dictator, x, {});
    CHECK(phi[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t f = 1; f < 5; ++f) CHECK(phi[f] == doctest::Approx(0.0));

    ConstantModel constant(5, 1);
    auto zero = exact_shapley(constant, x, {});
    for (double v : zero) CHECK(v == doctest::Approx(0.0));

    MajorityModel majority(3);
    auto thirds = exact_shapley(majority, bits({1, 1, 1}), {});
    for (double v : thirds) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    FeatureVector big;
    big.bits.assign(25, 1);
    CHECK_THROWS_AS(exact_shapley(DictatorModel(25, 0), big, {}), ValidationError);
}

TEST_CASE("anchor finds the single-feature rule") {
    DictatorModel model(12, 2);
    exbench::detail::Rng rng(19);
    FeatureVector x = random_bits(12, rng);
    x.bits[2] = 1;
    AnchorParams params;
    auto e = explain_anchor(model, x, params, 31);
    REQUIRE(e.items.size() == 1);
    CHECK(e.items[0].feature == 2);
    CHECK(e.items[0].constraint == ItemConstraint::equals_one);
    CHECK_FALSE(e.has_flag("non_anchored"));
    check_well_formed(e, 12);
}

TEST_CASE("anchor with a vanishing precision threshold returns the empty rule") {
    auto ds = testsupport::random_dataset(40, 8, 2, 55);
    auto split = testsupport::full_split(ds, 0.6);
    TrainConfig cfg;
    cfg.algorithm = Algorithm::knn;
    cfg.knn.neighbor_count = 3;
    auto model = train(ds, split, cfg);
    exbench::detail::Rng rng(2);
    FeatureVector x = random_bits(8, rng);
    AnchorParams params;
    params.precision_threshold = 1e-6;
    auto e = explain_anchor(*model.learned, x, params, 4);
    CHECK(e.items.empty());
    CHECK_FALSE(e.has_flag("non_anchored"));
}

TEST_CASE("anchor precision holds up on a fresh validation draw") {
    AndModel model(10, 0, 1);
    FeatureVector x;
    x.bits.assign(10, 1);
    AnchorParams params;
    auto e = explain_anchor(model, x, params, 77);
    REQUIRE_FALSE(e.items.empty());

    exbench::detail::Rng rng(123456);
    std::size_t hits = 0;
    const std::size_t trials = 10000;
    std::vector<bool> fixed(10, false);
    for (const auto& item : e.items) fixed[item.feature] = true;
    const int base = model.predict(x);
    for (std::size_t i = 0; i < trials; ++i) {
        FeatureVector v = x;
        for (std::size_t f = 0; f < v.bits.size(); ++f)
            if (!fixed[f] && rng.bernoulli(params.flip_prob)) v.bits[f] ^= 1;
        hits += model.predict(v) == base;
    }
    double fresh = static_cast<double>(hits) / static_cast<double>(trials);
    double slack = std::sqrt(std::log(1.0 / params.confidence) / (2.0 * 600)) +
                   std::sqrt(std::log(1.0 / params.confidence) / (2.0 * trials));
    CHECK(fresh >= params.precision_threshold - slack);
}

TEST_CASE("anchor flags a never-anchored search") {
    // Parity of all bits: no conjunction short of pinning every bit is
    // precise, which exceeds the rule-size budget.
    struct ParityModel final : Predictor {
        std::size_t d;
        explicit ParityModel(std::size_t d) : d(d) {}
        std::size_t feature_count() const override { return d; }
        std::size_t class_count() const override { return 2; }
        std::vector<double> class_scores(const FeatureVector& x) const override {
            int ones = 0;
            for (auto b : x.bits) ones += b;
            double on = ones % 2 ? 1.0 : 0.0;
            return {1.0 - on, on};
        }
    };
    ParityModel model(16);
    exbench::detail::Rng rng(9);
    FeatureVector x = random_bits(16, rng);
    AnchorParams params;
    params.max_rule_size = 4;
    params.max_batches_per_candidate = 4;
    auto e = explain_anchor(model, x, params, 10);
    CHECK(e.has_flag("non_anchored"));
}

TEST_CASE("lore fitness worked example") {
    const double d = 20.0;
    // The sample itself: correct label, zero distance, self-excluded.
    CHECK(lore_fitness(true, 0.0, true) == doctest::Approx(1.0));
    // A correct-label neighbor one bit away scores strictly higher.
    CHECK(lore_fitness(true, 1.0 / d, false) == doctest::Approx(2.0 - 1.0 / d));
    CHECK(lore_fitness(true, 1.0 / d, false) > lore_fitness(true, 0.0, true));
}

TEST_CASE("lore extracts the dictator rule") {
    DictatorModel model(10, 0);
    exbench::detail::Rng rng(23);
    FeatureVector x = random_bits(10, rng);
    x.bits[0] = 1;
    LoreParams params;
    auto e = explain_lore(model, x, params, 41);
    REQUIRE_FALSE(e.items.empty());
    bool found = false;
    for (const auto& item : e.items)
        found = found || (item.feature == 0 && item.constraint == ItemConstraint::equals_one);
    CHECK(found);
    check_well_formed(e, 10);

    auto again = explain_lore(model, x, params, 41);
    CHECK(items_equal(e, again));
}

TEST_CASE("lore flags a locally constant model as degenerate") {
    ConstantModel model(8, 0);
    exbench::detail::Rng rng(29);
    FeatureVector x = random_bits(8, rng);
    auto e = explain_lore(model, x, LoreParams{}, 13);
    CHECK(e.empty());
    CHECK(e.has_flag("degenerate"));
}

TEST_CASE("lemna with one component ranks the dictator feature first") {
    DictatorModel model(12, 0);
    exbench::detail::Rng rng(31);
    FeatureVector x = random_bits(12, rng);
    x.bits[0] = 1;
    LemnaParams params;
    params.mixture_components = 1;
    params.t = 600;
    auto e = explain_lemna(model, x, params, 51);
    REQUIRE_FALSE(e.items.empty());
    CHECK(e.items[0].feature == 0);
    check_well_formed(e, 12);

    auto again = explain_lemna(model, x, params, 51);
    CHECK(items_equal(e, again));
}

TEST_CASE("lemna separates two regimes") {
    TwoRegimeModel model(12, 5);
    exbench::detail::Rng rng(37);
    FeatureVector x = random_bits(12, rng);
    x.bits[5] = 1;
    x.bits[0] = 1;
    LemnaParams params;
    params.mixture_components = 2;
    params.t = 1200;
    auto e = explain_lemna(model, x, params, 61);
    REQUIRE_FALSE(e.items.empty());
    double w0 = 0.0, w1 = 0.0;
    for (const auto& item : e.items) {
        if (item.feature == 0) w0 = std::abs(item.weight);
        if (item.feature == 1) w1 = std::abs(item.weight);
    }
    CHECK(w0 > w1);
}

TEST_CASE("dispatch stamps metadata and matches the direct calls") {
    DictatorModel model(10, 0);
    exbench::detail::Rng rng(43);
    FeatureVector x = random_bits(10, rng);
    x.bits[0] = 1;
    ExplainerParams params;
    params.lime.t = 200;
    params.lemna.t = 200;
    params.shap.coalition_count = 300;
    params.lore.population = 40;
    params.lore.generations = 8;
    params.anchor.batch_size = 50;
    params.anchor.coverage_samples = 200;

    auto via_dispatch = explain(ExplainerKind::lime, model, "model-1", x, "sample-1", params, 7);
    auto direct = explain_lime(model, x, params.lime, 7);
    CHECK(items_equal(via_dispatch, direct));
    CHECK(via_dispatch.model_id == "model-1");
    CHECK(via_dispatch.sample_id == "sample-1");
    CHECK(via_dispatch.seed == 7);
    CHECK_FALSE(via_dispatch.params_hash.empty());
    CHECK(via_dispatch.elapsed_s > 0.0);

    for (auto kind : {ExplainerKind::lime, ExplainerKind::anchor, ExplainerKind::lore,
                      ExplainerKind::shap, ExplainerKind::lemna}) {
        auto a = explain(kind, model, "m", x, "s", params, 99);
        auto b = explain(kind, model, "m", x, "s", params, 99);
        CHECK(items_equal(a, b));
        check_well_formed(a, 10);
        CHECK(a.elapsed_s > 0.0);
    }
}

TEST_CASE("explanation json lines round-trip") {
    Explanation e;
    e.approach = ExplainerKind::anchor;
    e.model_id = "abc";
    e.sample_id = "s1";
    e.predicted_label = 1;
    e.items = {ExplanationItem{3, ItemConstraint::equals_one, 0.5},
               ExplanationItem{7, ItemConstraint::equals_zero, 0.25}};
    e.elapsed_s = 0.125;
    e.seed = 42;
    e.params_hash = "ffee";
    e.flags = {"non_anchored"};
    auto line = explanation_to_json_line(e);
    auto back = explanation_from_json_line(line);
    CHECK(items_equal(e, back));
    CHECK(back.model_id == e.model_id);
    CHECK(back.sample_id == e.sample_id);
    CHECK(back.predicted_label == e.predicted_label);
    CHECK(back.flags == e.flags);
    CHECK(explanation_to_json_line(back) == line);

    CHECK_THROWS(explanation_from_json_line("{not json"));
}

TEST_CASE("explainer params reject out-of-range values") {
    ExplainerParams params;
    params.lime.t = 5;
    CHECK_THROWS_AS(params.validate(), ValidationError);
    params = ExplainerParams{};
    params.anchor.precision_threshold = 1.5;
    CHECK_THROWS_AS(params.validate(), ValidationError);
    params = ExplainerParams{};
    params.lemna.mixture_components = 0;
    CHECK_THROWS_AS(params.validate(), ValidationError);
}
