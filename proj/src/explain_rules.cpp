#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"
#include "exbench/explain.hpp"
#include "exbench/solvers.hpp"

namespace exbench {

using detail::Rng;

namespace {

// ---------------------------------------------------------------------------
// Anchor: batched beam search over predicate conjunctions built from x's own
// bits. A candidate is anchored once the Hoeffding lower bound on its
// precision clears the threshold; hopeless candidates are discarded as soon
// as the upper bound falls below it.

struct AnchorCandidate {
    std::vector<std::size_t> order;  // features in addition order
    double p_hat = 0.0;
    std::size_t draws = 0;
    std::size_t hits = 0;
    bool accepted = false;
    bool rejected = false;
};

struct AnchorSearch {
    const Predictor& model;
    const FeatureVector& x;
    const AnchorParams& params;
    std::uint64_t seed;
    int base_label;
    double slack_factor;  // sqrt(ln(1/delta) / 2)

    double lower_bound(const AnchorCandidate& c) const {
        if (c.draws == 0) return 0.0;
        return c.p_hat - slack_factor / std::sqrt(static_cast<double>(c.draws));
    }
    double upper_bound(const AnchorCandidate& c) const {
        if (c.draws == 0) return 1.0;
        return c.p_hat + slack_factor / std::sqrt(static_cast<double>(c.draws));
    }

    // Draw from D(x'|A): the anchored bits stay at x's values, every other
    // bit is resampled by flipping x with flip_prob.
    void evaluate(AnchorCandidate& c) const {
        std::uint64_t stream = detail::kFnvOffset;
        for (auto f : c.order) stream = detail::fnv1a_u64(f, stream);
        Rng rng(detail::mix_seed(seed, detail::fnv1a_u64(stream, detail::fnv1a("anchor_prec"))));

        std::vector<bool> fixed(x.bits.size(), false);
        for (auto f : c.order) fixed[f] = true;

        FeatureVector v = x;
        while (!c.accepted && !c.rejected && c.draws < params.batch_size * params.max_batches_per_candidate) {
            for (std::size_t b = 0; b < params.batch_size; ++b) {
                for (std::size_t f = 0; f < v.bits.size(); ++f)
                    v.bits[f] = fixed[f] ? x.bits[f]
                                         : static_cast<std::uint8_t>(
                                               rng.bernoulli(params.flip_prob) ? x.bits[f] ^ 1
                                                                               : x.bits[f]);
                c.hits += model.predict(v) == base_label;
                ++c.draws;
            }
            c.p_hat = static_cast<double>(c.hits) / static_cast<double>(c.draws);
            if (lower_bound(c) >= params.precision_threshold)
                c.accepted = true;
            else if (upper_bound(c) < params.precision_threshold)
                c.rejected = true;
        }
    }
};

}  // namespace

Explanation explain_anchor(const Predictor& model, const FeatureVector& x,
                           const AnchorParams& params, std::uint64_t seed) {
    Explanation e;
    e.approach = ExplainerKind::anchor;
    const int base_label = model.predict(x);
    e.predicted_label = base_label;
    const std::size_t d = x.bits.size();

    AnchorSearch search{model, x, params, seed, base_label,
                        std::sqrt(std::log(1.0 / params.confidence) / 2.0)};

    // Shared coverage draw from the unconditional perturbation distribution;
    // coverage(A) = fraction of draws satisfying every predicate of A.
    std::vector<FeatureVector> coverage_pool;
    {
        Rng rng(detail::mix_seed(seed, "anchor_coverage"));
        coverage_pool.reserve(params.coverage_samples);
        for (std::size_t i = 0; i < params.coverage_samples; ++i) {
            FeatureVector v = x;
            for (auto& bit : v.bits)
                if (rng.bernoulli(params.flip_prob)) bit ^= 1;
            coverage_pool.push_back(std::move(v));
        }
    }
    auto coverage = [&](const std::vector<std::size_t>& order) {
        std::size_t sat = 0;
        for (const auto& v : coverage_pool) {
            bool ok = true;
            for (auto f : order)
                if (v.bits[f] != x.bits[f]) {
                    ok = false;
                    break;
                }
            sat += ok;
        }
        return static_cast<double>(sat) / static_cast<double>(coverage_pool.size());
    };

    AnchorCandidate best_effort;  // highest precision seen, for the fallback
    best_effort.p_hat = -1.0;

    AnchorCandidate empty_rule;
    search.evaluate(empty_rule);
    if (empty_rule.p_hat > best_effort.p_hat) best_effort = empty_rule;

    std::vector<AnchorCandidate> accepted;
    if (empty_rule.accepted) accepted.push_back(empty_rule);

    std::vector<AnchorCandidate> beam{empty_rule};
    const std::size_t max_size = std::min(params.max_rule_size, d);
    for (std::size_t size = 1; size <= max_size && accepted.empty(); ++size) {
        std::vector<AnchorCandidate> cands;
        std::set<std::vector<std::size_t>> seen;  // membership set, canonical order
        for (const auto& parent : beam) {
            for (std::size_t f = 0; f < d; ++f) {
                if (std::find(parent.order.begin(), parent.order.end(), f) != parent.order.end())
                    continue;
                AnchorCandidate child;
                child.order = parent.order;
                child.order.push_back(f);
                auto key = child.order;
                std::sort(key.begin(), key.end());
                if (!seen.insert(key).second) continue;
                cands.push_back(std::move(child));
            }
        }
        if (cands.empty()) break;
        for (auto& c : cands) {
            search.evaluate(c);
            if (c.p_hat > best_effort.p_hat) best_effort = c;
            if (c.accepted) {
                accepted.push_back(c);
                // The conditional draw flips every free bit independently
                // with one probability, so all rules of this size share the
                // same true coverage and smaller rules always cover more:
                // the first anchored candidate already maximizes coverage.
                break;
            }
        }
        if (!accepted.empty()) break;
        std::sort(cands.begin(), cands.end(), [](const AnchorCandidate& a, const AnchorCandidate& b) {
            if (a.p_hat != b.p_hat) return a.p_hat > b.p_hat;
            return a.order < b.order;
        });
        if (cands.size() > params.beam_width) cands.resize(params.beam_width);
        beam = std::move(cands);
    }

    std::vector<std::size_t> rule;
    if (!accepted.empty()) {
        // Among anchored rules prefer the largest coverage, then the shorter
        // and lexicographically smaller one.
        double best_cov = -1.0;
        const AnchorCandidate* chosen = nullptr;
        for (const auto& c : accepted) {
            double cov = coverage(c.order);
            if (cov > best_cov ||
                (cov == best_cov && chosen != nullptr &&
                 (c.order.size() < chosen->order.size() ||
                  (c.order.size() == chosen->order.size() && c.order < chosen->order)))) {
                best_cov = cov;
                chosen = &c;
            }
        }
        rule = chosen->order;
    } else {
        rule = best_effort.order;
        e.flags.push_back("non_anchored");
    }

    double prev_cov = 1.0;
    std::vector<std::size_t> prefix;
    for (auto f : rule) {
        prefix.push_back(f);
        double cov = coverage(prefix);
        ExplanationItem item;
        item.feature = f;
        item.constraint = x.bits[f] ? ItemConstraint::equals_one : ItemConstraint::equals_zero;
        item.weight = std::max(prev_cov - cov, 0.0);
        e.items.push_back(item);
        prev_cov = cov;
    }
    return e;
}

// ---------------------------------------------------------------------------
// LORE: two genetic runs grow a labeled neighborhood (same-label and
// different-label fitness), then a decision tree over it yields the rule for
// x as its root-to-leaf path.

double lore_fitness(bool label_indicator, double normalized_distance, bool is_self) {
    return (label_indicator ? 1.0 : 0.0) + (1.0 - normalized_distance) + (is_self ? -1.0 : 0.0);
}

namespace {

struct GaRun {
    const Predictor& model;
    const FeatureVector& x;
    const LoreParams& params;
    int base_label;

    double fitness(const FeatureVector& cand, int cand_label, bool want_same) const {
        const std::size_t d = x.bits.size();
        std::size_t hamming = 0;
        for (std::size_t f = 0; f < d; ++f) hamming += cand.bits[f] != x.bits[f];
        const double dif = static_cast<double>(hamming) / static_cast<double>(d);
        const bool label_match = cand_label == base_label;
        return lore_fitness(want_same ? label_match : !label_match, dif, hamming == 0);
    }

    std::vector<FeatureVector> evolve(bool want_same, Rng& rng) const {
        const std::size_t d = x.bits.size();
        const std::size_t pop_size = params.population;

        std::vector<FeatureVector> pop(pop_size);
        std::vector<int> labels(pop_size);
        std::vector<double> fit(pop_size);
        for (auto& ind : pop) {
            ind = x;
            for (auto& bit : ind.bits)
                if (rng.bernoulli(params.init_flip_prob)) bit ^= 1;
        }
        auto score_all = [&]() {
            for (std::size_t i = 0; i < pop_size; ++i) {
                labels[i] = model.predict(pop[i]);
                fit[i] = fitness(pop[i], labels[i], want_same);
            }
        };
        score_all();

        auto tournament = [&]() -> const FeatureVector& {
            std::size_t best = rng.uniform_index(pop_size);
            for (int round = 0; round < 2; ++round) {
                std::size_t c = rng.uniform_index(pop_size);
                if (fit[c] > fit[best]) best = c;
            }
            return pop[best];
        };

        for (std::size_t gen = 0; gen < params.generations; ++gen) {
            std::vector<FeatureVector> next;
            next.reserve(pop_size);
            // Elitism: carry the single best individual.
            std::size_t best = 0;
            for (std::size_t i = 1; i < pop_size; ++i)
                if (fit[i] > fit[best]) best = i;
            next.push_back(pop[best]);
            while (next.size() < pop_size) {
                FeatureVector child = tournament();
                if (rng.bernoulli(params.crossover_rate)) {
                    const FeatureVector& other = tournament();
                    for (std::size_t f = 0; f < d; ++f)
                        if (rng.bernoulli(0.5)) child.bits[f] = other.bits[f];
                }
                for (auto& bit : child.bits)
                    if (rng.bernoulli(params.mutation_rate)) bit ^= 1;
                next.push_back(std::move(child));
            }
            pop = std::move(next);
            score_all();
        }
        return pop;
    }
};

}  // namespace

Explanation explain_lore(const Predictor& model, const FeatureVector& x, const LoreParams& params,
                         std::uint64_t seed) {
    Explanation e;
    e.approach = ExplainerKind::lore;
    const int base_label = model.predict(x);
    e.predicted_label = base_label;

    GaRun ga{model, x, params, base_label};
    Rng rng_same(detail::mix_seed(seed, "lore_same"));
    Rng rng_diff(detail::mix_seed(seed, "lore_diff"));
    auto pop_same = ga.evolve(/*want_same=*/true, rng_same);
    auto pop_diff = ga.evolve(/*want_same=*/false, rng_diff);

    // Merge and deduplicate the neighborhood.
    std::vector<FeatureVector> neighborhood;
    std::set<std::vector<std::uint8_t>> seen;
    for (const auto* pop : {&pop_same, &pop_diff})
        for (const auto& ind : *pop)
            if (seen.insert(ind.bits).second) neighborhood.push_back(ind);

    std::vector<int> labels(neighborhood.size());
    bool any_diff = false;
    int max_label = base_label;
    for (std::size_t i = 0; i < neighborhood.size(); ++i) {
        labels[i] = model.predict(neighborhood[i]);
        any_diff = any_diff || labels[i] != base_label;
        max_label = std::max(max_label, labels[i]);
    }
    if (!any_diff) {
        // Locally constant model: the tree would be a single leaf.
        e.flags.push_back("degenerate");
        return e;
    }

    CartParams tree_params;
    tree_params.max_depth = params.tree_max_depth;
    tree_params.min_leaf = params.tree_min_leaf;
    DecisionTree tree = cart_build(neighborhood, labels,
                                   std::vector<double>(neighborhood.size(), 1.0), tree_params);

    auto predicates = cart_path_predicates(tree, x);
    const double depth = static_cast<double>(predicates.size());
    for (std::size_t i = 0; i < predicates.size(); ++i) {
        ExplanationItem item;
        item.feature = predicates[i].first;
        item.constraint =
            predicates[i].second ? ItemConstraint::equals_one : ItemConstraint::equals_zero;
        item.weight = depth - static_cast<double>(i);  // root first = largest
        e.items.push_back(item);
    }
    return e;
}

}  // namespace exbench
