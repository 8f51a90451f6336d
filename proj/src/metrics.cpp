#include "exbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"

namespace exbench {

using detail::Rng;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> top_set(const Explanation& e, int k) {
    auto v = e.top_features(static_cast<std::size_t>(k));
    std::sort(v.begin(), v.end());
    return v;
}

double dice_of_sets(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

// Pairwise-mean metric shared by stability (across models) and consistency
// (across approaches). A sample is skipped when any source lacks a usable
// (present, non-empty) explanation for it.
MetricSeries pairwise_mean_metric(const std::string& name,
                                  const std::vector<ExplanationMap>& sources,
                                  const std::vector<std::string>& sample_ids, int k_max) {
    if (sources.size() < 2)
        throw ValidationError(name + " needs at least 2 explanation sources (alpha >= 2)");
    if (k_max < 1) throw ValidationError("k_max must be >= 1");

    MetricSeries series;
    series.metric = name;
    series.per_sample.assign(k_max, std::vector<double>(sample_ids.size(), kNaN));

    for (int k = 1; k <= k_max; ++k) {
        MetricPoint point;
        point.k = k;
        double acc = 0.0;
        for (std::size_t si = 0; si < sample_ids.size(); ++si) {
            const std::string& id = sample_ids[si];
            std::vector<const Explanation*> expl;
            bool usable = true;
            for (const auto& src : sources) {
                auto it = src.find(id);
                if (it == src.end() || it->second.empty()) {
                    usable = false;
                    break;
                }
                expl.push_back(&it->second);
            }
            if (!usable) {
                ++point.n_skipped;
                continue;
            }
            double sum = 0.0;
            std::size_t pairs = 0;
            for (std::size_t p = 0; p < expl.size(); ++p)
                for (std::size_t q = p + 1; q < expl.size(); ++q) {
                    auto sim = dice_similarity(*expl[p], *expl[q], k);
                    if (sim) {
                        sum += *sim;
                        ++pairs;
                    }
                }
            if (pairs == 0) {
                ++point.n_skipped;
                continue;
            }
            const double value = sum / static_cast<double>(pairs);
            series.per_sample[k - 1][si] = value;
            acc += value;
            ++point.n_used;
        }
        point.value = point.n_used ? acc / static_cast<double>(point.n_used) : 0.0;
        series.points.push_back(point);
    }
    return series;
}

}  // namespace

std::optional<double> dice_similarity(const Explanation& a, const Explanation& b, int k) {
    if (k < 1) throw ValidationError("dice similarity needs k >= 1");
    auto sa = top_set(a, k);
    auto sb = top_set(b, k);
    if (sa.empty() && sb.empty()) return std::nullopt;
    return dice_of_sets(sa, sb);
}

MetricSeries stability(const std::vector<ExplanationMap>& per_model,
                       const std::vector<std::string>& sample_ids, int k_max) {
    return pairwise_mean_metric("stability", per_model, sample_ids, k_max);
}

MetricSeries consistency(const std::vector<ExplanationMap>& per_approach,
                         const std::vector<std::string>& sample_ids, int k_max) {
    return pairwise_mean_metric("consistency", per_approach, sample_ids, k_max);
}

RobustnessResult robustness(const ExplanationMap& explanations,
                            const std::vector<std::string>& sample_ids, int k_max,
                            std::size_t neighbor_cap, std::uint64_t seed) {
    if (k_max < 1) throw ValidationError("k_max must be >= 1");
    if (neighbor_cap == 0) throw ValidationError("neighbor_cap must be >= 1");
    const std::size_t n = sample_ids.size();

    // Canonical sample order (by id) decouples neighbor subsampling from the
    // presentation order, so the metric is permutation invariant.
    std::vector<std::size_t> canonical(n);
    for (std::size_t i = 0; i < n; ++i) canonical[i] = i;
    std::sort(canonical.begin(), canonical.end(),
              [&](std::size_t a, std::size_t b) { return sample_ids[a] < sample_ids[b]; });

    std::vector<const Explanation*> expl(n, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = explanations.find(sample_ids[i]);
        if (it != explanations.end() && !it->second.empty()) expl[i] = &it->second;
    }

    // Same/different-label neighbor lists in canonical order, then capped.
    std::vector<std::vector<std::size_t>> same(n), diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (expl[i] == nullptr) continue;
        for (std::size_t cj : canonical) {
            if (cj == i || expl[cj] == nullptr) continue;
            (expl[cj]->predicted_label == expl[i]->predicted_label ? same[i] : diff[i])
                .push_back(cj);
        }
        for (auto* list : {&same[i], &diff[i]}) {
            if (list->size() > neighbor_cap) {
                Rng rng(detail::mix_seed(seed, detail::fnv1a(sample_ids[i],
                                                             list == &same[i] ? 0x51u : 0xD1u)));
                auto keep = rng.sample_indices(list->size(), neighbor_cap);
                std::vector<std::size_t> capped;
                capped.reserve(neighbor_cap);
                for (auto pos : keep) capped.push_back((*list)[pos]);
                *list = std::move(capped);
            }
        }
    }

    RobustnessResult result;
    result.series.metric = "robustness";
    result.series.per_sample.assign(k_max, std::vector<double>(n, kNaN));
    result.breakdown.resize(k_max);

    for (int k = 1; k <= k_max; ++k) {
        MetricPoint point;
        point.k = k;
        double acc = 0.0;
        struct ClassAcc {
            double s = 0.0, d = 0.0;
            std::size_t n = 0;
        };
        std::map<int, ClassAcc> by_class;

        for (std::size_t i = 0; i < n; ++i) {
            if (expl[i] == nullptr || same[i].empty() || diff[i].empty()) {
                ++point.n_skipped;
                continue;
            }
            auto mean_sim = [&](const std::vector<std::size_t>& neighbors) -> std::optional<double> {
                double sum = 0.0;
                std::size_t cnt = 0;
                for (auto j : neighbors) {
                    auto sim = dice_similarity(*expl[i], *expl[j], k);
                    if (sim) {
                        sum += *sim;
                        ++cnt;
                    }
                }
                if (cnt == 0) return std::nullopt;
                return sum / static_cast<double>(cnt);
            };
            auto avg_s = mean_sim(same[i]);
            auto avg_d = mean_sim(diff[i]);
            if (!avg_s || !avg_d) {
                ++point.n_skipped;
                continue;
            }
            const double rob = *avg_s - *avg_d;
            result.series.per_sample[k - 1][i] = rob;
            acc += rob;
            ++point.n_used;
            auto& ca = by_class[expl[i]->predicted_label];
            ca.s += *avg_s;
            ca.d += *avg_d;
            ca.n += 1;
        }
        if (point.n_used == 0)
            throw std::runtime_error(
                "robustness: every sample was skipped (single predicted label in the test set?)");
        point.value = acc / static_cast<double>(point.n_used);
        result.series.points.push_back(point);

        for (const auto& [label, ca] : by_class) {
            RobustnessBreakdownRow row;
            row.label = label;
            row.n = ca.n;
            row.s_bar = ca.s / static_cast<double>(ca.n);
            row.d_bar = ca.d / static_cast<double>(ca.n);
            row.rob = row.s_bar - row.d_bar;
            result.breakdown[k - 1].push_back(row);
        }
    }
    return result;
}

FeatureVector mutate(const FeatureVector& x, const Explanation& e, int k) {
    if (k < 1) throw ValidationError("mutate needs k >= 1");
    FeatureVector out = x;
    const std::size_t take = std::min(static_cast<std::size_t>(k), e.items.size());
    for (std::size_t i = 0; i < take; ++i) {
        const auto& item = e.items[i];
        if (item.feature >= out.bits.size())
            throw std::runtime_error("mutate: explanation feature index out of range");
        switch (item.constraint) {
            case ItemConstraint::weighted: out.bits[item.feature] ^= 1; break;
            case ItemConstraint::equals_one: out.bits[item.feature] = 0; break;
            case ItemConstraint::equals_zero: out.bits[item.feature] = 1; break;
        }
    }
    return out;
}

EffectivenessResult effectiveness(const ClassifierModel& model, const LabeledDataset& ds,
                                  const ExplanationMap& explanations,
                                  const std::vector<std::string>& sample_ids, int k_max,
                                  int weights_k) {
    if (k_max < 1) throw ValidationError("k_max must be >= 1");
    const std::size_t n = sample_ids.size();

    std::unordered_map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < ds.size(); ++i) index_of[ds.sample_ids[i]] = i;

    std::vector<const Explanation*> expl(n, nullptr);
    std::vector<const FeatureVector*> xs(n, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = explanations.find(sample_ids[i]);
        if (it == explanations.end() || it->second.empty()) continue;
        if (it->second.model_id != model.model_id)
            throw std::runtime_error("effectiveness: explanation for '" + sample_ids[i] +
                                     "' was produced by model " + it->second.model_id +
                                     ", not " + model.model_id);
        auto pos = index_of.find(sample_ids[i]);
        if (pos == index_of.end())
            throw std::runtime_error("effectiveness: sample '" + sample_ids[i] +
                                     "' not present in the dataset");
        expl[i] = &it->second;
        xs[i] = &ds.samples[pos->second];
    }

    std::vector<int> base_label(n, -1);
    for (std::size_t i = 0; i < n; ++i)
        if (expl[i]) base_label[i] = predict(model, *xs[i]);

    EffectivenessResult result;
    result.series.metric = "effectiveness";
    result.series.per_sample.assign(k_max, std::vector<double>(n, kNaN));
    result.weights_k = weights_k;

    for (int k = 1; k <= k_max; ++k) {
        MetricPoint point;
        point.k = k;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (expl[i] == nullptr) {
                ++point.n_skipped;
                continue;
            }
            const int mutated = predict(model, mutate(*xs[i], *expl[i], k));
            const double eff = mutated != base_label[i] ? 1.0 : 0.0;
            result.series.per_sample[k - 1][i] = eff;
            acc += eff;
            ++point.n_used;
        }
        point.value = point.n_used ? acc / static_cast<double>(point.n_used) : 0.0;
        result.series.points.push_back(point);
    }

    // Effective-feature weights: for each scored sample find the shortest
    // ranked prefix (up to weights_k) whose mutation flips the label; every
    // feature of that prefix counts for the sample.
    std::map<std::size_t, std::size_t> counts;
    std::size_t scored = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (expl[i] == nullptr) continue;
        ++scored;
        const std::size_t cap =
            std::min(static_cast<std::size_t>(weights_k), expl[i]->items.size());
        for (std::size_t m = 1; m <= cap; ++m) {
            if (predict(model, mutate(*xs[i], *expl[i], static_cast<int>(m))) != base_label[i]) {
                for (std::size_t p = 0; p < m; ++p) counts[expl[i]->items[p].feature] += 1;
                break;
            }
        }
    }
    for (const auto& [feature, count] : counts)
        result.effective_feature_weights.emplace_back(
            feature, static_cast<double>(count) / static_cast<double>(scored == 0 ? 1 : scored));
    std::sort(result.effective_feature_weights.begin(), result.effective_feature_weights.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    return result;
}

}  // namespace exbench
