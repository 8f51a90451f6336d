#include "exbench/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"

namespace exbench {

using detail::Rng;

void RegressionProblem::validate() const {
    if (rows == 0 || cols == 0) throw ValidationError("regression problem is empty");
    if (design.size() != rows * cols) throw ValidationError("design matrix size mismatch");
    if (targets.size() != rows) throw ValidationError("targets length mismatch");
    if (weights.size() != rows) throw ValidationError("weights length mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and nonnegative");
        wsum += w;
    }
    if (wsum <= 0.0) throw ValidationError("weights must not be all zero");
    for (double v : design)
        if (!std::isfinite(v)) throw ValidationError("non-finite value in design matrix");
    for (double v : targets)
        if (!std::isfinite(v)) throw ValidationError("non-finite value in targets");
}

LinearFit lasso_cd(const RegressionProblem& p, double lambda, double tol, std::size_t max_iter) {
    p.validate();
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
    if (!(tol > 0.0)) throw ValidationError("tol must be > 0");

    const std::size_t n = p.rows, d = p.cols;
    double W = 0.0;
    for (double w : p.weights) W += w;

    // Covariance-mode coordinate descent: weighted moments are accumulated
    // once, so a sweep costs O(d^2) no matter how many rows there are.
    std::vector<double> gram(d * d, 0.0);  // (1/W) X^T W X
    std::vector<double> xy(d, 0.0);        // (1/W) X^T W y
    std::vector<double> xmean(d, 0.0);     // (1/W) X^T W 1
    double ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = p.weights[i];
        if (w == 0.0) continue;
        const double* row = &p.design[i * d];
        ybar += w * p.targets[i];
        for (std::size_t j = 0; j < d; ++j) {
            const double wx = w * row[j];
            if (wx == 0.0) continue;
            xy[j] += wx * p.targets[i];
            xmean[j] += wx;
            double* grow = &gram[j * d];
            for (std::size_t k = j; k < d; ++k) grow[k] += wx * row[k];
        }
    }
    ybar /= W;
    for (std::size_t j = 0; j < d; ++j) {
        xy[j] /= W;
        xmean[j] /= W;
        for (std::size_t k = j; k < d; ++k) {
            gram[j * d + k] /= W;
            gram[k * d + j] = gram[j * d + k];
        }
    }

    std::vector<double> beta(d, 0.0);
    std::vector<double> gb(d, 0.0);  // gram . beta, maintained incrementally
    double intercept = ybar;

    for (std::size_t sweep = 0; sweep < max_iter; ++sweep) {
        double max_change = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double norm = gram[j * d + j];
            if (norm <= 0.0) continue;  // constant-zero column
            const double rho = xy[j] - gb[j] + norm * beta[j] - intercept * xmean[j];
            double next;
            if (rho > lambda)
                next = (rho - lambda) / norm;
            else if (rho < -lambda)
                next = (rho + lambda) / norm;
            else
                next = 0.0;
            const double delta = next - beta[j];
            if (delta != 0.0) {
                const double* grow = &gram[j * d];
                for (std::size_t k = 0; k < d; ++k) gb[k] += grow[k] * delta;
                beta[j] = next;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        double b0 = ybar;
        for (std::size_t j = 0; j < d; ++j) b0 -= xmean[j] * beta[j];
        if (b0 != intercept) {
            max_change = std::max(max_change, std::abs(b0 - intercept));
            intercept = b0;
        }
        if (max_change < tol) break;
    }
    return LinearFit{std::move(beta), intercept};
}

namespace {

// Gaussian elimination with partial pivoting. Columns are eliminated in
// order; `intercept_col` (SIZE_MAX when absent) marks the one column whose
// rank deficiency is resolved by forcing its coefficient to 0 instead of
// failing -- an all-ones column collinear with the design is not a user
// error, a duplicated feature column is.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, std::size_t n,
                                 std::size_t intercept_col) {
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i * n + i]));
    const double eps = std::max(scale, 1.0) * 1e-12;

    std::vector<std::size_t> row_of(n);
    for (std::size_t i = 0; i < n; ++i) row_of[i] = i;
    std::vector<bool> dropped(n, false);

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t best = col;
        double best_abs = std::abs(a[row_of[col] * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double v = std::abs(a[row_of[r] * n + col]);
            if (v > best_abs) {
                best_abs = v;
                best = r;
            }
        }
        if (best_abs <= eps) {
            if (col == intercept_col) {
                dropped[col] = true;
                continue;
            }
            throw std::runtime_error(
                "singular system (column " + std::to_string(col) +
                " is collinear); use ridge > 0");
        }
        std::swap(row_of[col], row_of[best]);
        const std::size_t prow = row_of[col];
        const double pivot = a[prow * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const std::size_t rr = row_of[r];
            double factor = a[rr * n + col] / pivot;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[rr * n + c] -= factor * a[prow * n + c];
            b[rr] -= factor * b[prow];
        }
    }

    std::vector<double> x(n, 0.0);
    for (std::size_t ci = n; ci-- > 0;) {
        if (dropped[ci]) {
            x[ci] = 0.0;
            continue;
        }
        const std::size_t rr = row_of[ci];
        double acc = b[rr];
        for (std::size_t c = ci + 1; c < n; ++c) acc -= a[rr * n + c] * x[c];
        x[ci] = acc / a[rr * n + ci];
    }
    return x;
}

}  // namespace

LinearFit weighted_least_squares(const RegressionProblem& p, double ridge) {
    p.validate();
    if (ridge < 0.0 || !std::isfinite(ridge)) throw ValidationError("ridge must be >= 0");
    const std::size_t n = p.rows, d = p.cols, m = d + 1;  // coefficients, then intercept

    std::vector<double> a(m * m, 0.0), b(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = p.weights[i];
        if (w == 0.0) continue;
        const double* row = &p.design[i * d];
        for (std::size_t j = 0; j < d; ++j) {
            const double wx = w * row[j];
            if (wx == 0.0) continue;
            for (std::size_t k = j; k < d; ++k) a[j * m + k] += wx * row[k];
            a[j * m + d] += wx;
            b[j] += wx * p.targets[i];
        }
        a[d * m + d] += w;
        b[d] += w * p.targets[i];
    }
    for (std::size_t j = 0; j < d; ++j) {
        a[j * m + j] += ridge;
        for (std::size_t k = j + 1; k < d; ++k) a[k * m + j] = a[j * m + k];
        a[d * m + j] = a[j * m + d];
    }

    auto x = solve_linear(std::move(a), std::move(b), m, d);
    LinearFit fit;
    fit.coefficients.assign(x.begin(), x.begin() + d);
    fit.intercept = x[d];
    return fit;
}

std::vector<double> weighted_least_squares_no_intercept(const RegressionProblem& p, double ridge) {
    p.validate();
    if (ridge < 0.0 || !std::isfinite(ridge)) throw ValidationError("ridge must be >= 0");
    const std::size_t n = p.rows, d = p.cols;
    std::vector<double> a(d * d, 0.0), b(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = p.weights[i];
        if (w == 0.0) continue;
        const double* row = &p.design[i * d];
        for (std::size_t j = 0; j < d; ++j) {
            const double wx = w * row[j];
            if (wx == 0.0) continue;
            for (std::size_t k = j; k < d; ++k) a[j * d + k] += wx * row[k];
            b[j] += wx * p.targets[i];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        a[j * d + j] += ridge;
        for (std::size_t k = j + 1; k < d; ++k) a[k * d + j] = a[j * d + k];
    }
    return solve_linear(std::move(a), std::move(b), d, std::numeric_limits<std::size_t>::max());
}

const DecisionTree::Node& DecisionTree::leaf_for(const FeatureVector& x) const {
    if (nodes.empty()) throw std::runtime_error("empty decision tree");
    std::size_t cur = 0;
    while (nodes[cur].feature >= 0) {
        const auto& node = nodes[cur];
        cur = x.bits[static_cast<std::size_t>(node.feature)] ? node.right : node.left;
    }
    return nodes[cur];
}

int DecisionTree::predict(const FeatureVector& x) const {
    const auto& leaf = leaf_for(x);
    int best = 0;
    for (std::size_t c = 1; c < leaf.dist.size(); ++c)
        if (leaf.dist[c] > leaf.dist[best]) best = static_cast<int>(c);
    return best;
}

namespace detail {

namespace {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double gain = -1.0;
};

double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double acc = 0.0;
    for (double c : counts) {
        double f = c / total;
        acc += f * f;
    }
    return 1.0 - acc;
}

}  // namespace

DecisionTree cart_build_on_indices(const std::vector<FeatureVector>& samples,
                                   const std::vector<int>& labels,
                                   const std::vector<double>& weights,
                                   const std::vector<std::size_t>& index_multiset,
                                   std::size_t num_classes, const CartParams& params,
                                   std::size_t features_per_split, Rng* rng) {
    if (index_multiset.empty()) throw ValidationError("cart: empty input");
    const std::size_t d = samples[index_multiset[0]].bits.size();

    DecisionTree tree;
    tree.num_classes = num_classes;

    struct Frame {
        std::vector<std::size_t> idx;
        std::size_t depth;
        std::size_t node;
    };

    auto make_leaf = [&](DecisionTree::Node& node, const std::vector<std::size_t>& idx) {
        node.feature = -1;
        node.dist.assign(num_classes, 0.0);
        double total = 0.0;
        for (auto i : idx) {
            node.dist[labels[i]] += weights[i];
            total += weights[i];
        }
        if (total > 0.0)
            for (auto& v : node.dist) v /= total;
    };

    std::vector<std::size_t> feature_order(d);
    for (std::size_t f = 0; f < d; ++f) feature_order[f] = f;

    std::vector<Frame> stack;
    tree.nodes.emplace_back();
    stack.push_back(Frame{index_multiset, 0, 0});

    std::vector<double> class_w(num_classes), left_w(num_classes), right_w(num_classes);

    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        auto& idx = frame.idx;

        double total_w = 0.0;
        std::fill(class_w.begin(), class_w.end(), 0.0);
        for (auto i : idx) {
            class_w[labels[i]] += weights[i];
            total_w += weights[i];
        }
        const double node_gini = gini(class_w, total_w);

        const bool depth_capped = params.max_depth != 0 && frame.depth >= params.max_depth;
        if (node_gini <= 0.0 || idx.size() < params.min_split || depth_capped) {
            make_leaf(tree.nodes[frame.node], idx);
            continue;
        }

        // Candidate features in subsample order (all of them when
        // features_per_split == 0); only non-constant features count toward
        // the quota, so a node never leafs just because its random subset was
        // uninformative.
        if (rng != nullptr && features_per_split != 0) rng->shuffle(feature_order);
        const std::size_t quota = features_per_split == 0 ? d : features_per_split;

        SplitChoice best;
        std::size_t evaluated = 0;
        for (std::size_t pos = 0; pos < d && evaluated < quota; ++pos) {
            const std::size_t f = feature_order[pos];
            std::fill(left_w.begin(), left_w.end(), 0.0);
            std::fill(right_w.begin(), right_w.end(), 0.0);
            double lw = 0.0, rw = 0.0;
            std::size_t ln = 0, rn = 0;
            for (auto i : idx) {
                if (samples[i].bits[f]) {
                    right_w[labels[i]] += weights[i];
                    rw += weights[i];
                    ++rn;
                } else {
                    left_w[labels[i]] += weights[i];
                    lw += weights[i];
                    ++ln;
                }
            }
            if (ln == 0 || rn == 0) continue;  // constant here, not counted
            ++evaluated;
            if (ln < params.min_leaf || rn < params.min_leaf) continue;
            double child = (lw * gini(left_w, lw) + rw * gini(right_w, rw)) / total_w;
            double gain = node_gini - child;
            if (!best.found || gain > best.gain + 1e-15 ||
                (std::abs(gain - best.gain) <= 1e-15 && f < best.feature)) {
                best.found = true;
                best.feature = f;
                best.gain = gain;
            }
        }

        if (!best.found) {
            make_leaf(tree.nodes[frame.node], idx);
            continue;
        }

        std::vector<std::size_t> left_idx, right_idx;
        for (auto i : idx)
            (samples[i].bits[best.feature] ? right_idx : left_idx).push_back(i);

        const int left_node = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right_node = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        auto& node = tree.nodes[frame.node];
        node.feature = static_cast<int>(best.feature);
        node.left = left_node;
        node.right = right_node;

        // Right pushed first so the left child is processed (and numbered)
        // depth-first; the order is fixed either way, which keeps per-node
        // RNG consumption reproducible.
        stack.push_back(Frame{std::move(right_idx), frame.depth + 1, static_cast<std::size_t>(right_node)});
        stack.push_back(Frame{std::move(left_idx), frame.depth + 1, static_cast<std::size_t>(left_node)});
    }
    return tree;
}

}  // namespace detail

DecisionTree cart_build(const std::vector<FeatureVector>& samples, const std::vector<int>& labels,
                        const std::vector<double>& weights, const CartParams& params) {
    if (samples.empty()) throw ValidationError("cart: empty input");
    if (samples.size() != labels.size() || samples.size() != weights.size())
        throw ValidationError("cart: samples/labels/weights length mismatch");
    int max_label = 0;
    for (int l : labels) {
        if (l < 0) throw ValidationError("cart: negative label");
        max_label = std::max(max_label, l);
    }
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return detail::cart_build_on_indices(samples, labels, weights, idx,
                                         static_cast<std::size_t>(max_label) + 1, params, 0,
                                         nullptr);
}

std::vector<std::pair<std::size_t, std::uint8_t>> cart_path_predicates(const DecisionTree& tree,
                                                                       const FeatureVector& x) {
    if (tree.empty()) throw ValidationError("cart_path_predicates: empty tree");
    std::vector<std::pair<std::size_t, std::uint8_t>> path;
    std::size_t cur = 0;
    while (tree.nodes[cur].feature >= 0) {
        const auto& node = tree.nodes[cur];
        const auto f = static_cast<std::size_t>(node.feature);
        const std::uint8_t bit = x.bits[f] ? 1 : 0;
        path.emplace_back(f, bit);
        cur = bit ? node.right : node.left;
    }
    // Collapse repeats keeping the deepest occurrence in its path position.
    std::vector<std::pair<std::size_t, std::uint8_t>> out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        bool repeated_later = false;
        for (std::size_t j = i + 1; j < path.size(); ++j)
            if (path[j].first == path[i].first) {
                repeated_later = true;
                break;
            }
        if (!repeated_later) out.push_back(path[i]);
    }
    return out;
}

MixtureRegressionModel em_mixture_regression(const RegressionProblem& p, std::size_t M, double tol,
                                             std::size_t max_iter, std::uint64_t seed, double l1) {
    p.validate();
    if (M == 0) throw ValidationError("mixture components M must be >= 1");
    if (l1 < 0.0) throw ValidationError("l1 must be >= 0");
    const std::size_t n = p.rows, d = p.cols;
    constexpr double kSigma2Floor = 1e-6;
    constexpr double kWlsRidge = 1e-8;

    Rng rng(detail::mix_seed(seed, "em_mixture"));

    // Seeded random responsibilities, normalized per row.
    std::vector<double> resp(n * M);
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            double u = rng.uniform(0.05, 1.0);
            resp[i * M + j] = u;
            row_sum += u;
        }
        for (std::size_t j = 0; j < M; ++j) resp[i * M + j] /= row_sum;
    }

    MixtureRegressionModel model;
    model.components = M;
    model.mixing.assign(M, 1.0 / static_cast<double>(M));
    model.betas.assign(M, std::vector<double>(d, 0.0));
    model.intercepts.assign(M, 0.0);
    model.sigmas.assign(M, 1.0);
    std::vector<bool> dead(M, false);
    std::vector<bool> reseeded(M, false);

    double W = 0.0;
    for (double w : p.weights) W += w;

    auto m_step = [&]() {
        for (std::size_t j = 0; j < M; ++j) {
            if (dead[j]) continue;
            RegressionProblem sub;
            sub.rows = n;
            sub.cols = d;
            sub.design = p.design;
            sub.targets = p.targets;
            sub.weights.resize(n);
            double mass = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sub.weights[i] = p.weights[i] * resp[i * M + j];
                mass += sub.weights[i];
            }
            if (mass <= 1e-12 * W) {
                if (!reseeded[j]) {
                    // One fresh random restart for a collapsed component.
                    reseeded[j] = true;
                    for (std::size_t i = 0; i < n; ++i) {
                        double u = rng.uniform(0.05, 1.0);
                        sub.weights[i] = p.weights[i] * u;
                    }
                } else {
                    dead[j] = true;
                    model.mixing[j] = 0.0;
                    model.collapsed = true;
                    continue;
                }
            }
            LinearFit fit;
            if (l1 > 0.0)
                fit = lasso_cd(sub, l1, 1e-7, 500);
            else
                fit = weighted_least_squares(sub, kWlsRidge);
            model.betas[j] = fit.coefficients;
            model.intercepts[j] = fit.intercept;

            double rss = 0.0, wsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double pred = fit.intercept;
                const double* row = &p.design[i * d];
                for (std::size_t c = 0; c < d; ++c) pred += row[c] * fit.coefficients[c];
                double r = p.targets[i] - pred;
                rss += sub.weights[i] * r * r;
                wsum += sub.weights[i];
            }
            double sigma2 = wsum > 0.0 ? std::max(rss / wsum, kSigma2Floor) : kSigma2Floor;
            model.sigmas[j] = std::sqrt(sigma2);
            model.mixing[j] = wsum / W;
        }
        // Renormalize mixing over live components.
        double total = 0.0;
        for (std::size_t j = 0; j < M; ++j) total += model.mixing[j];
        if (total > 0.0)
            for (auto& t : model.mixing) t /= total;
    };

    auto log_density = [&](std::size_t i, std::size_t j) {
        double pred = model.intercepts[j];
        const double* row = &p.design[i * d];
        for (std::size_t c = 0; c < d; ++c) pred += row[c] * model.betas[j][c];
        double r = p.targets[i] - pred;
        double s2 = model.sigmas[j] * model.sigmas[j];
        return -0.5 * std::log(6.283185307179586 * s2) - 0.5 * r * r / s2;
    };

    m_step();
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // E-step in log space.
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double max_log = -std::numeric_limits<double>::infinity();
            std::vector<double> logs(M, -std::numeric_limits<double>::infinity());
            for (std::size_t j = 0; j < M; ++j) {
                if (dead[j] || model.mixing[j] <= 0.0) continue;
                logs[j] = std::log(model.mixing[j]) + log_density(i, j);
                max_log = std::max(max_log, logs[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < M; ++j)
                if (logs[j] > -std::numeric_limits<double>::infinity())
                    denom += std::exp(logs[j] - max_log);
            for (std::size_t j = 0; j < M; ++j)
                resp[i * M + j] =
                    logs[j] > -std::numeric_limits<double>::infinity()
                        ? std::exp(logs[j] - max_log) / denom
                        : 0.0;
            ll += p.weights[i] * (max_log + std::log(denom));
        }
        model.loglik_trace.push_back(ll);
        if (iter > 0 && ll - prev_ll < tol) break;
        prev_ll = ll;
        m_step();
    }
    return model;
}

}  // namespace exbench
