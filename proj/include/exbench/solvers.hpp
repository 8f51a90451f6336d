#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "exbench/dataset.hpp"

namespace exbench {

/// Weighted regression inputs shared by the surrogate fitters.
struct RegressionProblem {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> design;   // row-major rows x cols
    std::vector<double> targets;  // length rows
    std::vector<double> weights;  // length rows, nonnegative, not all zero

    double at(std::size_t r, std::size_t c) const { return design[r * cols + c]; }
    void validate() const;
};

struct LinearFit {
    std::vector<double> coefficients;
    double intercept = 0.0;
};

/// Cyclic coordinate descent on
///   (1 / 2W) * sum_i w_i (y_i - b0 - x_i.beta)^2 + lambda * |beta|_1,
/// W = sum w_i. The intercept is fit but never penalized. Stops when the
/// largest parameter change in a sweep drops below tol or after max_iter
/// sweeps. lambda = 0 reduces to weighted least squares.
LinearFit lasso_cd(const RegressionProblem& p, double lambda, double tol = 1e-7,
                   std::size_t max_iter = 1000);

/// Ridge-stabilized weighted normal equations (intercept unpenalized). With
/// ridge = 0 a genuinely collinear column raises an error advising ridge > 0;
/// collinearity that only involves the intercept resolves to intercept 0.
LinearFit weighted_least_squares(const RegressionProblem& p, double ridge);

/// As above without the intercept column (used by the constrained fits).
std::vector<double> weighted_least_squares_no_intercept(const RegressionProblem& p, double ridge);

struct CartParams {
    std::size_t max_depth = 0;  // 0 = unlimited
    std::size_t min_leaf = 1;
    std::size_t min_split = 2;
};

/// Binary decision tree over {0,1} features: left = bit 0, right = bit 1.
struct DecisionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        int left = -1;
        int right = -1;
        std::vector<double> dist;  // leaf class distribution, sums to 1
    };
    std::vector<Node> nodes;  // root at 0
    std::size_t num_classes = 0;

    bool empty() const { return nodes.empty(); }
    const Node& leaf_for(const FeatureVector& x) const;
    int predict(const FeatureVector& x) const;
};

/// Greedy gini induction. Ties on gain break toward the lowest feature index;
/// an impure node splits even at zero gain as long as a feature still varies,
/// so parity-style labelings are learnable.
DecisionTree cart_build(const std::vector<FeatureVector>& samples, const std::vector<int>& labels,
                        const std::vector<double>& weights, const CartParams& params);

/// Root-to-leaf conditions x satisfies, in path order; repeated features
/// collapse to the deepest occurrence.
std::vector<std::pair<std::size_t, std::uint8_t>> cart_path_predicates(const DecisionTree& tree,
                                                                       const FeatureVector& x);

namespace detail {
class Rng;

/// Tree induction over an index multiset with per-node feature subsampling
/// (features_per_split = 0 means all features). Backs both cart_build and the
/// forest trainer.
DecisionTree cart_build_on_indices(const std::vector<FeatureVector>& samples,
                                   const std::vector<int>& labels,
                                   const std::vector<double>& weights,
                                   const std::vector<std::size_t>& index_multiset,
                                   std::size_t num_classes, const CartParams& params,
                                   std::size_t features_per_split, Rng* rng);
}  // namespace detail

struct MixtureRegressionModel {
    std::size_t components = 0;          // M
    std::vector<double> mixing;          // theta, sums to 1
    std::vector<std::vector<double>> betas;
    std::vector<double> intercepts;
    std::vector<double> sigmas;          // per-component residual scale, > 0
    std::vector<double> loglik_trace;    // one entry per EM iteration
    bool collapsed = false;              // a component died even after re-seeding
};

/// EM for a mixture of M linear-Gaussian regressions. Responsibilities start
/// from a seeded random assignment; the M-step solves per-component weighted
/// least squares (optionally with an L1 penalty via l1 > 0); sigma is floored
/// so the constrained M-step keeps the log-likelihood monotone. A component
/// whose responsibility mass vanishes is re-seeded once, then dropped.
MixtureRegressionModel em_mixture_regression(const RegressionProblem& p, std::size_t M, double tol,
                                             std::size_t max_iter, std::uint64_t seed,
                                             double l1 = 0.0);

}  // namespace exbench
