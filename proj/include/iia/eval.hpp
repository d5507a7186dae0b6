#pragma once

// Recovery metrics, the variability (rank) check on modulation parameters,
// and the post-hoc forward-model fit.

#include "iia/common.hpp"
#include "iia/nnet.hpp"
#include "iia/train.hpp"

#include <string>
#include <vector>

namespace iia::eval {

/// Pearson correlations, rows = true components, columns = estimates.
/// When s_true is longer than s_hat its leading rows are dropped (estimates
/// start after the first observed lags). A constant series correlates as 0.
Matrix correlation_matrix(const Matrix& s_true, const Matrix& s_hat);

/// Rank (Spearman) correlations under the same alignment rules.
Matrix spearman_matrix(const Matrix& s_true, const Matrix& s_hat);

/// Maximum-weight perfect matching on a square score matrix (Hungarian).
/// Returns perm with row i assigned to column perm[i].
std::vector<int> max_weight_assignment(const Matrix& score);

/// Permutation maximizing sum_i |corr(i, perm[i])|.
std::vector<int> match_components(const Matrix& corr);

/// Mean over i of |corr(i, perm[i])|.
double mcc(const Matrix& corr, const std::vector<int>& perm);

struct EvalReport {
    Matrix corr;
    std::vector<int> perm;
    double mcc = 0.0;
    double mcc_spearman = 0.0;
    std::string method;
    std::uint64_t seed = 0;
    int layers = 0;
    Eigen::Index length = 0;
};

EvalReport evaluate(const Matrix& s_true, const Matrix& s_hat);

/// Fraction of time points where the estimated path agrees with the true
/// path after the best one-to-one relabeling of states.
double state_accuracy(const std::vector<int>& truth, const std::vector<int>& estimate, int num_states);

struct VariabilityReport {
    Matrix l_matrix;
    int rank = 0;
    double smallest_singular = 0.0;
    double largest_singular = 0.0;
    bool pass = false;
};

/// `lambda_samples` is nk x P, one column per auxiliary point. Passes iff
/// the differences to the first column have rank nk (threshold 1e-8 sigma_max).
VariabilityReport variability_check(const Matrix& lambda_samples);

struct ForwardFitConfig {
    int layers = 2;
    int hidden_factor = 4;
    TrainConfig train;
    double holdout_fraction = 0.1;
};

struct ForwardFitResult {
    nnet::MlpParams net;
    Vector r2;  // per output dimension, on the held-out tail
    double mean_r2 = 0.0;
};

/// Fits x_t from [x_{t-1}; s_hat_t] with an MLP (output layer starts at
/// zero). s_hat row r pairs with x row r + (len(x) - len(s_hat)).
ForwardFitResult fit_forward_model(const Matrix& x, const Matrix& s_hat, const ForwardFitConfig& config);

}  // namespace iia::eval
