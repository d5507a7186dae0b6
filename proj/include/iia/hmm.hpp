#pragma once

// IIA-HMM: the innovations h(x_t, x_{t-1}, ...) follow a hidden Markov chain
// with diagonal Gaussian emissions. The observation likelihood carries
// log|det dh/dx_t|, the only block of the augmented demixing Jacobian that
// is not the identity. Fitted by generalized EM: Baum-Welch updates for the
// discrete part, backtracked quasi-Newton ascent on Q for the network.

#include "iia/common.hpp"
#include "iia/nnet.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace iia::hmm {

struct HmmModel {
    nnet::MlpParams h;  // (p+1)n -> n, input rows [x_t, x_{t-1}, ..., x_{t-p}]
    int order = 1;
    Matrix transition;  // C x C, row-stochastic
    Vector initial;     // length C
    Matrix means;       // C x n
    Matrix variances;   // C x n

    [[nodiscard]] int num_states() const { return static_cast<int>(transition.rows()); }
    [[nodiscard]] int dim() const { return h.output_dim(); }
    void validate() const;
};

/// Per-sample log|det dh/dx_t| over rows of a lagged input matrix. A
/// Jacobian with |det| < 1e-300 gives -inf and bumps `singular`.
Vector jacobian_logdet(const nnet::MlpParams& h, const Matrix& lagged, long* singular = nullptr);

/// Gradient of sum_b weights[b] * log|det dh/dx_t| with respect to h,
/// using d log|det J| / dJ = J^{-T} pushed through the layer chain.
nnet::MlpGrads jacobian_logdet_grad(const nnet::MlpParams& h, const Matrix& lagged, const Vector& weights);

/// M x C matrix of log N(h_t; means[c], diag variances[c]) + log|det dh/dx_t|.
Matrix emission_loglik(const HmmModel& model, const Matrix& lagged, long* singular = nullptr);

/// Single-point form: `row` is [x_t, x_{t-1}, ...].
double emission_loglik(const HmmModel& model, const Vector& row, int state);

struct Posteriors {
    Matrix gamma;  // N x C
    Matrix xi;     // (N-1) x C*C, entry (t, i*C + j) = p(z_t = i, z_{t+1} = j | x)
    double loglik = 0.0;
};

/// Log-domain forward-backward. Throws NumericError when no state can
/// explain some point.
Posteriors forward_backward(const Matrix& log_emissions, const Matrix& transition, const Vector& initial);

/// Most probable state path.
std::vector<int> viterbi(const Matrix& log_emissions, const Matrix& transition, const Vector& initial);

/// Baum-Welch closed forms for the transition matrix, the initial
/// distribution and the state moments of s_hat (rows aligned with gamma).
/// States whose total responsibility is below 1e-8 are reseeded from a
/// random row of s_hat; the count is returned.
int m_step_discrete(HmmModel& model, const Posteriors& post, const Matrix& s_hat, std::uint64_t seed);

/// Network part of Q: sum_t sum_c gamma(t,c) [log N(h_t; m_c, v_c) + log|det dh/dx_t|],
/// divided by the number of rows. -inf when a weighted Jacobian is singular.
double q_network(const HmmModel& model, const Matrix& lagged, const Matrix& gamma, nnet::MlpGrads* grad = nullptr);

struct NetStepConfig {
    int steps = 10;            // L-BFGS iterations per M-step
    double step_size = 0.05;   // scale of a plain gradient step, adapted across calls
    double max_step_size = 1.0;
    int max_halvings = 10;
};

struct NetStepResult {
    int accepted = 0;
    double q_before = 0.0;
    double q_after = 0.0;
};

/// L-BFGS ascent on q_network with backtracking (at most max_halvings); a
/// step is kept only if Q does not decrease. When no curvature pairs are
/// available the direction is step_size times the gradient, and step_size
/// is adapted across calls.
NetStepResult m_step_network(HmmModel& model, const Matrix& lagged, const Matrix& gamma,
                             const NetStepConfig& config, double& step_size);

struct EmConfig {
    int layers = 1;
    int order = 1;
    int hidden_factor = 2;      // hidden width = hidden_factor * n
    double leak = 0.2;          // smooth leaky ReLU coefficient
    int restarts = 20;
    int max_iters = 300;
    double tol = 1e-6;          // stop when the per-sample loglik gains less
    double stay = 0.9;          // initial diagonal of the transition matrix
    int tcl_segment_length = 32;
    int tcl_epochs = 5;
    double tcl_learning_rate = 0.05;
    NetStepConfig net;
    std::uint64_t seed = 0;
};

struct EmLogRow {
    int restart = 0;
    int iter = 0;
    double loglik = 0.0;
    double q = 0.0;
    int accepted_net_step = 0;
};

struct EmResult {
    HmmModel model;
    std::vector<EmLogRow> log;        // every restart
    std::vector<double> restart_loglik;
    int best_restart = 0;
    std::uint64_t restart_seed = 0;   // seed of the selected restart
    double final_loglik = 0.0;
    int reseeded_states = 0;
    long singular_jacobians = 0;
};

/// Seed of restart r.
std::uint64_t restart_seed(std::uint64_t seed, int restart);

/// Runs one EM restart from the given seed. Rows of the log carry `restart`.
EmResult train_hmm_restart(const Matrix& x, int num_states, const EmConfig& config, int restart);

/// Best-loglik model over config.restarts restarts.
EmResult train_hmm_em(const Matrix& x, int num_states, const EmConfig& config);

/// s_hat_t = h(x_t, ...) and the Viterbi state path for t = p..N-1.
Matrix extract_innovations(const HmmModel& model, const Matrix& x);
std::vector<int> decode_states(const HmmModel& model, const Matrix& x);

void to_json(nlohmann::json& j, const HmmModel& m);
void from_json(const nlohmann::json& j, HmmModel& m);

/// Model bundle with the selected restart seed and final loglik.
nlohmann::json result_to_json(const EmResult& r);

/// CSV with header restart,iter,loglik,Q,accepted_net_step.
std::string em_log_csv(const std::vector<EmLogRow>& log);

}  // namespace iia::hmm
