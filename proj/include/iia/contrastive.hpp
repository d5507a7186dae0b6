#pragma once

// Self-supervised innovation estimators. Both share a feature pair:
//   h(x_t, x_{t-1}, ..., x_{t-p})  -> n  (the innovation estimate)
//   phi(x_{t-1}, ..., x_{t-p})     -> n  (absorbs the dependence on the past)
// GCL discriminates real (x_t, past, u_t) triples from copies with u
// permuted; TCL classifies the segment label of (x_t, past).
// With nica set, h sees x_t only and the phi terms are dropped.

#include "iia/common.hpp"
#include "iia/nnet.hpp"
#include "iia/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace iia::contrastive {

struct FeatureNets {
    nnet::MlpParams h;
    nnet::MlpParams phi;  // empty in nica mode
    int n = 0;
    int order = 1;
    bool nica = false;

    [[nodiscard]] Eigen::Index lagged_width() const { return static_cast<Eigen::Index>(order + 1) * n; }
};

struct FeatureConfig {
    int layers = 1;
    int hidden_factor = 4;  // hidden width = hidden_factor * n
    nnet::Activation activation = nnet::Activation::maxout();
    int order = 1;
    bool nica = false;
};

FeatureNets make_feature_nets(int n, const FeatureConfig& config, std::uint64_t seed);

/// Rows [x_t, x_{t-1}, ..., x_{t-p}] for t = p..N-1.
Matrix lagged_inputs(const Matrix& x, int order);

/// s_hat_t = h(x_t, ...) for t = p..N-1, p = order. A network whose input
/// width is n is applied to x_t alone.
Matrix extract_innovations(const nnet::MlpParams& h, const Matrix& x, int order = 1);

// ---------------------------------------------------------------------------
// GCL

/// Real triples are rows of `lagged` paired with u; the contrast set reuses
/// every row once with u replaced by u[perm]. perm is never the identity.
struct ContrastiveDataset {
    Matrix lagged;           // M x (p+1)n
    std::vector<int> u;      // real auxiliary values, length M
    std::vector<int> u_perm; // permuted auxiliary values, length M
    int order = 1;
    int period = 0;          // Fourier period of u (the series length)

    [[nodiscard]] Eigen::Index num_triples() const { return lagged.rows(); }
    [[nodiscard]] Eigen::Index size() const { return 2 * lagged.rows(); }
    [[nodiscard]] int label(Eigen::Index i) const { return i < lagged.rows() ? 1 : 0; }
    [[nodiscard]] int aux(Eigen::Index i) const {
        return i < lagged.rows() ? u[static_cast<std::size_t>(i)]
                                 : u_perm[static_cast<std::size_t>(i - lagged.rows())];
    }
};

/// `u` has one entry per time point of x (length N); the period defaults to N.
ContrastiveDataset build_contrastive_dataset(const Matrix& x, const std::vector<int>& u, std::uint64_t seed,
                                             int order = 1, int period = 0);

/// Rows [1, sin(2 pi f u / P) for f = 1..F, cos(2 pi f u / P) for f = 1..F].
Matrix fourier_basis(const std::vector<int>& u, int num_freq, int period);

struct GclModel {
    FeatureNets nets;
    int num_freq = 64;
    int period = 0;
    Matrix mu;      // 2n x 2F, rows (h_1^2..h_n^2, h_1..h_n), columns the non-constant bases
    Matrix phi_mu;  // 2n x 2F (0 x 0 in nica mode)
    Vector alpha;   // 2F + 1, constant basis first
    Vector beta;    // n, weights of h_i^2
    Vector gamma;   // n, weights of phi_i^2 (empty in nica mode)
};

/// Zero classifier coefficients on top of the given feature nets.
GclModel make_gcl_model(FeatureNets nets, int num_freq, int period);

/// r for each row; `basis` rows come from fourier_basis.
Vector gcl_regression(const GclModel& model, const Matrix& lagged, const Matrix& basis);

/// Mean binary cross-entropy of logistic(r) against y. When grad is given it
/// receives the gradient, shaped like the model.
double gcl_loss(const GclModel& model, const Matrix& lagged, const Matrix& basis, const Vector& y,
                GclModel* grad = nullptr);

nnet::ParamViews param_views(GclModel& model);
GclModel zeros_like(const GclModel& model);

struct GclConfig {
    FeatureConfig features;
    TrainConfig train;
    int num_freq = 64;
};

struct GclResult {
    GclModel model;
    std::vector<EpochLog> log;
    double initial_loss = 0.0;
};

/// Inputs are standardized for training; the normalization is folded into
/// the first layers of the returned nets so they accept raw x.
GclResult train_gcl(const ContrastiveDataset& data, const GclConfig& config);

// ---------------------------------------------------------------------------
// TCL

struct TclModel {
    FeatureNets nets;
    int num_classes = 0;
    Matrix w;      // T x 2n over (h^2, h)
    Matrix w_phi;  // T x 2n over (phi^2, phi); 0 x 0 in nica mode
    Vector b;      // T
};

TclModel make_tcl_model(FeatureNets nets, int num_classes);

/// Class logits, one row per input row.
Matrix tcl_logits(const TclModel& model, const Matrix& lagged);

/// Softmax of tcl_logits (max-subtracted).
Matrix tcl_posterior(const TclModel& model, const Matrix& lagged);

double tcl_loss(const TclModel& model, const Matrix& lagged, const std::vector<int>& labels,
                TclModel* grad = nullptr, double* accuracy = nullptr);

nnet::ParamViews param_views(TclModel& model);
TclModel zeros_like(const TclModel& model);

struct TclConfig {
    FeatureConfig features;
    TrainConfig train;
};

struct TclResult {
    TclModel model;
    std::vector<EpochLog> log;
    double initial_loss = 0.0;
    double final_accuracy = 0.0;
};

/// `labels` has one entry per time point of x; triple t takes labels[t].
TclResult train_tcl(const Matrix& x, const std::vector<int>& labels, const TclConfig& config);

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const FeatureNets& f);
void from_json(const nlohmann::json& j, FeatureNets& f);
void to_json(nlohmann::json& j, const GclModel& m);
void from_json(const nlohmann::json& j, GclModel& m);
void to_json(nlohmann::json& j, const TclModel& m);
void from_json(const nlohmann::json& j, TclModel& m);

/// CSV with header epoch,train_loss,val_loss,accuracy.
std::string epoch_log_csv(const std::vector<EpochLog>& log);

}  // namespace iia::contrastive
