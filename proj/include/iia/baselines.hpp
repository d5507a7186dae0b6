#pragma once

// Comparison methods. AD-NVAR fits x_t = f(x_{t-1}, ...) + s_t by least
// squares and unmixes the residuals with NSVICA. NSVICA whitens, then finds
// the rotation that jointly diagonalizes the segment covariances (Jacobi
// sweeps, sum of squared off-diagonals as the objective).

#include "iia/common.hpp"
#include "iia/nnet.hpp"
#include "iia/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace iia::baselines {

struct NsvicaModel {
    Vector mean;       // subtracted before whitening
    Matrix whitening;  // n x n
    Matrix rotation;   // n x n orthogonal
    int num_segments = 0;

    [[nodiscard]] Matrix unmixing() const { return rotation * whitening; }
};

struct NsvicaResult {
    NsvicaModel model;
    Matrix sources;                 // N x n
    std::vector<double> objective;  // before the first sweep, then after each sweep
    int sweeps = 0;
};

struct NsvicaConfig {
    int max_sweeps = 100;
    double angle_tol = 1e-8;  // stop once every rotation in a sweep is smaller
};

/// Rows of `series` are time points. Throws NumericError for a
/// rank-deficient covariance.
NsvicaResult nsvica(const Matrix& series, int num_segments, const NsvicaConfig& config = {});

/// rotation * whitening * (x_t - mean) for every row.
Matrix nsvica_apply(const NsvicaModel& model, const Matrix& series);

/// Sum of squared off-diagonal entries of R C R^T over the given matrices.
double offdiag_objective(const std::vector<Matrix>& covs, const Matrix& rotation);

struct AdnvarConfig {
    int layers = 1;
    int hidden_factor = 4;
    nnet::Activation activation = nnet::Activation::maxout();
    int order = 1;
    int num_segments = 64;  // for the NSVICA stage
    TrainConfig train;
};

struct AdnvarModel {
    nnet::MlpParams predictor;  // p*n -> n, input rows [x_{t-1}, ..., x_{t-p}]
    int order = 1;
    NsvicaModel unmixing;
};

struct AdnvarFit {
    nnet::MlpParams predictor;
    std::vector<EpochLog> log;
    double final_mse = 0.0;
};

/// Least-squares predictor of x_t from the past. Inputs and targets are
/// standardized for training; the returned net works on raw values.
AdnvarFit train_adnvar(const Matrix& x, const AdnvarConfig& config);

/// r_t = x_t - f(x_{t-1}, ...), for t = p..N-1.
Matrix adnvar_residuals(const nnet::MlpParams& predictor, const Matrix& x, int order = 1);

struct AdnvarResult {
    AdnvarModel model;
    AdnvarFit fit;
    Matrix sources;  // (N-p) x n
};

/// Predictor, residuals, then NSVICA on the residuals.
AdnvarResult run_adnvar(const Matrix& x, const AdnvarConfig& config);

Matrix adnvar_sources(const AdnvarModel& model, const Matrix& x);

void to_json(nlohmann::json& j, const NsvicaModel& m);
void from_json(const nlohmann::json& j, NsvicaModel& m);
void to_json(nlohmann::json& j, const AdnvarModel& m);
void from_json(const nlohmann::json& j, AdnvarModel& m);

}  // namespace iia::baselines
