#pragma once

// Dense multilayer perceptrons with hand-written reverse-mode gradients,
// input Jacobians, and a classical-momentum SGD step. Batches are stored
// with samples along the rows (B x d).

#include "iia/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace iia::nnet {

enum class ActivationKind { linear, leaky_relu, smooth_leaky_relu, maxout };

struct Activation {
    ActivationKind kind = ActivationKind::linear;
    double leak = 0.0;  // used by the leaky variants, must lie in (0, 1)

    static Activation linear() { return {ActivationKind::linear, 0.0}; }
    static Activation leaky_relu(double a) { return {ActivationKind::leaky_relu, a}; }
    static Activation smooth_leaky_relu(double a) { return {ActivationKind::smooth_leaky_relu, a}; }
    static Activation maxout() { return {ActivationKind::maxout, 0.0}; }

    bool operator==(const Activation&) const = default;
};

std::string to_string(ActivationKind kind);
ActivationKind activation_kind_from_string(const std::string& name);

/// Layered affine weights with one hidden activation. The last layer is
/// always linear. Weight l has shape layer_dims[l+1] x layer_dims[l], or
/// 2*layer_dims[l+1] x layer_dims[l] for a maxout hidden layer (group 0 in
/// the top half of the rows, group 1 in the bottom half).
struct MlpParams {
    std::vector<int> layer_dims;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Activation activation;

    [[nodiscard]] int num_layers() const { return static_cast<int>(weights.size()); }
    [[nodiscard]] int input_dim() const { return layer_dims.front(); }
    [[nodiscard]] int output_dim() const { return layer_dims.back(); }
    [[nodiscard]] bool is_hidden(int layer) const { return layer + 1 < num_layers(); }
    [[nodiscard]] bool is_maxout_layer(int layer) const {
        return is_hidden(layer) && activation.kind == ActivationKind::maxout;
    }
    [[nodiscard]] std::size_t num_params() const;

    /// Checks every shape invariant; throws InvalidArgument on violation.
    void validate() const;

    bool operator==(const MlpParams&) const = default;
};

/// Gradient buffers shaped like MlpParams.
struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static MlpGrads zeros_like(const MlpParams& params);
    MlpGrads& operator+=(const MlpGrads& other);
    MlpGrads& operator*=(double s);
    [[nodiscard]] double squared_norm() const;
};

struct MlpCache {
    std::vector<Matrix> inputs;  // input to each layer (B x d_l)
    std::vector<Matrix> pre;     // pre-activations (B x width, 2*width for maxout)
    std::vector<Eigen::Array<unsigned char, Eigen::Dynamic, Eigen::Dynamic>> maxout_sel;
    Matrix output;
};

MlpParams mlp_init(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed);

/// Forward pass that records everything mlp_backward needs.
MlpCache mlp_forward(const MlpParams& params, const Matrix& batch);

/// Forward pass without a cache.
Matrix mlp_apply(const MlpParams& params, const Matrix& batch);

struct BackwardResult {
    MlpGrads grads;
    Matrix input_grads;
};

/// Reverse-mode gradients of <upstream, output> with respect to the
/// parameters and the inputs.
BackwardResult mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream);

/// Batched Jacobians of the network output with respect to a subset of the
/// input columns, with the forward quantities retained so that a linear
/// functional of the Jacobians can be differentiated with respect to the
/// parameters.
///
/// For sample b, jacobian(b) is d_out x k where k = columns.size(). Stored
/// internally as d x (B*k) blocks, sample-major.
class JacobianChain {
public:
    JacobianChain(const MlpParams& params, const Matrix& batch, std::vector<int> columns);

    [[nodiscard]] Eigen::Index batch_size() const { return batch_size_; }
    [[nodiscard]] int subset_size() const { return static_cast<int>(columns_.size()); }
    [[nodiscard]] const Matrix& output() const { return cache_.output; }
    [[nodiscard]] const MlpCache& cache() const { return cache_; }

    /// d_out x k Jacobian of sample b.
    [[nodiscard]] Matrix jacobian(Eigen::Index b) const;
    /// All Jacobians, d_out x (B*k).
    [[nodiscard]] const Matrix& jacobians() const { return jz_.back(); }

    /// Gradient w.r.t. the parameters of
    ///   sum_b <jac_adjoint_b, J_b> + <output_adjoint, output>.
    /// jac_adjoint is d_out x (B*k); output_adjoint is B x d_out (may be empty).
    [[nodiscard]] MlpGrads backward(const Matrix& jac_adjoint, const Matrix& output_adjoint) const;

private:
    const MlpParams* params_;
    std::vector<int> columns_;
    Eigen::Index batch_size_;
    MlpCache cache_;
    std::vector<Matrix> jz_;  // Jacobian of each layer's pre-activation, width x (B*k)
};

/// Exact Jacobian d_out x |columns| of the output at a single input point.
/// Kinks of leaky_relu and maxout use the right-derivative convention
/// (ties in maxout pick group 0).
Matrix input_jacobian(const MlpParams& params, const Vector& point, const std::vector<int>& columns);

// ---------------------------------------------------------------------------
// Flat parameter views shared by the optimizer and the gradient checker.

using ParamViews = std::vector<std::span<double>>;
using ConstParamViews = std::vector<std::span<const double>>;

ParamViews param_views(MlpParams& params);
ParamViews param_views(MlpGrads& grads);
ConstParamViews const_views(const ParamViews& views);

struct OptState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::vector<Vector> velocity;

    OptState() = default;
    OptState(double lr, double mu) : learning_rate(lr), momentum(mu) {}
};

/// v <- momentum * v + g ; theta <- theta - lr * v. Velocity buffers are
/// allocated on first use. A non-finite gradient leaves params and state
/// untouched and raises DivergenceError.
void sgd_momentum_step(const ParamViews& params, const ConstParamViews& grads, OptState& opt);
void sgd_momentum_step(MlpParams& params, MlpGrads& grads, OptState& opt);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Central-difference comparison of `analytic` against `loss` over every
/// parameter (a seeded subsample of `max_checked` entries above that size).
/// The relative error of one entry is |a - d| / max(|a|, |d|, floor).
GradCheckResult grad_check(const std::function<double()>& loss, const ParamViews& params,
                           const ConstParamViews& analytic, double eps = 1e-5,
                           double floor = 1e-6, std::size_t max_checked = 10000,
                           std::uint64_t seed = 0);

/// Folds an affine input normalization x' = (x - mean) / scale into the
/// first layer so the network accepts raw inputs.
void fold_input_normalization(MlpParams& params, const Vector& mean, const Vector& scale);

void to_json(nlohmann::json& j, const MlpParams& p);
void from_json(const nlohmann::json& j, MlpParams& p);

}  // namespace iia::nnet
