#pragma once

// Shared minibatch training settings and an MSE regression trainer used by
// the forward-model fit and the additive-innovation baseline.

#include "iia/common.hpp"
#include "iia/nnet.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace iia {

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 256;
    int epochs = 30;
    long max_steps = 0;        // 0: no cap beyond epochs
    double lr_decay = 1.0;     // multiplicative per epoch
    int validation_stride = 10;  // every stride-th sample is held out; 0 disables
    std::uint64_t seed = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// Index split used by every trainer: sample i is held out iff
/// stride > 0 and i % stride == stride - 1.
struct Split {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> validation;
};
Split make_split(Eigen::Index count, int stride);

/// Gathers rows of `m` by index.
Matrix gather_rows(const Matrix& m, std::span<const Eigen::Index> idx);

struct StandardScaler {
    Vector mean;
    Vector scale;

    static StandardScaler fit(const Matrix& x);
    [[nodiscard]] Matrix apply(const Matrix& x) const;
};

struct RegressionResult {
    std::vector<EpochLog> log;
    double final_mse = 0.0;
};

/// Mean over all entries of (net(inputs) - targets)^2; fills grad if given.
double mse_loss(const nnet::MlpParams& net, const Matrix& inputs, const Matrix& targets,
                nnet::MlpGrads* grad = nullptr);

/// Minimizes the mean squared error of net(inputs) against targets by
/// minibatch SGD with momentum; keeps the best-validation snapshot.
RegressionResult fit_mse(nnet::MlpParams& net, const Matrix& inputs, const Matrix& targets,
                         const TrainConfig& config);

}  // namespace iia
