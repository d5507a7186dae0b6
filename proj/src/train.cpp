#include "iia/train.hpp"

#include <algorithm>
#include <numeric>

namespace iia {

Split make_split(Eigen::Index count, int stride) {
    Split s;
    for (Eigen::Index i = 0; i < count; ++i) {
        if (stride > 0 && i % stride == stride - 1)
            s.validation.push_back(i);
        else
            s.train.push_back(i);
    }
    return s;
}

Matrix gather_rows(const Matrix& m, std::span<const Eigen::Index> idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r), c) = m(idx[r], c);
    return out;
}

StandardScaler StandardScaler::fit(const Matrix& x) {
    StandardScaler s;
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.mean[c]).square().mean();
        s.scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Matrix StandardScaler::apply(const Matrix& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

namespace {

double mse_of(const nnet::MlpParams& net, const Matrix& x, const Matrix& y) {
    if (x.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
    return (nnet::mlp_apply(net, x) - y).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

double mse_loss(const nnet::MlpParams& net, const Matrix& inputs, const Matrix& targets, nnet::MlpGrads* grad) {
    const auto cache = nnet::mlp_forward(net, inputs);
    const Matrix err = cache.output - targets;
    const double loss = err.squaredNorm() / static_cast<double>(err.size());
    if (grad) *grad = nnet::mlp_backward(net, cache, err * (2.0 / static_cast<double>(err.size()))).grads;
    return loss;
}

RegressionResult fit_mse(nnet::MlpParams& net, const Matrix& inputs, const Matrix& targets,
                         const TrainConfig& config) {
    require(inputs.rows() == targets.rows(), "fit_mse: input/target length mismatch");
    require(inputs.cols() == net.input_dim() && targets.cols() == net.output_dim(), "fit_mse: width mismatch");
    require(config.batch_size >= 1, "fit_mse: batch size must be >= 1");

    const Split split = make_split(inputs.rows(), config.validation_stride);
    const Matrix xv = gather_rows(inputs, split.validation);
    const Matrix yv = gather_rows(targets, split.validation);
    const bool has_val = !split.validation.empty();

    RegressionResult result;
    std::vector<Eigen::Index> order = split.train;
    Rng rng(config.seed);
    nnet::OptState opt(config.learning_rate, config.momentum);
    nnet::MlpParams best = net;
    double best_val = std::numeric_limits<double>::infinity();
    long steps = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        Eigen::Index seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            if (config.max_steps > 0 && steps >= config.max_steps) break;
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::span<const Eigen::Index> idx(order.data() + start, stop - start);
            const Matrix xb = gather_rows(inputs, idx);
            const Matrix yb = gather_rows(targets, idx);
            nnet::MlpGrads grads;
            const double loss = mse_loss(net, xb, yb, &grads);
            if (!std::isfinite(loss)) throw DivergenceError("fit_mse: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss * static_cast<double>(idx.size());
            seen += static_cast<Eigen::Index>(idx.size());
            nnet::sgd_momentum_step(net, grads, opt);
            ++steps;
        }
        EpochLog row;
        row.epoch = epoch;
        row.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : mse_of(net, inputs, targets);
        row.val_loss = has_val ? mse_of(net, xv, yv) : row.train_loss;
        result.log.push_back(row);
        if (row.val_loss < best_val) {
            best_val = row.val_loss;
            best = net;
        }
        opt.learning_rate *= config.lr_decay;
        if (config.max_steps > 0 && steps >= config.max_steps) break;
    }
    if (!result.log.empty()) net = std::move(best);
    result.final_mse = mse_of(net, inputs, targets);
    return result;
}

}  // namespace iia
