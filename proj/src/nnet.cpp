#include "iia/nnet.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace iia::nnet {

namespace {

double activate(const Activation& act, double z) {
    switch (act.kind) {
        case ActivationKind::linear: return z;
        case ActivationKind::leaky_relu: return z >= 0.0 ? z : act.leak * z;
        case ActivationKind::smooth_leaky_relu: {
            // a*z + (1-a)*log(1+e^z), evaluated without overflow
            const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            return act.leak * z + (1.0 - act.leak) * softplus;
        }
        case ActivationKind::maxout: break;
    }
    throw InvalidArgument("activate: maxout is not pointwise");
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double activate_d1(const Activation& act, double z) {
    switch (act.kind) {
        case ActivationKind::linear: return 1.0;
        case ActivationKind::leaky_relu: return z >= 0.0 ? 1.0 : act.leak;
        case ActivationKind::smooth_leaky_relu: return act.leak + (1.0 - act.leak) * sigmoid(z);
        case ActivationKind::maxout: break;
    }
    throw InvalidArgument("activate_d1: maxout is not pointwise");
}

double activate_d2(const Activation& act, double z) {
    if (act.kind == ActivationKind::smooth_leaky_relu) {
        const double s = sigmoid(z);
        return (1.0 - act.leak) * s * (1.0 - s);
    }
    return 0.0;
}

}  // namespace

std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::linear: return "linear";
        case ActivationKind::leaky_relu: return "leaky_relu";
        case ActivationKind::smooth_leaky_relu: return "smooth_leaky_relu";
        case ActivationKind::maxout: return "maxout";
    }
    return "unknown";
}

ActivationKind activation_kind_from_string(const std::string& name) {
    if (name == "linear") return ActivationKind::linear;
    if (name == "leaky_relu") return ActivationKind::leaky_relu;
    if (name == "smooth_leaky_relu") return ActivationKind::smooth_leaky_relu;
    if (name == "maxout") return ActivationKind::maxout;
    throw InvalidArgument("unknown activation kind: " + name);
}

std::size_t MlpParams::num_params() const {
    std::size_t total = 0;
    for (const auto& w : weights) total += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) total += static_cast<std::size_t>(b.size());
    return total;
}

void MlpParams::validate() const {
    require(layer_dims.size() >= 2, "MlpParams: need at least input and output widths");
    for (int d : layer_dims) require(d >= 1, "MlpParams: zero width");
    require(weights.size() + 1 == layer_dims.size() && biases.size() == weights.size(),
            "MlpParams: layer count mismatch");
    const bool leaky = activation.kind == ActivationKind::leaky_relu ||
                       activation.kind == ActivationKind::smooth_leaky_relu;
    if (leaky) require(activation.leak > 0.0 && activation.leak < 1.0, "MlpParams: leak must lie in (0,1)");
    for (int l = 0; l < num_layers(); ++l) {
        const Eigen::Index rows = (is_maxout_layer(l) ? 2 : 1) * layer_dims[l + 1];
        require(weights[l].rows() == rows && weights[l].cols() == layer_dims[l],
                "MlpParams: weight shape mismatch at layer " + std::to_string(l));
        require(biases[l].size() == rows, "MlpParams: bias shape mismatch at layer " + std::to_string(l));
    }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
    MlpGrads g;
    for (const auto& w : params.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : params.biases) g.biases.push_back(Vector::Zero(b.size()));
    return g;
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
    return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
}

double MlpGrads::squared_norm() const {
    double total = 0.0;
    for (const auto& w : weights) total += w.squaredNorm();
    for (const auto& b : biases) total += b.squaredNorm();
    return total;
}

MlpParams mlp_init(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed) {
    require(layer_dims.size() >= 2, "mlp_init: need at least input and output widths");
    for (int d : layer_dims) require(d >= 1, "mlp_init: zero width");

    MlpParams p;
    p.layer_dims = layer_dims;
    p.activation = activation;
    Rng rng(seed);
    const int layers = static_cast<int>(layer_dims.size()) - 1;
    for (int l = 0; l < layers; ++l) {
        const bool maxout = (l + 1 < layers) && activation.kind == ActivationKind::maxout;
        const int rows = (maxout ? 2 : 1) * layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer_dims[l]));
        std::uniform_real_distribution<double> unif(-bound, bound);
        Matrix w(rows, layer_dims[l]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = unif(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vector::Zero(rows));
    }
    p.validate();
    return p;
}

MlpCache mlp_forward(const MlpParams& params, const Matrix& batch) {
    require(batch.cols() == params.input_dim(),
            "mlp_forward: batch width " + std::to_string(batch.cols()) + " != input width " +
                std::to_string(params.input_dim()));
    MlpCache cache;
    const int layers = params.num_layers();
    cache.inputs.reserve(layers);
    cache.pre.reserve(layers);
    cache.maxout_sel.resize(layers);

    Matrix a = batch;
    for (int l = 0; l < layers; ++l) {
        Matrix z = a * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        cache.inputs.push_back(std::move(a));
        if (!params.is_hidden(l)) {
            a = z;
        } else if (params.is_maxout_layer(l)) {
            const Eigen::Index w = params.layer_dims[l + 1];
            a.resize(z.rows(), w);
            auto& sel = cache.maxout_sel[l];
            sel.resize(z.rows(), w);
            for (Eigen::Index c = 0; c < w; ++c) {
                for (Eigen::Index b = 0; b < z.rows(); ++b) {
                    const bool second = z(b, w + c) > z(b, c);
                    sel(b, c) = second ? 1 : 0;
                    a(b, c) = second ? z(b, w + c) : z(b, c);
                }
            }
        } else {
            const Activation act = params.activation;
            a = z.unaryExpr([act](double v) { return activate(act, v); });
        }
        cache.pre.push_back(std::move(z));
    }
    cache.output = std::move(a);
    return cache;
}

Matrix mlp_apply(const MlpParams& params, const Matrix& batch) {
    return mlp_forward(params, batch).output;
}

BackwardResult mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream) {
    const int layers = params.num_layers();
    require(static_cast<int>(cache.pre.size()) == layers, "mlp_backward: cache does not match params");
    require(upstream.rows() == cache.output.rows() && upstream.cols() == cache.output.cols(),
            "mlp_backward: upstream shape mismatch");

    BackwardResult res{MlpGrads::zeros_like(params), Matrix()};
    Matrix da = upstream;
    for (int l = layers - 1; l >= 0; --l) {
        Matrix dz;
        const Matrix& z = cache.pre[l];
        if (!params.is_hidden(l)) {
            dz = std::move(da);
        } else if (params.is_maxout_layer(l)) {
            const Eigen::Index w = params.layer_dims[l + 1];
            dz = Matrix::Zero(z.rows(), z.cols());
            const auto& sel = cache.maxout_sel[l];
            for (Eigen::Index c = 0; c < w; ++c)
                for (Eigen::Index b = 0; b < z.rows(); ++b) dz(b, c + sel(b, c) * w) = da(b, c);
        } else {
            const Activation act = params.activation;
            dz = da.cwiseProduct(z.unaryExpr([act](double v) { return activate_d1(act, v); }));
        }
        res.grads.weights[l].noalias() = dz.transpose() * cache.inputs[l];
        res.grads.biases[l] = dz.colwise().sum().transpose();
        da.noalias() = dz * params.weights[l];
    }
    res.input_grads = std::move(da);
    return res;
}

// ---------------------------------------------------------------------------

JacobianChain::JacobianChain(const MlpParams& params, const Matrix& batch, std::vector<int> columns)
    : params_(&params), columns_(std::move(columns)), batch_size_(batch.rows()) {
    require(!columns_.empty(), "input_jacobian: empty column subset");
    for (int c : columns_)
        require(c >= 0 && c < params.input_dim(), "input_jacobian: column index out of range");
    cache_ = mlp_forward(params, batch);

    const int layers = params.num_layers();
    const Eigen::Index k = subset_size();
    const Eigen::Index cols = batch_size_ * k;
    jz_.resize(layers);

    Matrix w0(params.weights[0].rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) w0.col(c) = params.weights[0].col(columns_[c]);
    jz_[0].resize(w0.rows(), cols);
    for (Eigen::Index b = 0; b < batch_size_; ++b) jz_[0].middleCols(b * k, k) = w0;

    for (int l = 1; l < layers; ++l) {
        const Eigen::Index w = params.layer_dims[l];
        Matrix ja(w, cols);
        const Matrix& z = cache_.pre[l - 1];
        const Matrix& jprev = jz_[l - 1];
        if (params.is_maxout_layer(l - 1)) {
            const auto& sel = cache_.maxout_sel[l - 1];
            for (Eigen::Index b = 0; b < batch_size_; ++b)
                for (Eigen::Index c = 0; c < k; ++c)
                    for (Eigen::Index r = 0; r < w; ++r) ja(r, b * k + c) = jprev(r + sel(b, r) * w, b * k + c);
        } else {
            const Activation act = params.activation;
            for (Eigen::Index b = 0; b < batch_size_; ++b)
                for (Eigen::Index r = 0; r < w; ++r) {
                    const double d = activate_d1(act, z(b, r));
                    for (Eigen::Index c = 0; c < k; ++c) ja(r, b * k + c) = d * jprev(r, b * k + c);
                }
        }
        jz_[l].noalias() = params.weights[l] * ja;
    }
}

Matrix JacobianChain::jacobian(Eigen::Index b) const {
    const Eigen::Index k = subset_size();
    return jz_.back().middleCols(b * k, k);
}

MlpGrads JacobianChain::backward(const Matrix& jac_adjoint, const Matrix& output_adjoint) const {
    const MlpParams& params = *params_;
    const int layers = params.num_layers();
    const Eigen::Index k = subset_size();
    const Eigen::Index cols = batch_size_ * k;
    require(jac_adjoint.rows() == jz_.back().rows() && jac_adjoint.cols() == cols,
            "JacobianChain::backward: jacobian adjoint shape mismatch");
    const bool has_out = output_adjoint.size() > 0;
    if (has_out)
        require(output_adjoint.rows() == batch_size_ && output_adjoint.cols() == params.output_dim(),
                "JacobianChain::backward: output adjoint shape mismatch");

    MlpGrads grads = MlpGrads::zeros_like(params);
    Matrix g_jac = jac_adjoint;
    Matrix g_val = has_out ? output_adjoint : Matrix::Zero(batch_size_, params.output_dim());

    for (int l = layers - 1; l >= 0; --l) {
        grads.weights[l].noalias() = g_val.transpose() * cache_.inputs[l];
        grads.biases[l] = g_val.colwise().sum().transpose();
        if (l == 0) {
            for (Eigen::Index c = 0; c < k; ++c) {
                Vector acc = Vector::Zero(g_jac.rows());
                for (Eigen::Index b = 0; b < batch_size_; ++b) acc += g_jac.col(b * k + c);
                grads.weights[0].col(columns_[c]) += acc;
            }
            break;
        }

        // Recover Ja_{l-1} (the Jacobian of this layer's input).
        const Eigen::Index w = params.layer_dims[l];
        const Matrix& z = cache_.pre[l - 1];
        const Matrix& jprev = jz_[l - 1];
        Matrix ja(w, cols);
        const bool maxout = params.is_maxout_layer(l - 1);
        const Activation act = params.activation;
        if (maxout) {
            const auto& sel = cache_.maxout_sel[l - 1];
            for (Eigen::Index b = 0; b < batch_size_; ++b)
                for (Eigen::Index c = 0; c < k; ++c)
                    for (Eigen::Index r = 0; r < w; ++r) ja(r, b * k + c) = jprev(r + sel(b, r) * w, b * k + c);
        } else {
            for (Eigen::Index b = 0; b < batch_size_; ++b)
                for (Eigen::Index r = 0; r < w; ++r) {
                    const double d = activate_d1(act, z(b, r));
                    for (Eigen::Index c = 0; c < k; ++c) ja(r, b * k + c) = d * jprev(r, b * k + c);
                }
        }
        grads.weights[l].noalias() += g_jac * ja.transpose();

        const Matrix g_ja = params.weights[l].transpose() * g_jac;  // w x cols
        const Matrix g_a = g_val * params.weights[l];               // B x w

        Matrix next_jac = Matrix::Zero(jprev.rows(), cols);
        Matrix next_val = Matrix::Zero(batch_size_, z.cols());
        if (maxout) {
            const auto& sel = cache_.maxout_sel[l - 1];
            for (Eigen::Index b = 0; b < batch_size_; ++b)
                for (Eigen::Index r = 0; r < w; ++r) {
                    const Eigen::Index row = r + sel(b, r) * w;
                    next_val(b, row) = g_a(b, r);
                    for (Eigen::Index c = 0; c < k; ++c) next_jac(row, b * k + c) = g_ja(r, b * k + c);
                }
        } else {
            for (Eigen::Index b = 0; b < batch_size_; ++b)
                for (Eigen::Index r = 0; r < w; ++r) {
                    const double d1 = activate_d1(act, z(b, r));
                    const double d2 = activate_d2(act, z(b, r));
                    double curvature = 0.0;
                    for (Eigen::Index c = 0; c < k; ++c) {
                        const Eigen::Index j = b * k + c;
                        next_jac(r, j) = d1 * g_ja(r, j);
                        curvature += g_ja(r, j) * jprev(r, j);
                    }
                    next_val(b, r) = d1 * g_a(b, r) + d2 * curvature;
                }
        }
        g_jac = std::move(next_jac);
        g_val = std::move(next_val);
    }
    return grads;
}

Matrix input_jacobian(const MlpParams& params, const Vector& point, const std::vector<int>& columns) {
    require(point.size() == params.input_dim(), "input_jacobian: point width mismatch");
    JacobianChain chain(params, point.transpose(), columns);
    return chain.jacobian(0);
}

// ---------------------------------------------------------------------------

ParamViews param_views(MlpParams& params) {
    ParamViews v;
    for (auto& w : params.weights) v.emplace_back(w.data(), static_cast<std::size_t>(w.size()));
    for (auto& b : params.biases) v.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
    return v;
}

ParamViews param_views(MlpGrads& grads) {
    ParamViews v;
    for (auto& w : grads.weights) v.emplace_back(w.data(), static_cast<std::size_t>(w.size()));
    for (auto& b : grads.biases) v.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
    return v;
}

ConstParamViews const_views(const ParamViews& views) {
    return ConstParamViews(views.begin(), views.end());
}

void sgd_momentum_step(const ParamViews& params, const ConstParamViews& grads, OptState& opt) {
    require(params.size() == grads.size(), "sgd_momentum_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].size() == grads[i].size(), "sgd_momentum_step: shape mismatch");
        for (double g : grads[i])
            if (!std::isfinite(g)) throw DivergenceError("sgd_momentum_step: non-finite gradient");
    }
    if (opt.velocity.size() != params.size()) {
        opt.velocity.clear();
        for (const auto& p : params) opt.velocity.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size())));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Vector& v = opt.velocity[i];
        require(v.size() == static_cast<Eigen::Index>(params[i].size()), "sgd_momentum_step: velocity shape mismatch");
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            v[j] = opt.momentum * v[j] + grads[i][j];
            params[i][j] -= opt.learning_rate * v[j];
        }
    }
}

void sgd_momentum_step(MlpParams& params, MlpGrads& grads, OptState& opt) {
    sgd_momentum_step(param_views(params), const_views(param_views(grads)), opt);
}

GradCheckResult grad_check(const std::function<double()>& loss, const ParamViews& params,
                           const ConstParamViews& analytic, double eps, double floor,
                           std::size_t max_checked, std::uint64_t seed) {
    require(params.size() == analytic.size(), "grad_check: parameter/gradient count mismatch");
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].size() == analytic[i].size(), "grad_check: shape mismatch");
        for (std::size_t j = 0; j < params[i].size(); ++j) entries.emplace_back(i, j);
    }
    if (entries.size() > max_checked) {
        Rng rng(seed);
        std::shuffle(entries.begin(), entries.end(), rng);
        entries.resize(max_checked);
    }

    GradCheckResult res;
    for (const auto& [i, j] : entries) {
        double& theta = params[i][j];
        const double saved = theta;
        theta = saved + eps;
        const double up = loss();
        theta = saved - eps;
        const double down = loss();
        theta = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[i][j];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
        ++res.checked;
    }
    return res;
}

void fold_input_normalization(MlpParams& params, const Vector& mean, const Vector& scale) {
    require(mean.size() == params.input_dim() && scale.size() == params.input_dim(),
            "fold_input_normalization: width mismatch");
    Matrix& w = params.weights.front();
    for (Eigen::Index c = 0; c < w.cols(); ++c) w.col(c) /= scale[c];
    params.biases.front() -= w * mean;
}

void to_json(nlohmann::json& j, const MlpParams& p) {
    j = nlohmann::json::object();
    j["layer_dims"] = p.layer_dims;
    j["activation"] = {{"kind", to_string(p.activation.kind)}, {"leak", p.activation.leak}};
    auto weights = nlohmann::json::array();
    for (const auto& w : p.weights) {
        auto rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(w.cols()));
            for (Eigen::Index c = 0; c < w.cols(); ++c) row[c] = w(r, c);
            rows.push_back(row);
        }
        weights.push_back(std::move(rows));
    }
    j["weights"] = std::move(weights);
    auto biases = nlohmann::json::array();
    for (const auto& b : p.biases) biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
    j["biases"] = std::move(biases);
}

void from_json(const nlohmann::json& j, MlpParams& p) {
    p = MlpParams{};
    p.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    p.activation.kind = activation_kind_from_string(j.at("activation").at("kind").get<std::string>());
    p.activation.leak = j.at("activation").value("leak", 0.0);
    for (const auto& wj : j.at("weights")) {
        const auto rows = wj.get<std::vector<std::vector<double>>>();
        Matrix w(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            require(static_cast<Eigen::Index>(rows[r].size()) == w.cols(), "MlpParams json: ragged weight matrix");
            for (std::size_t c = 0; c < rows[r].size(); ++c) w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        p.weights.push_back(std::move(w));
    }
    for (const auto& bj : j.at("biases")) {
        const auto b = bj.get<std::vector<double>>();
        p.biases.push_back(Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())));
    }
    p.validate();
}

}  // namespace iia::nnet
