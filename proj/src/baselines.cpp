#include "iia/baselines.hpp"

#include "iia/jsonio.hpp"
#include "iia/simgen.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace iia::baselines {

double offdiag_objective(const std::vector<Matrix>& covs, const Matrix& rotation) {
    double total = 0.0;
    for (const auto& c : covs) {
        Matrix r = rotation * c * rotation.transpose();
        r.diagonal().setZero();
        total += r.squaredNorm();
    }
    return total;
}

NsvicaResult nsvica(const Matrix& series, int num_segments, const NsvicaConfig& config) {
    const Eigen::Index N = series.rows();
    const Eigen::Index n = series.cols();
    require(n >= 1 && N >= 2, "nsvica: empty series");
    require(num_segments >= 2, "nsvica: need at least two segments");
    require(N / num_segments >= n, "nsvica: segments shorter than the dimension");

    NsvicaResult res;
    NsvicaModel& m = res.model;
    m.num_segments = num_segments;
    m.mean = series.colwise().mean().transpose();
    const Matrix xc = series.rowwise() - m.mean.transpose();
    const Matrix cov = xc.transpose() * xc / static_cast<double>(N);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector d = eig.eigenvalues();
    if (!(d.minCoeff() > 1e-12 * std::max(d.maxCoeff(), 0.0)) || d.maxCoeff() <= 0.0)
        throw NumericError("nsvica: rank-deficient covariance");
    m.whitening = eig.eigenvectors() * d.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    const Matrix z = xc * m.whitening.transpose();

    const auto labels = simgen::segment_labels(static_cast<int>(N), num_segments);
    std::vector<Matrix> covs(static_cast<std::size_t>(num_segments), Matrix::Zero(n, n));
    std::vector<double> counts(static_cast<std::size_t>(num_segments), 0.0);
    for (Eigen::Index t = 0; t < N; ++t) {
        const auto k = static_cast<std::size_t>(labels[static_cast<std::size_t>(t)]);
        covs[k].noalias() += z.row(t).transpose() * z.row(t);
        counts[k] += 1.0;
    }
    for (std::size_t k = 0; k < covs.size(); ++k) covs[k] /= counts[k];
    const std::vector<Matrix> original = covs;

    Matrix v = Matrix::Identity(n, n);
    res.objective.push_back(offdiag_objective(covs, Matrix::Identity(n, n)));
    for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
        double largest = 0.0;
        for (Eigen::Index p = 0; p + 1 < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
                for (const auto& c : covs) {
                    const Eigen::Vector2d h(c(p, p) - c(q, q), c(p, q) + c(q, p));
                    g += h * h.transpose();
                }
                const double ton = g(0, 0) - g(1, 1);
                const double toff = g(0, 1) + g(1, 0);
                const double theta = 0.5 * std::atan2(toff, ton + std::hypot(ton, toff));
                largest = std::max(largest, std::abs(theta));
                if (std::abs(theta) < config.angle_tol) continue;
                const double cs = std::cos(theta), sn = std::sin(theta);
                for (auto& c : covs) {
                    const Eigen::RowVectorXd rp = c.row(p), rq = c.row(q);
                    c.row(p) = cs * rp + sn * rq;
                    c.row(q) = -sn * rp + cs * rq;
                    const Vector cp = c.col(p), cq = c.col(q);
                    c.col(p) = cs * cp + sn * cq;
                    c.col(q) = -sn * cp + cs * cq;
                }
                const Vector vp = v.col(p), vq = v.col(q);
                v.col(p) = cs * vp + sn * vq;
                v.col(q) = -sn * vp + cs * vq;
            }
        ++res.sweeps;
        res.objective.push_back(offdiag_objective(original, v.transpose()));
        if (largest < config.angle_tol) break;
    }
    m.rotation = v.transpose();
    res.sources = z * v;
    return res;
}

Matrix nsvica_apply(const NsvicaModel& model, const Matrix& series) {
    require(series.cols() == model.whitening.cols(), "nsvica_apply: width mismatch");
    return (series.rowwise() - model.mean.transpose()) * model.unmixing().transpose();
}

namespace {

Matrix past_inputs(const Matrix& x, int order) { return stack_lags(x, order, 1, order); }

}  // namespace

AdnvarFit train_adnvar(const Matrix& x, const AdnvarConfig& config) {
    require(config.order >= 1 && config.layers >= 1, "train_adnvar: order and layers must be >= 1");
    require(x.rows() >= config.order + 2, "train_adnvar: series too short");
    const int n = static_cast<int>(x.cols());
    const int p = config.order;

    const StandardScaler sc = StandardScaler::fit(x);
    const Matrix z = sc.apply(x);
    const Matrix inputs = past_inputs(z, p);
    const Matrix targets = z.bottomRows(x.rows() - p);

    std::vector<int> dims{p * n};
    for (int l = 1; l < config.layers; ++l) dims.push_back(config.hidden_factor * n);
    dims.push_back(n);
    AdnvarFit fit;
    fit.predictor = nnet::mlp_init(dims, config.activation, derive_seed(config.train.seed, 1));
    const RegressionResult rr = fit_mse(fit.predictor, inputs, targets, config.train);
    fit.log = rr.log;

    // back to raw units on both ends
    nnet::fold_input_normalization(fit.predictor, sc.mean.replicate(p, 1), sc.scale.replicate(p, 1));
    fit.predictor.weights.back() = sc.scale.asDiagonal() * fit.predictor.weights.back();
    fit.predictor.biases.back() = sc.scale.cwiseProduct(fit.predictor.biases.back()) + sc.mean;

    const Matrix r = adnvar_residuals(fit.predictor, x, p);
    fit.final_mse = r.squaredNorm() / static_cast<double>(r.size());
    return fit;
}

Matrix adnvar_residuals(const nnet::MlpParams& predictor, const Matrix& x, int order) {
    require(order >= 1 && x.rows() > order, "adnvar_residuals: series shorter than the order");
    require(predictor.input_dim() == order * x.cols() && predictor.output_dim() == x.cols(),
            "adnvar_residuals: predictor width mismatch");
    return x.bottomRows(x.rows() - order) - nnet::mlp_apply(predictor, past_inputs(x, order));
}

AdnvarResult run_adnvar(const Matrix& x, const AdnvarConfig& config) {
    AdnvarResult res;
    res.fit = train_adnvar(x, config);
    res.model.predictor = res.fit.predictor;
    res.model.order = config.order;
    const Matrix r = adnvar_residuals(res.model.predictor, x, config.order);
    NsvicaResult ica = nsvica(r, config.num_segments);
    res.model.unmixing = ica.model;
    res.sources = std::move(ica.sources);
    return res;
}

Matrix adnvar_sources(const AdnvarModel& model, const Matrix& x) {
    return nsvica_apply(model.unmixing, adnvar_residuals(model.predictor, x, model.order));
}

void to_json(nlohmann::json& j, const NsvicaModel& m) {
    j = nlohmann::json{{"kind", "nsvica"},
                       {"num_segments", m.num_segments},
                       {"mean", vector_to_json(m.mean)},
                       {"whitening", matrix_to_json(m.whitening)},
                       {"rotation", matrix_to_json(m.rotation)}};
}

void from_json(const nlohmann::json& j, NsvicaModel& m) {
    m.num_segments = j.at("num_segments").get<int>();
    m.mean = vector_from_json(j.at("mean"));
    m.whitening = matrix_from_json(j.at("whitening"));
    m.rotation = matrix_from_json(j.at("rotation"));
    const auto n = m.mean.size();
    require(m.whitening.rows() == n && m.whitening.cols() == n && m.rotation.rows() == n && m.rotation.cols() == n,
            "NsvicaModel json: shape mismatch");
}

void to_json(nlohmann::json& j, const AdnvarModel& m) {
    j = nlohmann::json{{"kind", "adnvar"}, {"order", m.order}, {"predictor", m.predictor}, {"unmixing", m.unmixing}};
}

void from_json(const nlohmann::json& j, AdnvarModel& m) {
    m.order = j.at("order").get<int>();
    m.predictor = j.at("predictor").get<nnet::MlpParams>();
    m.unmixing = j.at("unmixing").get<NsvicaModel>();
    require(m.predictor.input_dim() == m.order * m.predictor.output_dim(), "AdnvarModel json: predictor width");
}

}  // namespace iia::baselines
