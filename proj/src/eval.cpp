#include "iia/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace iia::eval {

namespace {

Matrix align_truth(const Matrix& s_true, const Matrix& s_hat) {
    require(s_true.cols() == s_hat.cols(), "correlation_matrix: component count mismatch");
    require(s_true.rows() >= s_hat.rows(), "correlation_matrix: estimate longer than truth");
    require(s_hat.rows() >= 3, "correlation_matrix: need at least 3 points");
    return s_true.bottomRows(s_hat.rows());
}

Matrix pearson(const Matrix& a, const Matrix& b) {
    const Matrix ac = a.rowwise() - a.colwise().mean();
    const Matrix bc = b.rowwise() - b.colwise().mean();
    const Vector na = ac.colwise().norm().transpose();
    const Vector nb = bc.colwise().norm().transpose();
    Matrix corr = ac.transpose() * bc;
    for (Eigen::Index i = 0; i < corr.rows(); ++i)
        for (Eigen::Index j = 0; j < corr.cols(); ++j) {
            const double denom = na[i] * nb[j];
            corr(i, j) = denom > 0.0 ? std::clamp(corr(i, j) / denom, -1.0, 1.0) : 0.0;
        }
    return corr;
}

Matrix ranks(const Matrix& m) {
    Matrix r(m.rows(), m.cols());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return m(a, c) < m(b, c); });
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && m(idx[j + 1], c) == m(idx[i], c)) ++j;
            const double avg = 0.5 * static_cast<double>(i + j);
            for (std::size_t k = i; k <= j; ++k) r(idx[k], c) = avg;
            i = j + 1;
        }
    }
    return r;
}

}  // namespace

Matrix correlation_matrix(const Matrix& s_true, const Matrix& s_hat) {
    return pearson(align_truth(s_true, s_hat), s_hat);
}

Matrix spearman_matrix(const Matrix& s_true, const Matrix& s_hat) {
    return pearson(ranks(align_truth(s_true, s_hat)), ranks(s_hat));
}

std::vector<int> max_weight_assignment(const Matrix& score) {
    require(score.rows() == score.cols(), "max_weight_assignment: score matrix must be square");
    const int n = static_cast<int>(score.rows());
    if (n == 0) return {};
    // Shortest augmenting path formulation on cost = -score, 1-based potentials.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> perm(n, -1);
    for (int j = 1; j <= n; ++j) perm[match[j] - 1] = j - 1;
    return perm;
}

std::vector<int> match_components(const Matrix& corr) {
    require(corr.allFinite(), "match_components: non-finite correlation");
    return max_weight_assignment(corr.cwiseAbs());
}

double mcc(const Matrix& corr, const std::vector<int>& perm) {
    require(static_cast<Eigen::Index>(perm.size()) == corr.rows() && corr.rows() == corr.cols(),
            "mcc: permutation size mismatch");
    if (perm.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) total += std::abs(corr(static_cast<Eigen::Index>(i), perm[i]));
    return total / static_cast<double>(perm.size());
}

EvalReport evaluate(const Matrix& s_true, const Matrix& s_hat) {
    EvalReport r;
    r.corr = correlation_matrix(s_true, s_hat);
    r.perm = match_components(r.corr);
    r.mcc = mcc(r.corr, r.perm);
    const Matrix sp = spearman_matrix(s_true, s_hat);
    r.mcc_spearman = mcc(sp, match_components(sp));
    r.length = s_hat.rows();
    return r;
}

double state_accuracy(const std::vector<int>& truth, const std::vector<int>& estimate, int num_states) {
    require(truth.size() >= estimate.size() && !estimate.empty(), "state_accuracy: length mismatch");
    const std::size_t offset = truth.size() - estimate.size();
    Matrix confusion = Matrix::Zero(num_states, num_states);
    for (std::size_t t = 0; t < estimate.size(); ++t) {
        const int a = truth[t + offset], b = estimate[t];
        require(a >= 0 && a < num_states && b >= 0 && b < num_states, "state_accuracy: state out of range");
        confusion(a, b) += 1.0;
    }
    const auto perm = max_weight_assignment(confusion);
    double hits = 0.0;
    for (int c = 0; c < num_states; ++c) hits += confusion(c, perm[c]);
    return hits / static_cast<double>(estimate.size());
}

VariabilityReport variability_check(const Matrix& lambda_samples) {
    require(lambda_samples.cols() >= 2, "variability_check: need at least two auxiliary points");
    VariabilityReport r;
    const Eigen::Index nk = lambda_samples.rows();
    r.l_matrix = lambda_samples.rightCols(lambda_samples.cols() - 1).colwise() - lambda_samples.col(0);
    Eigen::JacobiSVD<Matrix> svd(r.l_matrix);
    const Vector sv = svd.singularValues();
    r.largest_singular = sv.size() > 0 ? sv[0] : 0.0;
    r.smallest_singular = sv.size() > 0 ? sv[sv.size() - 1] : 0.0;
    const double threshold = 1e-8 * r.largest_singular;
    r.rank = 0;
    if (r.largest_singular > 0.0)
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > threshold) ++r.rank;
    r.pass = r.rank == nk;
    return r;
}

ForwardFitResult fit_forward_model(const Matrix& x, const Matrix& s_hat, const ForwardFitConfig& config) {
    require(x.cols() == s_hat.cols(), "fit_forward_model: width mismatch");
    require(s_hat.rows() >= 2 && x.rows() > s_hat.rows(), "fit_forward_model: s_hat must be shorter than x");
    require(config.layers >= 1, "fit_forward_model: need at least one layer");
    const Eigen::Index n = x.cols();
    const Eigen::Index m = s_hat.rows();
    const Eigen::Index offset = x.rows() - m;

    Matrix inputs(m, 2 * n);
    inputs.leftCols(n) = x.middleRows(offset - 1, m);
    inputs.rightCols(n) = s_hat;
    const Matrix targets = x.bottomRows(m);

    const Eigen::Index holdout = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(config.holdout_fraction * m)));
    require(holdout < m, "fit_forward_model: holdout consumes all samples");
    const Eigen::Index fit_rows = m - holdout;

    const StandardScaler scaler = StandardScaler::fit(inputs.topRows(fit_rows));
    std::vector<int> dims{static_cast<int>(2 * n)};
    for (int l = 1; l < config.layers; ++l) dims.push_back(static_cast<int>(config.hidden_factor * n));
    dims.push_back(static_cast<int>(n));
    ForwardFitResult res;
    res.net = nnet::mlp_init(dims, nnet::Activation::maxout(), config.train.seed);
    res.net.weights.back().setZero();

    if (config.train.epochs > 0)
        fit_mse(res.net, scaler.apply(inputs.topRows(fit_rows)), targets.topRows(fit_rows), config.train);
    nnet::fold_input_normalization(res.net, scaler.mean, scaler.scale);

    const Matrix pred = nnet::mlp_apply(res.net, inputs.bottomRows(holdout));
    const Matrix truth = targets.bottomRows(holdout);
    res.r2.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sse = (pred.col(i) - truth.col(i)).squaredNorm();
        const double sst = (truth.col(i).array() - truth.col(i).mean()).square().sum();
        res.r2[i] = sst > 0.0 ? 1.0 - sse / sst : 0.0;
    }
    res.mean_r2 = res.r2.mean();
    return res;
}

}  // namespace iia::eval
