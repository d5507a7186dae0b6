#include "iia/hmm.hpp"

#include "iia/contrastive.hpp"
#include "iia/jsonio.hpp"
#include "iia/simgen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace iia::hmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kVarFloor = 1e-6;
const double kLogDetFloor = std::log(1e-300);

std::vector<int> xt_columns(int n) {
    std::vector<int> cols(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) cols[static_cast<std::size_t>(i)] = i;
    return cols;
}

void check_lagged(const nnet::MlpParams& h, const Matrix& lagged) {
    require(lagged.cols() == h.input_dim(), "hmm: input width does not match the demixing net");
    require(h.input_dim() % h.output_dim() == 0, "hmm: demixing net input must stack whole lags");
}

// log|det| of each n x n block of a d x (B*n) Jacobian stack, -inf below
// 1e-300. With `inv_t` the transposed inverses (scaled by weights) are
// written back in the same layout; blocks with zero weight are skipped.
template <int N>
void blocks_fixed(const Matrix& jac, Vector& logdet, const Vector* weights, Matrix* inv_t) {
    using Sq = Eigen::Matrix<double, N, N>;
    Eigen::PartialPivLU<Sq> lu;
    for (Eigen::Index b = 0; b < logdet.size(); ++b) {
        if (weights && (*weights)[b] == 0.0) {
            logdet[b] = 0.0;
            continue;
        }
        const Sq j = jac.middleCols<N>(b * N);
        lu.compute(j);
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += std::log(std::abs(lu.matrixLU()(i, i)));
        logdet[b] = s < kLogDetFloor ? kNegInf : s;
        if (inv_t && logdet[b] != kNegInf) inv_t->middleCols<N>(b * N) = (*weights)[b] * lu.inverse().transpose();
    }
}

void blocks_dynamic(const Matrix& jac, Eigen::Index n, Vector& logdet, const Vector* weights, Matrix* inv_t) {
    Eigen::PartialPivLU<Matrix> lu(n);
    for (Eigen::Index b = 0; b < logdet.size(); ++b) {
        if (weights && (*weights)[b] == 0.0) {
            logdet[b] = 0.0;
            continue;
        }
        lu.compute(jac.middleCols(b * n, n));
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += std::log(std::abs(lu.matrixLU()(i, i)));
        logdet[b] = s < kLogDetFloor ? kNegInf : s;
        if (inv_t && logdet[b] != kNegInf) inv_t->middleCols(b * n, n) = (*weights)[b] * lu.inverse().transpose();
    }
}

Vector jacobian_blocks(const nnet::JacobianChain& chain, const Vector* weights, Matrix* inv_t) {
    const Eigen::Index n = chain.subset_size();
    const Matrix& jac = chain.jacobians();
    Vector logdet(chain.batch_size());
    if (inv_t) *inv_t = Matrix::Zero(n, chain.batch_size() * n);
    switch (n) {
        case 1: blocks_fixed<1>(jac, logdet, weights, inv_t); break;
        case 2: blocks_fixed<2>(jac, logdet, weights, inv_t); break;
        case 3: blocks_fixed<3>(jac, logdet, weights, inv_t); break;
        case 4: blocks_fixed<4>(jac, logdet, weights, inv_t); break;
        case 5: blocks_fixed<5>(jac, logdet, weights, inv_t); break;
        default: blocks_dynamic(jac, n, logdet, weights, inv_t);
    }
    return logdet;
}

Vector chain_logdet(const nnet::JacobianChain& chain, long* singular) {
    Vector out = jacobian_blocks(chain, nullptr, nullptr);
    if (singular) *singular += (out.array() == kNegInf).count();
    return out;
}

// M x C Gaussian log densities of the rows of s.
Matrix gaussian_loglik(const Matrix& s, const Matrix& means, const Matrix& vars) {
    const Eigen::Index C = means.rows();
    Matrix out(s.rows(), C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const double norm = (2.0 * std::numbers::pi * vars.row(c).array()).log().sum();
        const Eigen::RowVectorXd inv = vars.row(c).array().inverse();
        const Matrix d = s.rowwise() - means.row(c);
        out.col(c) = -0.5 * ((d.array().square().rowwise() * inv.array()).rowwise().sum() + norm);
    }
    return out;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
    const double mx = v.maxCoeff();
    if (mx == kNegInf) return kNegInf;
    return mx + std::log((v.array() - mx).exp().sum());
}

Matrix stationary_variance(const Matrix& s) {
    const Eigen::RowVectorXd mean = s.colwise().mean();
    Eigen::RowVectorXd var = (s.rowwise() - mean).array().square().colwise().mean();
    return var.cwiseMax(kVarFloor);
}

}  // namespace

void HmmModel::validate() const {
    h.validate();
    const Eigen::Index C = transition.rows();
    const Eigen::Index n = h.output_dim();
    require(C >= 1 && transition.cols() == C, "HmmModel: transition must be square");
    require(initial.size() == C, "HmmModel: initial distribution size");
    require(means.rows() == C && means.cols() == n, "HmmModel: means shape");
    require(variances.rows() == C && variances.cols() == n, "HmmModel: variances shape");
    require(order >= 1 && h.input_dim() == (order + 1) * n, "HmmModel: demixing net input width");
    require((transition.array() >= 0.0).all(), "HmmModel: negative transition probability");
    require(((transition.rowwise().sum().array() - 1.0).abs() < 1e-9).all(), "HmmModel: transition rows must sum to 1");
    require((initial.array() >= 0.0).all() && std::abs(initial.sum() - 1.0) < 1e-9,
            "HmmModel: initial distribution must be a simplex vector");
    require((variances.array() > 0.0).all(), "HmmModel: variances must be positive");
}

Vector jacobian_logdet(const nnet::MlpParams& h, const Matrix& lagged, long* singular) {
    check_lagged(h, lagged);
    const nnet::JacobianChain chain(h, lagged, xt_columns(h.output_dim()));
    return chain_logdet(chain, singular);
}

nnet::MlpGrads jacobian_logdet_grad(const nnet::MlpParams& h, const Matrix& lagged, const Vector& weights) {
    check_lagged(h, lagged);
    require(weights.size() == lagged.rows(), "jacobian_logdet_grad: one weight per row");
    const nnet::JacobianChain chain(h, lagged, xt_columns(h.output_dim()));
    Matrix adj;
    const Vector logdet = jacobian_blocks(chain, &weights, &adj);
    if ((logdet.array() == kNegInf).any()) throw NumericError("jacobian_logdet_grad: singular Jacobian");
    return chain.backward(adj, Matrix());
}

Matrix emission_loglik(const HmmModel& model, const Matrix& lagged, long* singular) {
    check_lagged(model.h, lagged);
    const nnet::JacobianChain chain(model.h, lagged, xt_columns(model.dim()));
    Matrix out = gaussian_loglik(chain.output(), model.means, model.variances);
    out.colwise() += chain_logdet(chain, singular);
    return out;
}

double emission_loglik(const HmmModel& model, const Vector& row, int state) {
    require(state >= 0 && state < model.num_states(), "emission_loglik: state out of range");
    return emission_loglik(model, Matrix(row.transpose()))(0, state);
}

Posteriors forward_backward(const Matrix& log_emissions, const Matrix& transition, const Vector& initial) {
    const Eigen::Index N = log_emissions.rows();
    const Eigen::Index C = log_emissions.cols();
    require(N >= 1, "forward_backward: empty series");
    require(transition.rows() == C && transition.cols() == C && initial.size() == C,
            "forward_backward: state count mismatch");
    // time along columns so each step touches contiguous memory
    const Matrix e = log_emissions.transpose();
    for (Eigen::Index t = 0; t < N; ++t)
        if (e.col(t).maxCoeff() == kNegInf)
            throw NumericError("forward_backward: no state explains point " + std::to_string(t));

    const Matrix at = transition.transpose();
    Matrix alpha(C, N);
    Vector p(C), q(C);
    alpha.col(0) = initial.array().log() + e.col(0).array();
    for (Eigen::Index t = 1; t < N; ++t) {
        const double mx = alpha.col(t - 1).maxCoeff();
        if (mx == kNegInf) throw NumericError("forward_backward: zero probability at point " + std::to_string(t - 1));
        p = (alpha.col(t - 1).array() - mx).exp();
        q.noalias() = at * p;
        alpha.col(t) = mx + q.array().log() + e.col(t).array();
    }
    Posteriors post;
    post.loglik = log_sum_exp(alpha.col(N - 1).transpose());
    if (!std::isfinite(post.loglik)) throw NumericError("forward_backward: zero likelihood");

    // beta plus the emission of the same point, kept for the xi pass
    Matrix be(C, N);
    Matrix beta(C, N);
    beta.col(N - 1).setZero();
    be.col(N - 1) = e.col(N - 1);
    for (Eigen::Index t = N - 2; t >= 0; --t) {
        const double mx = be.col(t + 1).maxCoeff();
        p = (be.col(t + 1).array() - mx).exp();
        q.noalias() = transition * p;
        beta.col(t) = mx + q.array().log();
        be.col(t) = beta.col(t) + e.col(t);
    }

    Matrix g = (alpha + beta).array() - post.loglik;
    g = g.array().exp();
    for (Eigen::Index t = 0; t < N; ++t) g.col(t) /= g.col(t).sum();
    post.gamma = g.transpose();

    // xi_t(i,j) is proportional to exp(alpha_t(i)) A_ij exp(e_{t+1}(j) + beta_{t+1}(j))
    Matrix xi(C * C, std::max<Eigen::Index>(N - 1, 0));
    Vector u(C), v(C);
    for (Eigen::Index t = 0; t + 1 < N; ++t) {
        u = (alpha.col(t).array() - alpha.col(t).maxCoeff()).exp();
        v = (be.col(t + 1).array() - be.col(t + 1).maxCoeff()).exp();
        double total = 0.0;
        for (Eigen::Index i = 0; i < C; ++i)
            for (Eigen::Index j = 0; j < C; ++j) {
                const double w = u[i] * transition(i, j) * v[j];
                xi(i * C + j, t) = w;
                total += w;
            }
        xi.col(t) /= total;
    }
    post.xi = xi.transpose();
    return post;
}

std::vector<int> viterbi(const Matrix& log_emissions, const Matrix& transition, const Vector& initial) {
    const Eigen::Index N = log_emissions.rows();
    const Eigen::Index C = log_emissions.cols();
    require(N >= 1, "viterbi: empty series");
    require(transition.rows() == C && transition.cols() == C && initial.size() == C, "viterbi: state count mismatch");
    const Matrix log_a = transition.array().log();
    Matrix delta(N, C);
    Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic> back(N, C);
    delta.row(0) = initial.transpose().array().log() + log_emissions.row(0).array();
    for (Eigen::Index t = 1; t < N; ++t)
        for (Eigen::Index j = 0; j < C; ++j) {
            Eigen::Index arg = 0;
            const double best = (delta.row(t - 1).transpose() + log_a.col(j)).maxCoeff(&arg);
            delta(t, j) = best + log_emissions(t, j);
            back(t, j) = static_cast<int>(arg);
        }
    std::vector<int> path(static_cast<std::size_t>(N));
    Eigen::Index last = 0;
    delta.row(N - 1).maxCoeff(&last);
    path.back() = static_cast<int>(last);
    for (Eigen::Index t = N - 1; t > 0; --t)
        path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
    return path;
}

int m_step_discrete(HmmModel& model, const Posteriors& post, const Matrix& s_hat, std::uint64_t seed) {
    const Eigen::Index C = model.num_states();
    const Eigen::Index N = post.gamma.rows();
    require(post.gamma.cols() == C, "m_step_discrete: state count mismatch");
    require(s_hat.rows() == N && s_hat.cols() == model.means.cols(), "m_step_discrete: s_hat shape");
    require(post.xi.rows() == std::max<Eigen::Index>(N - 1, 0) && (N < 2 || post.xi.cols() == C * C),
            "m_step_discrete: xi shape");

    model.initial = post.gamma.row(0).transpose();
    model.initial /= model.initial.sum();

    if (N > 1) {
        const Eigen::RowVectorXd counts = post.xi.colwise().sum();
        for (Eigen::Index i = 0; i < C; ++i) {
            const Eigen::RowVectorXd row = counts.segment(i * C, C);
            const double total = row.sum();
            if (total > 0.0) model.transition.row(i) = row / total;
        }
    }

    Rng rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
    const Eigen::RowVectorXd fallback_var = stationary_variance(s_hat);
    int reseeded = 0;
    for (Eigen::Index c = 0; c < C; ++c) {
        const double weight = post.gamma.col(c).sum();
        if (weight < 1e-8) {
            model.means.row(c) = s_hat.row(pick(rng));
            model.variances.row(c) = fallback_var;
            ++reseeded;
            continue;
        }
        const Eigen::RowVectorXd mean = (post.gamma.col(c).transpose() * s_hat) / weight;
        const Matrix d = s_hat.rowwise() - mean;
        const Eigen::RowVectorXd var = (post.gamma.col(c).transpose() * d.array().square().matrix()) / weight;
        model.means.row(c) = mean;
        model.variances.row(c) = var.cwiseMax(kVarFloor);
    }
    return reseeded;
}

double q_network(const HmmModel& model, const Matrix& lagged, const Matrix& gamma, nnet::MlpGrads* grad) {
    check_lagged(model.h, lagged);
    require(gamma.rows() == lagged.rows() && gamma.cols() == model.num_states(), "q_network: gamma shape");
    const int n = model.dim();
    const Eigen::Index M = lagged.rows();
    const nnet::JacobianChain chain(model.h, lagged, xt_columns(n));
    const Vector w = gamma.rowwise().sum();
    Matrix jac_adj;
    const Vector logdet = jacobian_blocks(chain, &w, grad ? &jac_adj : nullptr);
    if ((logdet.array() == kNegInf).any()) return kNegInf;

    const Matrix ll = gaussian_loglik(chain.output(), model.means, model.variances);
    const double M_d = static_cast<double>(M);
    const double q = ((gamma.array() * ll.array()).sum() + w.dot(logdet)) / M_d;
    if (!grad) return q;

    const Matrix& hs = chain.output();
    Matrix out_adj = Matrix::Zero(M, n);
    for (Eigen::Index c = 0; c < model.num_states(); ++c) {
        const Eigen::RowVectorXd inv = model.variances.row(c).array().inverse();
        const Matrix d = (hs.rowwise() - model.means.row(c)).array().rowwise() * inv.array();
        out_adj -= (d.array().colwise() * gamma.col(c).array()).matrix();
    }
    *grad = chain.backward(jac_adj / M_d, out_adj / M_d);
    return q;
}

namespace {

Vector flatten(nnet::MlpParams& h) {
    const auto views = nnet::param_views(h);
    std::size_t total = 0;
    for (const auto& v : views) total += v.size();
    Vector out(static_cast<Eigen::Index>(total));
    Eigen::Index k = 0;
    for (const auto& v : views)
        for (double d : v) out[k++] = d;
    return out;
}

Vector flatten(nnet::MlpGrads& g) {
    const auto views = nnet::param_views(g);
    std::size_t total = 0;
    for (const auto& v : views) total += v.size();
    Vector out(static_cast<Eigen::Index>(total));
    Eigen::Index k = 0;
    for (const auto& v : views)
        for (double d : v) out[k++] = d;
    return out;
}

void unflatten(const Vector& theta, nnet::MlpParams& h) {
    Eigen::Index k = 0;
    for (auto& v : nnet::param_views(h))
        for (double& d : v) d = theta[k++];
}

}  // namespace

NetStepResult m_step_network(HmmModel& model, const Matrix& lagged, const Matrix& gamma,
                             const NetStepConfig& config, double& step_size) {
    // L-BFGS ascent on Q; every accepted point has Q >= the previous one.
    constexpr int kMemory = 10;
    NetStepResult res;
    nnet::MlpGrads gm;
    double q = q_network(model, lagged, gamma, &gm);
    res.q_before = res.q_after = q;
    if (!std::isfinite(q)) return res;

    Vector theta = flatten(model.h);
    Vector g = flatten(gm);  // ascent direction of Q
    std::vector<Vector> ss, ys;
    std::vector<double> rho;

    for (int s = 0; s < config.steps; ++s) {
        if (g.squaredNorm() == 0.0) break;
        Vector d;
        bool quasi = !ss.empty();
        if (quasi) {
            // two-loop recursion on f = -Q, whose gradient is -g
            Vector r = g;
            std::vector<double> alpha(ss.size());
            for (std::size_t i = ss.size(); i-- > 0;) {
                alpha[i] = rho[i] * ss[i].dot(r);
                r -= alpha[i] * ys[i];
            }
            r *= ss.back().dot(ys.back()) / ys.back().squaredNorm();
            for (std::size_t i = 0; i < ss.size(); ++i) r += (alpha[i] - rho[i] * ys[i].dot(r)) * ss[i];
            d = r;
            if (d.dot(g) <= 0.0) quasi = false;
        }
        if (!quasi) {
            ss.clear();
            ys.clear();
            rho.clear();
            d = step_size * g;
        }

        bool taken = false;
        double t = 1.0;
        Vector theta_new, g_new;
        for (int k = 0; k <= config.max_halvings; ++k, t *= 0.5) {
            theta_new = theta + t * d;
            unflatten(theta_new, model.h);
            nnet::MlpGrads gn;
            const double q_new = q_network(model, lagged, gamma, &gn);
            if (std::isfinite(q_new) && q_new >= q) {
                q = q_new;
                g_new = flatten(gn);
                taken = true;
                break;
            }
        }
        if (!taken) {
            unflatten(theta, model.h);
            if (!quasi) step_size = std::max(t * step_size, 1e-12);
            break;
        }
        ++res.accepted;
        if (!quasi) step_size = std::min(2.0 * t * step_size, config.max_step_size);

        const Vector sv = theta_new - theta;
        const Vector yv = g - g_new;  // gradient change of -Q
        const double sy = sv.dot(yv);
        if (sy > 1e-12 * sv.norm() * yv.norm()) {
            if (static_cast<int>(ss.size()) == kMemory) {
                ss.erase(ss.begin());
                ys.erase(ys.begin());
                rho.erase(rho.begin());
            }
            ss.push_back(sv);
            ys.push_back(yv);
            rho.push_back(1.0 / sy);
        }
        theta = std::move(theta_new);
        g = std::move(g_new);
    }
    res.q_after = q;
    return res;
}

std::uint64_t restart_seed(std::uint64_t seed, int restart) {
    return derive_seed(seed, 5000 + static_cast<std::uint64_t>(restart));
}

EmResult train_hmm_restart(const Matrix& x, int num_states, const EmConfig& config, int restart) {
    require(num_states >= 1, "train_hmm_em: need at least one state");
    require(config.layers >= 1 && config.order >= 1, "train_hmm_em: layers and order must be >= 1");
    require(config.stay > 0.0 && config.stay <= 1.0, "train_hmm_em: stay must lie in (0, 1]");
    const int n = static_cast<int>(x.cols());
    const int C = num_states;
    const Matrix lagged = contrastive::lagged_inputs(x, config.order);
    const Eigen::Index M = lagged.rows();
    require(M > 2 * C, "train_hmm_em: series too short for the state count");
    const std::uint64_t rs = restart_seed(config.seed, restart);

    EmResult out;
    out.restart_seed = rs;
    out.best_restart = restart;
    HmmModel& model = out.model;
    model.order = config.order;

    if (config.tcl_epochs > 0) {
        contrastive::TclConfig tc;
        tc.features.layers = config.layers;
        tc.features.hidden_factor = config.hidden_factor;
        tc.features.activation = nnet::Activation::smooth_leaky_relu(config.leak);
        tc.features.order = config.order;
        tc.train.epochs = config.tcl_epochs;
        tc.train.learning_rate = config.tcl_learning_rate;
        tc.train.seed = derive_seed(rs, 1);
        const int segments = std::max(2, static_cast<int>(x.rows()) / config.tcl_segment_length);
        model.h = contrastive::train_tcl(x, simgen::segment_labels(static_cast<int>(x.rows()), segments), tc)
                      .model.nets.h;
    } else {
        std::vector<int> dims{(config.order + 1) * n};
        for (int l = 1; l < config.layers; ++l) dims.push_back(config.hidden_factor * n);
        dims.push_back(n);
        model.h = nnet::mlp_init(dims, nnet::Activation::smooth_leaky_relu(config.leak), derive_seed(rs, 1));
    }

    model.transition = Matrix::Constant(C, C, C > 1 ? (1.0 - config.stay) / (C - 1) : 0.0);
    model.transition.diagonal().setConstant(C > 1 ? config.stay : 1.0);
    model.initial = Vector::Constant(C, 1.0 / C);
    Matrix s_hat = nnet::mlp_apply(model.h, lagged);
    {
        Rng rng(derive_seed(rs, 2));
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(M));
        for (Eigen::Index i = 0; i < M; ++i) rows[static_cast<std::size_t>(i)] = i;
        std::shuffle(rows.begin(), rows.end(), rng);
        model.means.resize(C, n);
        for (int c = 0; c < C; ++c) model.means.row(c) = s_hat.row(rows[static_cast<std::size_t>(c)]);
        model.variances = stationary_variance(s_hat).replicate(C, 1);
    }

    double step = config.net.step_size;
    double prev = kNegInf;
    for (int iter = 0; iter < config.max_iters; ++iter) {
        const Posteriors post = forward_backward(emission_loglik(model, lagged, &out.singular_jacobians),
                                                 model.transition, model.initial);
        EmLogRow row;
        row.restart = restart;
        row.iter = iter;
        row.loglik = post.loglik;
        row.q = std::numeric_limits<double>::quiet_NaN();
        out.final_loglik = post.loglik;
        const bool converged = iter > 0 && (post.loglik - prev) / static_cast<double>(M) < config.tol;
        if (converged || iter + 1 == config.max_iters) {
            out.log.push_back(row);
            break;
        }
        prev = post.loglik;
        s_hat = nnet::mlp_apply(model.h, lagged);
        out.reseeded_states += m_step_discrete(model, post, s_hat, derive_seed(rs, 100 + iter));
        const NetStepResult ns = m_step_network(model, lagged, post.gamma, config.net, step);
        row.q = ns.q_after;
        row.accepted_net_step = ns.accepted;
        out.log.push_back(row);
    }
    out.restart_loglik = {out.final_loglik};
    return out;
}

EmResult train_hmm_em(const Matrix& x, int num_states, const EmConfig& config) {
    require(config.restarts >= 1, "train_hmm_em: need at least one restart");
    EmResult best;
    bool have = false;
    std::vector<EmLogRow> log;
    std::vector<double> lls;
    int reseeded = 0;
    long singular = 0;
    for (int r = 0; r < config.restarts; ++r) {
        try {
            EmResult cur = train_hmm_restart(x, num_states, config, r);
            log.insert(log.end(), cur.log.begin(), cur.log.end());
            lls.push_back(cur.final_loglik);
            reseeded += cur.reseeded_states;
            singular += cur.singular_jacobians;
            if (!have || cur.final_loglik > best.final_loglik) {
                best = std::move(cur);
                have = true;
            }
        } catch (const NumericError&) {
            lls.push_back(kNegInf);
        } catch (const DivergenceError&) {
            lls.push_back(kNegInf);
        }
    }
    if (!have) throw DivergenceError("train_hmm_em: all restarts diverged");
    best.log = std::move(log);
    best.restart_loglik = std::move(lls);
    best.reseeded_states = reseeded;
    best.singular_jacobians = singular;
    return best;
}

Matrix extract_innovations(const HmmModel& model, const Matrix& x) {
    return nnet::mlp_apply(model.h, contrastive::lagged_inputs(x, model.order));
}

std::vector<int> decode_states(const HmmModel& model, const Matrix& x) {
    const Matrix lagged = contrastive::lagged_inputs(x, model.order);
    return viterbi(emission_loglik(model, lagged), model.transition, model.initial);
}

void to_json(nlohmann::json& j, const HmmModel& m) {
    j = nlohmann::json{{"kind", "hmm"},
                       {"C", m.num_states()},
                       {"n", m.dim()},
                       {"order", m.order},
                       {"h_net", m.h},
                       {"A", matrix_to_json(m.transition)},
                       {"pi", vector_to_json(m.initial)},
                       {"means", matrix_to_json(m.means)},
                       {"vars", matrix_to_json(m.variances)}};
}

void from_json(const nlohmann::json& j, HmmModel& m) {
    m.order = j.value("order", 1);
    m.h = j.at("h_net").get<nnet::MlpParams>();
    m.transition = matrix_from_json(j.at("A"));
    m.initial = vector_from_json(j.at("pi"));
    m.means = matrix_from_json(j.at("means"));
    m.variances = matrix_from_json(j.at("vars"));
    require(j.at("C").get<int>() == m.num_states(), "HmmModel json: C does not match A");
    m.validate();
}

nlohmann::json result_to_json(const EmResult& r) {
    nlohmann::json j = r.model;
    j["restart_seed"] = r.restart_seed;
    j["final_loglik"] = r.final_loglik;
    return j;
}

std::string em_log_csv(const std::vector<EmLogRow>& log) {
    std::ostringstream os;
    os.precision(12);
    os << "restart,iter,loglik,Q,accepted_net_step\n";
    for (const auto& r : log) {
        os << r.restart << ',' << r.iter << ',' << r.loglik << ',';
        if (std::isfinite(r.q)) os << r.q;
        os << ',' << r.accepted_net_step << '\n';
    }
    return os.str();
}

}  // namespace iia::hmm
