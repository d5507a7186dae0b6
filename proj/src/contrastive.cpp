#include "iia/contrastive.hpp"
#include "iia/jsonio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace iia::contrastive {

namespace {

constexpr Eigen::Index kEvalChunk = 8192;

Matrix tile(const Vector& v, int times) {
    Vector out(v.size() * times);
    for (int k = 0; k < times; ++k) out.segment(k * v.size(), v.size()) = v;
    return out;
}

// (y^2, y) columns.
Matrix stats(const Matrix& y) {
    Matrix q(y.rows(), 2 * y.cols());
    q.leftCols(y.cols()) = y.array().square();
    q.rightCols(y.cols()) = y;
    return q;
}

// d<G, stats(y)>/dy
Matrix stats_backward(const Matrix& y, const Matrix& g) {
    const Eigen::Index n = y.cols();
    return (2.0 * y.array() * g.leftCols(n).array() + g.rightCols(n).array()).matrix();
}

struct FeaturePass {
    nnet::MlpCache h;
    nnet::MlpCache phi;
};

Matrix h_input(const FeatureNets& f, const Matrix& lagged) {
    return f.nica ? Matrix(lagged.leftCols(f.n)) : lagged;
}

Matrix phi_input(const FeatureNets& f, const Matrix& lagged) {
    return lagged.rightCols(static_cast<Eigen::Index>(f.order) * f.n);
}

FeaturePass features_forward(const FeatureNets& f, const Matrix& lagged) {
    require(lagged.cols() == f.lagged_width(), "contrastive: input width mismatch");
    FeaturePass p;
    p.h = nnet::mlp_forward(f.h, h_input(f, lagged));
    if (!f.nica) p.phi = nnet::mlp_forward(f.phi, phi_input(f, lagged));
    return p;
}

void features_backward(const FeatureNets& f, const FeaturePass& pass, const Matrix& dh, const Matrix& dphi,
                       FeatureNets& grad) {
    auto bh = nnet::mlp_backward(f.h, pass.h, dh);
    grad.h.weights = std::move(bh.grads.weights);
    grad.h.biases = std::move(bh.grads.biases);
    if (!f.nica) {
        auto bp = nnet::mlp_backward(f.phi, pass.phi, dphi);
        grad.phi.weights = std::move(bp.grads.weights);
        grad.phi.biases = std::move(bp.grads.biases);
    }
}

void append_views(nnet::ParamViews& v, FeatureNets& f) {
    for (auto s : nnet::param_views(f.h)) v.push_back(s);
    if (!f.nica)
        for (auto s : nnet::param_views(f.phi)) v.push_back(s);
}

template <class Derived>
void append_view(nnet::ParamViews& v, Eigen::PlainObjectBase<Derived>& m) {
    if (m.size() > 0) v.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
}

void zero_nets(FeatureNets& f) {
    for (auto& w : f.h.weights) w.setZero();
    for (auto& b : f.h.biases) b.setZero();
    for (auto& w : f.phi.weights) w.setZero();
    for (auto& b : f.phi.biases) b.setZero();
}

double softplus(double r) { return r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)); }
double sigmoid(double r) {
    if (r >= 0.0) return 1.0 / (1.0 + std::exp(-r));
    const double e = std::exp(r);
    return e / (1.0 + e);
}

// Standardizes every lag block with the statistics of x_t and returns the
// scaler for folding.
StandardScaler standardize_lagged(const Matrix& lagged, int n, Matrix& out) {
    const StandardScaler s = StandardScaler::fit(lagged.leftCols(n));
    StandardScaler full{tile(s.mean, static_cast<int>(lagged.cols() / n)), tile(s.scale, static_cast<int>(lagged.cols() / n))};
    out = full.apply(lagged);
    return s;
}

void fold_features(FeatureNets& f, const StandardScaler& s) {
    const int h_blocks = f.nica ? 1 : f.order + 1;
    nnet::fold_input_normalization(f.h, tile(s.mean, h_blocks), tile(s.scale, h_blocks));
    if (!f.nica) nnet::fold_input_normalization(f.phi, tile(s.mean, f.order), tile(s.scale, f.order));
}

// Minibatch SGD with momentum over `count` samples split by the shared rule.
// batch(model, idx, grad) returns the mean loss and fills grad;
// evaluate(model, idx, &acc) returns the mean loss over idx.
template <class Model, class Batch, class Eval>
std::vector<EpochLog> run_sgd(Model& model, Eigen::Index count, const TrainConfig& cfg, Batch&& batch, Eval&& evaluate) {
    require(cfg.batch_size >= 1, "train: batch size must be >= 1");
    const Split split = make_split(count, cfg.validation_stride);
    require(!split.train.empty(), "train: no training samples");
    const bool has_val = !split.validation.empty();
    std::vector<Eigen::Index> order = split.train;
    Rng rng(derive_seed(cfg.seed, 3));
    nnet::OptState opt(cfg.learning_rate, cfg.momentum);
    Model grad = zeros_like(model);
    Model best = model;
    double best_val = std::numeric_limits<double>::infinity();
    long steps = 0;
    std::vector<EpochLog> log;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        Eigen::Index seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            if (cfg.max_steps > 0 && steps >= cfg.max_steps) break;
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const Eigen::Index> idx(order.data() + start, stop - start);
            const double loss = batch(model, idx, grad);
            if (!std::isfinite(loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss * static_cast<double>(idx.size());
            seen += static_cast<Eigen::Index>(idx.size());
            nnet::sgd_momentum_step(param_views(model), nnet::const_views(param_views(grad)), opt);
            ++steps;
        }
        EpochLog row;
        row.epoch = epoch;
        double acc = std::numeric_limits<double>::quiet_NaN();
        const auto& held = has_val ? split.validation : split.train;
        row.val_loss = evaluate(model, std::span<const Eigen::Index>(held), &acc);
        row.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : row.val_loss;
        row.accuracy = acc;
        log.push_back(row);
        if (!std::isfinite(row.val_loss))
            throw DivergenceError("train: non-finite validation loss at epoch " + std::to_string(epoch));
        if (row.val_loss < best_val) {
            best_val = row.val_loss;
            best = model;
        }
        opt.learning_rate *= cfg.lr_decay;
        if (cfg.max_steps > 0 && steps >= cfg.max_steps) break;
    }
    if (!log.empty()) model = std::move(best);
    return log;
}

}  // namespace

// ---------------------------------------------------------------------------

FeatureNets make_feature_nets(int n, const FeatureConfig& config, std::uint64_t seed) {
    require(n >= 1, "make_feature_nets: n must be >= 1");
    require(config.layers >= 1, "make_feature_nets: need at least one layer");
    require(config.order >= 1 && config.order <= 3, "make_feature_nets: order must be in 1..3");
    require(config.hidden_factor >= 1, "make_feature_nets: hidden_factor must be >= 1");
    FeatureNets f;
    f.n = n;
    f.order = config.order;
    f.nica = config.nica;
    auto dims = [&](int in, int out) {
        std::vector<int> d{in};
        for (int l = 1; l < config.layers; ++l) d.push_back(config.hidden_factor * n);
        d.push_back(out);
        return d;
    };
    f.h = nnet::mlp_init(dims(f.nica ? n : (config.order + 1) * n, n), config.activation, derive_seed(seed, 1));
    if (!f.nica) f.phi = nnet::mlp_init(dims(config.order * n, n), config.activation, derive_seed(seed, 2));
    return f;
}

Matrix lagged_inputs(const Matrix& x, int order) {
    require(order >= 1, "lagged_inputs: order must be >= 1");
    require(x.rows() > order, "lagged_inputs: series shorter than the order");
    return stack_lags(x, order, 0, order + 1);
}

Matrix extract_innovations(const nnet::MlpParams& h, const Matrix& x, int order) {
    require(x.rows() >= 2, "extract_innovations: need at least two points");
    const Eigen::Index n = x.cols();
    if (h.input_dim() == n) return nnet::mlp_apply(h, x.bottomRows(x.rows() - order));
    require(h.input_dim() == (order + 1) * n, "extract_innovations: network input width does not match");
    return nnet::mlp_apply(h, lagged_inputs(x, order));
}

// ---------------------------------------------------------------------------

ContrastiveDataset build_contrastive_dataset(const Matrix& x, const std::vector<int>& u, std::uint64_t seed,
                                             int order, int period) {
    require(x.rows() >= 3, "build_contrastive_dataset: need N >= 3");
    require(static_cast<Eigen::Index>(u.size()) == x.rows(), "build_contrastive_dataset: |u| must equal N");
    require(order >= 1 && order <= 3 && x.rows() > order + 1, "build_contrastive_dataset: bad order");
    ContrastiveDataset d;
    d.order = order;
    d.period = period > 0 ? period : static_cast<int>(x.rows());
    d.lagged = lagged_inputs(x, order);
    d.u.assign(u.begin() + order, u.end());
    const std::size_t m = d.u.size();
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    bool identity = true;
    while (identity) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < m && identity; ++i) identity = perm[i] == i;
    }
    d.u_perm.resize(m);
    for (std::size_t i = 0; i < m; ++i) d.u_perm[i] = d.u[perm[i]];
    return d;
}

Matrix fourier_basis(const std::vector<int>& u, int num_freq, int period) {
    require(num_freq >= 0 && period >= 1, "fourier_basis: bad frequency count or period");
    Matrix b(static_cast<Eigen::Index>(u.size()), 2 * num_freq + 1);
    const double w = 2.0 * std::numbers::pi / period;
    for (std::size_t r = 0; r < u.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        b(i, 0) = 1.0;
        for (int f = 1; f <= num_freq; ++f) {
            const double a = w * f * u[r];
            b(i, f) = std::sin(a);
            b(i, num_freq + f) = std::cos(a);
        }
    }
    return b;
}

GclModel make_gcl_model(FeatureNets nets, int num_freq, int period) {
    GclModel m;
    const int n = nets.n;
    m.num_freq = num_freq;
    m.period = period;
    m.mu = Matrix::Zero(2 * n, 2 * num_freq);
    m.alpha = Vector::Zero(2 * num_freq + 1);
    m.beta = Vector::Zero(n);
    if (!nets.nica) {
        const int k = nets.phi.output_dim();
        m.phi_mu = Matrix::Zero(2 * k, 2 * num_freq);
        m.gamma = Vector::Zero(k);
    }
    m.nets = std::move(nets);
    return m;
}

namespace {

struct GclTerms {
    FeaturePass pass;
    Matrix qh, gh, qp, gp;
    Vector r;
};

GclTerms gcl_terms(const GclModel& m, const Matrix& lagged, const Matrix& basis) {
    require(basis.rows() == lagged.rows() && basis.cols() == 2 * m.num_freq + 1, "gcl: basis shape mismatch");
    GclTerms t;
    t.pass = features_forward(m.nets, lagged);
    const Matrix& h = t.pass.h.output;
    const auto bu = basis.rightCols(2 * m.num_freq);
    t.qh = stats(h);
    t.gh = bu * m.mu.transpose();
    t.r = (t.qh.array() * t.gh.array()).rowwise().sum().matrix() + basis * m.alpha + h.array().square().matrix() * m.beta;
    if (!m.nets.nica) {
        const Matrix& p = t.pass.phi.output;
        t.qp = stats(p);
        t.gp = bu * m.phi_mu.transpose();
        t.r += (t.qp.array() * t.gp.array()).rowwise().sum().matrix() + p.array().square().matrix() * m.gamma;
    }
    return t;
}

}  // namespace

Vector gcl_regression(const GclModel& model, const Matrix& lagged, const Matrix& basis) {
    return gcl_terms(model, lagged, basis).r;
}

double gcl_loss(const GclModel& model, const Matrix& lagged, const Matrix& basis, const Vector& y, GclModel* grad) {
    require(y.size() == lagged.rows() && lagged.rows() > 0, "gcl_loss: label count mismatch");
    const GclTerms t = gcl_terms(model, lagged, basis);
    const double inv = 1.0 / static_cast<double>(y.size());
    double loss = 0.0;
    Vector g(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        loss += softplus(t.r[i]) - y[i] * t.r[i];
        g[i] = (sigmoid(t.r[i]) - y[i]) * inv;
    }
    loss *= inv;
    if (grad == nullptr) return loss;

    const auto bu = basis.rightCols(2 * model.num_freq);
    const Matrix& h = t.pass.h.output;
    grad->mu = (t.qh.array().colwise() * g.array()).matrix().transpose() * bu;
    grad->alpha = basis.transpose() * g;
    grad->beta = h.array().square().matrix().transpose() * g;
    Matrix dh = stats_backward(h, t.gh.array().colwise() * g.array());
    dh.array() += 2.0 * ((h.array().rowwise() * model.beta.transpose().array()).colwise() * g.array());
    Matrix dp;
    if (!model.nets.nica) {
        const Matrix& p = t.pass.phi.output;
        grad->phi_mu = (t.qp.array().colwise() * g.array()).matrix().transpose() * bu;
        grad->gamma = p.array().square().matrix().transpose() * g;
        dp = stats_backward(p, t.gp.array().colwise() * g.array());
        dp.array() += 2.0 * ((p.array().rowwise() * model.gamma.transpose().array()).colwise() * g.array());
    }
    features_backward(model.nets, t.pass, dh, dp, grad->nets);
    return loss;
}

nnet::ParamViews param_views(GclModel& m) {
    nnet::ParamViews v;
    append_views(v, m.nets);
    append_view(v, m.mu);
    append_view(v, m.phi_mu);
    append_view(v, m.alpha);
    append_view(v, m.beta);
    append_view(v, m.gamma);
    return v;
}

GclModel zeros_like(const GclModel& model) {
    GclModel z = model;
    zero_nets(z.nets);
    z.mu.setZero();
    z.phi_mu.setZero();
    z.alpha.setZero();
    z.beta.setZero();
    z.gamma.setZero();
    return z;
}

GclResult train_gcl(const ContrastiveDataset& data, const GclConfig& config) {
    require(data.num_triples() >= 2 && data.u.size() == data.u_perm.size(), "train_gcl: invalid dataset");
    require(data.period >= 1, "train_gcl: invalid period");
    const int n = static_cast<int>(data.lagged.cols() / (data.order + 1));
    FeatureConfig fc = config.features;
    fc.order = data.order;
    GclResult res;
    res.model = make_gcl_model(make_feature_nets(n, fc, config.train.seed), config.num_freq, data.period);

    Matrix lagged;
    const StandardScaler scaler = standardize_lagged(data.lagged, n, lagged);
    std::vector<int> all_u(static_cast<std::size_t>(data.period));
    std::iota(all_u.begin(), all_u.end(), 0);
    for (int v : data.u) require(v >= 0 && v < data.period, "train_gcl: u outside [0, period)");
    const Matrix table = fourier_basis(all_u, config.num_freq, data.period);

    const Eigen::Index m = data.num_triples();
    auto gather = [&](std::span<const Eigen::Index> idx, Matrix& rows, Matrix& basis, Vector& y) {
        rows.resize(static_cast<Eigen::Index>(idx.size()), lagged.cols());
        basis.resize(static_cast<Eigen::Index>(idx.size()), table.cols());
        y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(k);
            rows.row(r) = lagged.row(idx[k] % m);
            basis.row(r) = table.row(data.aux(idx[k]));
            y[r] = data.label(idx[k]);
        }
    };
    auto batch = [&](const GclModel& model, std::span<const Eigen::Index> idx, GclModel& grad) {
        Matrix rows, basis;
        Vector y;
        gather(idx, rows, basis, y);
        return gcl_loss(model, rows, basis, y, &grad);
    };
    auto evaluate = [&](const GclModel& model, std::span<const Eigen::Index> idx, double* acc) {
        double loss = 0.0;
        Eigen::Index hits = 0;
        for (std::size_t s = 0; s < idx.size(); s += kEvalChunk) {
            const auto part = idx.subspan(s, std::min<std::size_t>(kEvalChunk, idx.size() - s));
            Matrix rows, basis;
            Vector y;
            gather(part, rows, basis, y);
            const Vector r = gcl_regression(model, rows, basis);
            for (Eigen::Index i = 0; i < r.size(); ++i) {
                loss += softplus(r[i]) - y[i] * r[i];
                hits += ((r[i] > 0.0) == (y[i] > 0.5)) ? 1 : 0;
            }
        }
        if (acc != nullptr) *acc = static_cast<double>(hits) / static_cast<double>(idx.size());
        return loss / static_cast<double>(idx.size());
    };

    std::vector<Eigen::Index> all(static_cast<std::size_t>(data.size()));
    std::iota(all.begin(), all.end(), 0);
    res.initial_loss = evaluate(res.model, all, nullptr);
    res.log = run_sgd(res.model, data.size(), config.train, batch, evaluate);
    fold_features(res.model.nets, scaler);
    return res;
}

// ---------------------------------------------------------------------------

TclModel make_tcl_model(FeatureNets nets, int num_classes) {
    require(num_classes >= 2, "make_tcl_model: need at least two classes");
    TclModel m;
    m.num_classes = num_classes;
    m.w = Matrix::Zero(num_classes, 2 * nets.n);
    if (!nets.nica) m.w_phi = Matrix::Zero(num_classes, 2 * nets.phi.output_dim());
    m.b = Vector::Zero(num_classes);
    m.nets = std::move(nets);
    return m;
}

namespace {

struct TclTerms {
    FeaturePass pass;
    Matrix qh, qp, logits;
};

TclTerms tcl_terms(const TclModel& m, const Matrix& lagged) {
    TclTerms t;
    t.pass = features_forward(m.nets, lagged);
    t.qh = stats(t.pass.h.output);
    t.logits = t.qh * m.w.transpose();
    if (!m.nets.nica) {
        t.qp = stats(t.pass.phi.output);
        t.logits += t.qp * m.w_phi.transpose();
    }
    t.logits.rowwise() += m.b.transpose();
    return t;
}

// In-place row softmax; returns per-row log-sum-exp.
Vector softmax_rows(Matrix& z) {
    Vector lse(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        z.row(i) = (z.row(i).array() - mx).exp();
        const double s = z.row(i).sum();
        z.row(i) /= s;
        lse[i] = mx + std::log(s);
    }
    return lse;
}

}  // namespace

Matrix tcl_logits(const TclModel& model, const Matrix& lagged) { return tcl_terms(model, lagged).logits; }

Matrix tcl_posterior(const TclModel& model, const Matrix& lagged) {
    Matrix z = tcl_logits(model, lagged);
    softmax_rows(z);
    return z;
}

double tcl_loss(const TclModel& model, const Matrix& lagged, const std::vector<int>& labels, TclModel* grad,
                double* accuracy) {
    require(static_cast<Eigen::Index>(labels.size()) == lagged.rows() && !labels.empty(),
            "tcl_loss: label count mismatch");
    TclTerms t = tcl_terms(model, lagged);
    const Eigen::Index b = lagged.rows();
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::Index arg = 0;
        t.logits.row(i).maxCoeff(&arg);
        hits += arg == labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    if (accuracy != nullptr) *accuracy = static_cast<double>(hits) / static_cast<double>(b);
    Matrix p = t.logits;
    const Vector lse = softmax_rows(p);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        require(l >= 0 && l < model.num_classes, "tcl_loss: label out of range");
        loss += lse[i] - t.logits(i, l);
        p(i, l) -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(b);
    loss *= inv;
    if (grad == nullptr) return loss;

    p *= inv;  // dloss/dlogits
    grad->w = p.transpose() * t.qh;
    grad->b = p.colwise().sum().transpose();
    const Matrix dh = stats_backward(t.pass.h.output, p * model.w);
    Matrix dp;
    if (!model.nets.nica) {
        grad->w_phi = p.transpose() * t.qp;
        dp = stats_backward(t.pass.phi.output, p * model.w_phi);
    }
    features_backward(model.nets, t.pass, dh, dp, grad->nets);
    return loss;
}

nnet::ParamViews param_views(TclModel& m) {
    nnet::ParamViews v;
    append_views(v, m.nets);
    append_view(v, m.w);
    append_view(v, m.w_phi);
    append_view(v, m.b);
    return v;
}

TclModel zeros_like(const TclModel& model) {
    TclModel z = model;
    zero_nets(z.nets);
    z.w.setZero();
    z.w_phi.setZero();
    z.b.setZero();
    return z;
}

TclResult train_tcl(const Matrix& x, const std::vector<int>& labels, const TclConfig& config) {
    const int order = config.features.order;
    require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "train_tcl: one label per time point required");
    require(x.rows() > order + 1, "train_tcl: series too short");
    const std::vector<int> y(labels.begin() + order, labels.end());
    const int num_classes = *std::max_element(y.begin(), y.end()) + 1;
    require(*std::min_element(y.begin(), y.end()) >= 0, "train_tcl: negative label");
    std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
    for (int l : y) counts[static_cast<std::size_t>(l)]++;
    for (int c = 0; c < num_classes; ++c)
        require(counts[static_cast<std::size_t>(c)] > 0, "train_tcl: class " + std::to_string(c) + " has no samples");

    const int n = static_cast<int>(x.cols());
    TclResult res;
    res.model = make_tcl_model(make_feature_nets(n, config.features, config.train.seed), num_classes);
    Matrix lagged;
    const StandardScaler scaler = standardize_lagged(lagged_inputs(x, order), n, lagged);

    auto gather = [&](std::span<const Eigen::Index> idx, Matrix& rows, std::vector<int>& lab) {
        rows = gather_rows(lagged, idx);
        lab.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) lab[k] = y[static_cast<std::size_t>(idx[k])];
    };
    auto batch = [&](const TclModel& model, std::span<const Eigen::Index> idx, TclModel& grad) {
        Matrix rows;
        std::vector<int> lab;
        gather(idx, rows, lab);
        return tcl_loss(model, rows, lab, &grad);
    };
    auto evaluate = [&](const TclModel& model, std::span<const Eigen::Index> idx, double* acc) {
        double loss = 0.0, hits = 0.0;
        for (std::size_t s = 0; s < idx.size(); s += kEvalChunk) {
            const auto part = idx.subspan(s, std::min<std::size_t>(kEvalChunk, idx.size() - s));
            Matrix rows;
            std::vector<int> lab;
            gather(part, rows, lab);
            double a = 0.0;
            loss += tcl_loss(model, rows, lab, nullptr, &a) * static_cast<double>(part.size());
            hits += a * static_cast<double>(part.size());
        }
        if (acc != nullptr) *acc = hits / static_cast<double>(idx.size());
        return loss / static_cast<double>(idx.size());
    };

    std::vector<Eigen::Index> all(y.size());
    std::iota(all.begin(), all.end(), 0);
    res.initial_loss = evaluate(res.model, all, nullptr);
    res.log = run_sgd(res.model, static_cast<Eigen::Index>(y.size()), config.train, batch, evaluate);
    evaluate(res.model, all, &res.final_accuracy);
    fold_features(res.model.nets, scaler);
    return res;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const FeatureNets& f) {
    j = {{"n", f.n}, {"order", f.order}, {"nica", f.nica}, {"h_net", f.h}};
    j["phi_net"] = f.nica ? nlohmann::json(nullptr) : nlohmann::json(f.phi);
}

void from_json(const nlohmann::json& j, FeatureNets& f) {
    f = FeatureNets{};
    f.n = j.at("n").get<int>();
    f.order = j.at("order").get<int>();
    f.nica = j.at("nica").get<bool>();
    f.h = j.at("h_net").get<nnet::MlpParams>();
    if (!f.nica) f.phi = j.at("phi_net").get<nnet::MlpParams>();
}

void to_json(nlohmann::json& j, const GclModel& m) {
    j = {{"kind", "gcl"}, {"n", m.nets.n}, {"k", 2}, {"num_freq", m.num_freq}, {"period", m.period}, {"nets", m.nets}};
    j["weights"] = {{"mu", matrix_to_json(m.mu)},       {"phi_mu", matrix_to_json(m.phi_mu)},
                    {"alpha", vector_to_json(m.alpha)}, {"beta", vector_to_json(m.beta)},
                    {"gamma", vector_to_json(m.gamma)}};
}

void from_json(const nlohmann::json& j, GclModel& m) {
    require(j.at("kind") == "gcl", "GclModel json: kind must be gcl");
    m.nets = j.at("nets").get<FeatureNets>();
    m.num_freq = j.at("num_freq").get<int>();
    m.period = j.at("period").get<int>();
    const auto& w = j.at("weights");
    m.mu = matrix_from_json(w.at("mu"));
    m.phi_mu = matrix_from_json(w.at("phi_mu"));
    m.alpha = vector_from_json(w.at("alpha"));
    m.beta = vector_from_json(w.at("beta"));
    m.gamma = vector_from_json(w.at("gamma"));
}

void to_json(nlohmann::json& j, const TclModel& m) {
    j = {{"kind", "tcl"}, {"n", m.nets.n}, {"k", 2}, {"T", m.num_classes}, {"nets", m.nets}};
    j["weights"] = {{"w", matrix_to_json(m.w)}, {"w_phi", matrix_to_json(m.w_phi)}, {"b", vector_to_json(m.b)}};
}

void from_json(const nlohmann::json& j, TclModel& m) {
    require(j.at("kind") == "tcl", "TclModel json: kind must be tcl");
    m.nets = j.at("nets").get<FeatureNets>();
    m.num_classes = j.at("T").get<int>();
    const auto& w = j.at("weights");
    m.w = matrix_from_json(w.at("w"));
    m.w_phi = matrix_from_json(w.at("w_phi"));
    m.b = vector_from_json(w.at("b"));
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out.precision(10);
    out << "epoch,train_loss,val_loss,accuracy\n";
    for (const auto& r : log) {
        out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',';
        if (std::isfinite(r.accuracy)) out << r.accuracy;
        out << '\n';
    }
    return out.str();
}

}  // namespace iia::contrastive
