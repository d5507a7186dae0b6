#include "iia/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace iia::simgen {

using nnet::Activation;
using nnet::MlpParams;

FourierDraw fourier_draw(int num_freq, int length, std::uint64_t seed, bool exponentiate) {
    require(num_freq >= 1, "fourier_modulation: num_freq must be >= 1");
    require(length >= 2, "fourier_modulation: length must be >= 2");
    FourierDraw d;
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    d.sin_weights.resize(num_freq);
    d.cos_weights.resize(num_freq);
    for (int f = 0; f < num_freq; ++f) {
        d.sin_weights[f] = unif(rng);
        d.cos_weights[f] = unif(rng);
    }

    d.values = fourier_series(d.sin_weights, d.cos_weights, length, exponentiate);
    return d;
}

Vector fourier_series(const Vector& sin_weights, const Vector& cos_weights, int length, bool exponentiate) {
    require(sin_weights.size() == cos_weights.size() && sin_weights.size() >= 1, "fourier_series: weight size mismatch");
    require(length >= 2, "fourier_series: length must be >= 2");
    const Eigen::Index num_freq = sin_weights.size();
    Vector raw(length);
    const double step = 2.0 * std::numbers::pi / length;
    for (int t = 0; t < length; ++t) {
        const double base = step * t;
        const double s1 = std::sin(base), c1 = std::cos(base);
        double s = s1, c = c1, acc = 0.0;
        for (Eigen::Index f = 0; f < num_freq; ++f) {
            acc += sin_weights[f] * s + cos_weights[f] * c;
            const double sn = s * c1 + c * s1;
            c = c * c1 - s * s1;
            s = sn;
        }
        raw[t] = acc;
    }

    Vector values;
    const double lo = raw.minCoeff(), hi = raw.maxCoeff();
    if (hi - lo <= 0.0)
        values = Vector::Zero(length);
    else
        values = raw.unaryExpr([lo, hi](double v) { return 4.0 * ((v - lo) / (hi - lo)) - 2.0; });
    if (exponentiate) values = values.array().exp().matrix();
    return values;
}

Vector fourier_modulation(int num_freq, int length, std::uint64_t seed, bool exponentiate) {
    return fourier_draw(num_freq, length, seed, exponentiate).values;
}

void ModulationParams::validate() const {
    require(n >= 1 && k == 2, "ModulationParams: need n >= 1 and k = 2");
    require(lambda1.rows() == n && lambda2.rows() == n && lambda1.cols() == lambda2.cols(),
            "ModulationParams: lambda shape mismatch");
    require(static_cast<Eigen::Index>(u.size()) == lambda1.cols(), "ModulationParams: u length mismatch");
    require((lambda1.array() > 0.0).all() && lambda1.allFinite(), "ModulationParams: lambda1 must be positive");
    require(lambda2.allFinite(), "ModulationParams: lambda2 must be finite");
}

Vector ModulationParams::natural_parameters(Eigen::Index t) const {
    Vector eta(2 * n);
    for (int i = 0; i < n; ++i) {
        eta[2 * i] = -lambda1(i, t);
        eta[2 * i + 1] = -lambda1(i, t) * lambda2(i, t);
    }
    return eta;
}

ModulationParams make_fourier_modulation(int n, int length, int num_freq, std::uint64_t seed) {
    require(n >= 1, "make_fourier_modulation: n must be >= 1");
    ModulationParams m;
    m.n = n;
    m.lambda1.resize(n, length);
    m.lambda2.resize(n, length);
    for (int i = 0; i < n; ++i) {
        auto d1 = fourier_draw(num_freq, length, derive_seed(seed, 2 * i), true);
        auto d2 = fourier_draw(num_freq, length, derive_seed(seed, 2 * i + 1), false);
        m.lambda1.row(i) = d1.values.transpose();
        m.lambda2.row(i) = d2.values.transpose();
        m.draws.push_back(std::move(d1));
        m.draws.push_back(std::move(d2));
    }
    m.u.resize(length);
    for (int t = 0; t < length; ++t) m.u[t] = t;
    return m;
}

TimeSeries sample_nonstationary_innovations(const ModulationParams& mod, std::uint64_t seed) {
    mod.validate();
    const Eigen::Index length = mod.length();
    TimeSeries s;
    s.values.resize(length, mod.n);
    s.labels = mod.u;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index t = 0; t < length; ++t)
        for (int i = 0; i < mod.n; ++i) {
            const double mean = -0.5 * mod.lambda2(i, t);
            const double sd = std::sqrt(0.5 / mod.lambda1(i, t));
            s.values(t, i) = mean + sd * nd(rng);
        }
    return s;
}

// ---------------------------------------------------------------------------

namespace {

void require_stochastic(const Matrix& a, const Vector& pi, int num_states) {
    require(a.rows() == num_states && a.cols() == num_states, "transition matrix must be C x C");
    require(pi.size() == num_states, "initial distribution must have length C");
    require((a.array() >= 0.0).all() && (pi.array() >= 0.0).all(), "probabilities must be non-negative");
    for (int r = 0; r < num_states; ++r)
        require(std::abs(a.row(r).sum() - 1.0) < 1e-9, "transition matrix rows must sum to 1");
    require(std::abs(pi.sum() - 1.0) < 1e-9, "initial distribution must sum to 1");
}

}  // namespace

void HmmGroundTruth::validate() const {
    require(num_states >= 1, "HmmGroundTruth: need at least one state");
    require_stochastic(transition, initial, num_states);
    require(means.rows() == num_states && variances.rows() == num_states && means.cols() == variances.cols(),
            "HmmGroundTruth: moment shape mismatch");
    require((variances.array() > 0.0).all(), "HmmGroundTruth: variances must be positive");
    for (int s : states) require(s >= 0 && s < num_states, "HmmGroundTruth: state out of range");
}

Matrix cyclic_transition(int num_states, double stay) {
    require(num_states >= 1 && stay >= 0.0 && stay <= 1.0, "cyclic_transition: bad arguments");
    Matrix a = Matrix::Zero(num_states, num_states);
    if (num_states == 1) {
        a(0, 0) = 1.0;
        return a;
    }
    for (int i = 0; i < num_states; ++i) {
        a(i, i) = stay;
        a(i, (i + 1) % num_states) = 1.0 - stay;
    }
    return a;
}

HmmGroundTruth make_hmm_truth(int num_states, int n, double stay, std::uint64_t seed) {
    require(num_states >= 1 && n >= 1, "make_hmm_truth: need C >= 1 and n >= 1");
    HmmGroundTruth truth;
    truth.num_states = num_states;
    truth.transition = cyclic_transition(num_states, stay);
    truth.initial = Vector::Constant(num_states, 1.0 / num_states);
    truth.means.resize(num_states, n);
    truth.variances.resize(num_states, n);

    Rng rng(seed);
    std::uniform_real_distribution<double> mean_dist(-4.0, 4.0);
    std::uniform_real_distribution<double> logvar_dist(std::log(0.25), std::log(4.0));
    constexpr int max_redraws = 10000;
    for (int c = 0; c < num_states; ++c) {
        int tries = 0;
        for (;;) {
            for (int i = 0; i < n; ++i) truth.means(c, i) = mean_dist(rng);
            bool distinct = true;
            for (int o = 0; o < c && distinct; ++o)
                distinct = (truth.means.row(c) - truth.means.row(o)).cwiseAbs().maxCoeff() >= 0.5;
            if (distinct) break;
            if (++tries > max_redraws) throw NumericError("make_hmm_truth: cannot draw distinctive state means");
        }
        for (int i = 0; i < n; ++i) truth.variances(c, i) = std::exp(logvar_dist(rng));
    }
    return truth;
}

std::vector<int> sample_hmm_states(int num_states, int length, const Matrix& transition,
                                   const Vector& initial, std::uint64_t seed) {
    require(length >= 1, "sample_hmm_states: length must be >= 1");
    require_stochastic(transition, initial, num_states);
    Rng rng(seed);
    std::vector<std::discrete_distribution<int>> rows;
    rows.reserve(num_states);
    for (int r = 0; r < num_states; ++r) {
        std::vector<double> w(num_states);
        for (int c = 0; c < num_states; ++c) w[c] = transition(r, c);
        rows.emplace_back(w.begin(), w.end());
    }
    std::vector<double> w0(initial.data(), initial.data() + initial.size());
    std::discrete_distribution<int> first(w0.begin(), w0.end());

    std::vector<int> path(length);
    path[0] = first(rng);
    for (int t = 1; t < length; ++t) path[t] = rows[path[t - 1]](rng);
    return path;
}

TimeSeries sample_hmm_innovations(const HmmGroundTruth& truth, std::uint64_t seed) {
    truth.validate();
    require(!truth.states.empty(), "sample_hmm_innovations: empty state path");
    const Eigen::Index n = truth.means.cols();
    const Eigen::Index length = static_cast<Eigen::Index>(truth.states.size());
    TimeSeries s;
    s.values.resize(length, n);
    s.labels = truth.states;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index t = 0; t < length; ++t) {
        const int c = truth.states[t];
        for (Eigen::Index i = 0; i < n; ++i)
            s.values(t, i) = truth.means(c, i) + std::sqrt(truth.variances(c, i)) * nd(rng);
    }
    return s;
}

// ---------------------------------------------------------------------------

double min_innovation_jacobian_det(const NvarModel& model, int probes, std::uint64_t seed) {
    const int width = (model.order + 1) * model.n;
    std::vector<int> cols(model.n);
    for (int i = 0; i < model.n; ++i) cols[i] = model.order * model.n + i;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix points(probes, width);
    for (Eigen::Index c = 0; c < width; ++c)
        for (int r = 0; r < probes; ++r) points(r, c) = nd(rng);
    nnet::JacobianChain chain(model.f, points, cols);
    double smallest = std::numeric_limits<double>::infinity();
    for (int b = 0; b < probes; ++b) smallest = std::min(smallest, std::abs(chain.jacobian(b).determinant()));
    return smallest;
}

namespace {

bool rollout_bounded(const NvarModel& model, std::uint64_t seed) {
    constexpr int probe_length = 4096;
    constexpr double bound = 1e4;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    TimeSeries s;
    s.values.resize(probe_length, model.n);
    for (Eigen::Index c = 0; c < model.n; ++c)
        for (int r = 0; r < probe_length; ++r) s.values(r, c) = nd(rng);
    try {
        const TimeSeries x = generate_series(model, s);
        return x.values.cwiseAbs().maxCoeff() < bound;
    } catch (const DivergenceError&) {
        return false;
    }
}

}  // namespace

namespace {

// U(-1,1) square block, redrawn while its condition number exceeds 10n,
// then scaled to |det| = 1.
Matrix draw_square_block(int n, Rng& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Matrix w(n, n);
    for (;;) {
        for (Eigen::Index c = 0; c < n; ++c)
            for (Eigen::Index r = 0; r < n; ++r) w(r, c) = unif(rng);
        const Vector sv = Eigen::JacobiSVD<Matrix>(w).singularValues();
        if (sv[n - 1] > 0.0 && sv[0] / sv[n - 1] <= 10.0 * n) break;
    }
    return w / std::pow(std::abs(w.determinant()), 1.0 / n);
}

MlpParams draw_nvar_net(int n, int layers, int order, double leak, double loop_gain, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    MlpParams f;
    f.layer_dims.push_back((order + 1) * n);
    for (int l = 0; l < layers; ++l) f.layer_dims.push_back(n);
    f.activation = layers > 1 ? Activation::leaky_relu(leak) : Activation::linear();

    Matrix first(n, (order + 1) * n);
    for (Eigen::Index c = 0; c < order * n; ++c)
        for (Eigen::Index r = 0; r < n; ++r) first(r, c) = unif(rng);
    first.rightCols(n) = draw_square_block(n, rng);
    f.weights.push_back(first);
    f.biases.push_back(Vector::Zero(n));
    // hidden gain 1/sqrt(leak) offsets the leak on the half of the units
    // that are negative on average, keeping det df/ds near 1
    const double gain = 1.0 / std::sqrt(leak);
    for (int l = 1; l < layers; ++l) {
        f.weights.push_back(gain * draw_square_block(n, rng));
        f.biases.push_back(Vector::Zero(n));
    }

    // The net is positively homogeneous, so scaling the x block scales the
    // autonomous response x -> f(x, 0) exactly; normalize its largest
    // probed one-step gain to loop_gain.
    constexpr int probes = 512;
    Matrix pts = Matrix::Zero(probes, (order + 1) * n);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int r = 0; r < probes; ++r) {
        for (Eigen::Index c = 0; c < order * n; ++c) pts(r, c) = nd(rng);
        pts.row(r).normalize();
    }
    const double g = nnet::mlp_apply(f, pts).rowwise().norm().maxCoeff();
    if (g > 0.0) f.weights[0].leftCols(order * n) *= loop_gain / g;
    return f;
}

}  // namespace

NvarModel build_nvar_mlp(int n, int layers, std::uint64_t seed, int order, double leak, double loop_gain) {
    require(n >= 1 && layers >= 1, "build_nvar_mlp: need n >= 1 and L >= 1");
    require(order >= 1, "build_nvar_mlp: order must be >= 1");
    require(leak > 0.0 && leak < 1.0, "build_nvar_mlp: leak must lie in (0, 1)");
    require(loop_gain >= 0.0 && loop_gain < 1.0, "build_nvar_mlp: loop_gain must lie in [0, 1)");
    constexpr int max_tries = 50;

    std::string tried;
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        const std::uint64_t draw_seed = attempt == 0 ? seed : derive_seed(seed, 1000 + attempt);
        NvarModel m;
        m.n = n;
        m.order = order;
        m.layers = layers;
        m.seed = draw_seed;
        m.f = draw_nvar_net(n, layers, order, leak, loop_gain, draw_seed);
        if (min_innovation_jacobian_det(m, 100, derive_seed(draw_seed, 7)) > 1e-8 &&
            rollout_bounded(m, derive_seed(draw_seed, 8)))
            return m;
        tried += (tried.empty() ? "" : ",") + std::to_string(draw_seed);
    }
    throw NumericError("build_nvar_mlp: no invertible, bounded model after 50 draws (seeds " + tried + ")");
}

TimeSeries generate_series(const NvarModel& model, const TimeSeries& innovations, const Matrix& x0) {
    const int n = model.n, p = model.order;
    require(innovations.dim() == n, "generate_series: innovation width != n");
    require(x0.rows() == p && x0.cols() == n, "generate_series: x0 must be p x n");
    const Eigen::Index length = innovations.length();

    TimeSeries x;
    x.values.resize(length, n);
    x.labels = innovations.labels;

    const MlpParams& f = model.f;
    const int layers = f.num_layers();
    Vector input((p + 1) * n);
    std::vector<Vector> buf(layers);
    for (int l = 0; l < layers; ++l) buf[l].resize(f.weights[l].rows());

    auto past = [&](Eigen::Index t, int lag) -> Eigen::Matrix<double, 1, Eigen::Dynamic> {
        const Eigen::Index idx = t - lag;
        if (idx >= 0) return x.values.row(idx);
        return x0.row(-idx - 1);
    };

    for (Eigen::Index t = 0; t < length; ++t) {
        for (int lag = 1; lag <= p; ++lag) input.segment((lag - 1) * n, n) = past(t, lag).transpose();
        input.segment(p * n, n) = innovations.values.row(t).transpose();
        const Vector* a = &input;
        for (int l = 0; l < layers; ++l) {
            buf[l].noalias() = f.weights[l] * *a;
            buf[l] += f.biases[l];
            if (f.is_hidden(l)) {
                const double leak = f.activation.leak;
                for (Eigen::Index r = 0; r < buf[l].size(); ++r)
                    if (buf[l][r] < 0.0) buf[l][r] *= leak;
            }
            a = &buf[l];
        }
        if (!a->allFinite()) throw DivergenceError("generate_series: non-finite value at t=" + std::to_string(t));
        x.values.row(t) = a->transpose();
    }
    return x;
}

TimeSeries generate_series(const NvarModel& model, const TimeSeries& innovations) {
    return generate_series(model, innovations, Matrix::Zero(model.order, model.n));
}

std::vector<int> segment_labels(int length, int num_segments) {
    require(num_segments >= 1 && num_segments <= length, "segment_labels: need 1 <= segments <= N");
    const int block = length / num_segments;
    std::vector<int> labels(length);
    for (int t = 0; t < length; ++t) labels[t] = std::min(t / block, num_segments - 1);
    return labels;
}

MlpParams linear_demixer(const NvarModel& model) {
    require(model.layers == 1, "linear_demixer: only defined for one-layer models");
    const int n = model.n, p = model.order;
    const Matrix& w = model.f.weights[0];
    const Matrix ws = w.rightCols(n);
    const Matrix wx = w.leftCols(p * n);
    Eigen::PartialPivLU<Matrix> lu(ws);
    const Matrix ws_inv = lu.inverse();

    MlpParams h = nnet::mlp_init({(p + 1) * n, n}, Activation::linear(), 0);
    h.weights[0].leftCols(n) = ws_inv;
    h.weights[0].rightCols(p * n) = -ws_inv * wx;
    h.biases[0] = -ws_inv * model.f.biases[0];
    return h;
}

}  // namespace iia::simgen
