#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

#include "iia/contrastive.hpp"
#include "iia/hmm.hpp"
#include "iia/simgen.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace iia;
using namespace iia::hmm;
using iia::testing::Brute;
using iia::testing::brute_force;
using iia::testing::fd_jacobian;
using iia::testing::max_abs_diff;
using iia::testing::random_matrix;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

HmmModel tiny_model(int n, int layers, int C, std::uint64_t seed) {
    HmmModel m;
    std::vector<int> dims{2 * n};
    for (int l = 1; l < layers; ++l) dims.push_back(2 * n);
    dims.push_back(n);
    m.h = nnet::mlp_init(dims, nnet::Activation::smooth_leaky_relu(0.2), seed);
    // push the x_t block away from singular
    m.h.weights.front().leftCols(n) += Matrix::Identity(m.h.weights.front().rows(), n);
    m.transition = random_matrix(C, C, seed + 1).array().abs() + 0.1;
    for (int i = 0; i < C; ++i) m.transition.row(i) /= m.transition.row(i).sum();
    m.initial = Vector::Constant(C, 1.0 / C);
    m.means = random_matrix(C, n, seed + 2);
    m.variances = random_matrix(C, n, seed + 3).array().abs() + 0.5;
    return m;
}

Matrix softmax_rows(const Matrix& z) {
    Matrix p = z.array().exp();
    for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r) /= p.row(r).sum();
    return p;
}

}  // namespace

TEST_CASE("emission_loglik elementary values") {
    const int n = 3;
    HmmModel m;
    m.h = nnet::mlp_init({2 * n, n}, nnet::Activation::linear(), 1);
    m.h.weights[0].setZero();
    m.h.weights[0].leftCols(n).setIdentity();
    m.transition = Matrix::Identity(1, 1);
    m.initial = Vector::Ones(1);
    m.means = Matrix::Zero(1, n);
    m.variances = Matrix::Ones(1, n);
    m.validate();

    SUBCASE("identity demixer, standard normal state, zero input") {
        Vector row = Vector::Zero(2 * n);
        row.tail(n) = Vector::Constant(n, 5.0);  // past values do not enter
        CHECK(emission_loglik(m, row, 0) == doctest::Approx(-0.5 * kLog2Pi * n).epsilon(1e-14));
        CHECK(emission_loglik(m, row, 0) == doctest::Approx(-0.9189385332 * n).epsilon(1e-9));
    }
    SUBCASE("linear demixer: log-det term is ln|det W|") {
        const Matrix w = random_matrix(n, n, 2);
        m.h.weights[0].leftCols(n) = w;
        const Matrix rows = random_matrix(7, 2 * n, 3);
        const Vector ld = jacobian_logdet(m.h, rows);
        const double expect = std::log(std::abs(w.determinant()));
        CHECK((ld.array() - expect).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("singular Jacobian gives -inf and is counted") {
        m.h.weights[0].leftCols(n).col(1).setZero();
        long singular = 0;
        const Matrix e = emission_loglik(m, random_matrix(4, 2 * n, 4), &singular);
        CHECK(singular == 4);
        CHECK(std::isinf(e(0, 0)));
        CHECK(e(0, 0) < 0);
    }
    SUBCASE("width mismatch") {
        CHECK_THROWS_AS(emission_loglik(m, random_matrix(2, n, 5)), InvalidArgument);
    }
}

TEST_CASE("log-det matches a finite-difference Jacobian determinant") {
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + trial % 5;
        const int layers = 1 + trial % 3;
        CAPTURE(trial);
        const HmmModel m = tiny_model(n, layers, 2, 100 + trial);
        const Matrix rows = random_matrix(5, 2 * n, 200 + trial);
        const Vector ld = jacobian_logdet(m.h, rows);
        for (Eigen::Index b = 0; b < rows.rows(); ++b) {
            const double fd = std::log(std::abs(fd_jacobian(m.h, rows.row(b).transpose(), n).determinant()));
            CHECK(std::abs(ld[b] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("jacobian_logdet_grad") {
    SUBCASE("linear net: the x_t block gets sum(w) W^{-T}") {
        const int n = 3;
        nnet::MlpParams h = nnet::mlp_init({2 * n, n}, nnet::Activation::linear(), 7);
        h.weights[0].leftCols(n) += 2.0 * Matrix::Identity(n, n);
        const Matrix rows = random_matrix(6, 2 * n, 8);
        const Vector w = random_matrix(6, 1, 9).array().abs();
        const nnet::MlpGrads g = jacobian_logdet_grad(h, rows, w);
        const Matrix expect = w.sum() * h.weights[0].leftCols(n).inverse().transpose();
        CHECK(max_abs_diff(g.weights[0].leftCols(n), expect) < 1e-12);
        CHECK(g.weights[0].rightCols(n).cwiseAbs().maxCoeff() == 0.0);
        CHECK(g.biases[0].cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("zero weights give a zero gradient") {
        HmmModel m = tiny_model(3, 2, 2, 10);
        const nnet::MlpGrads g = jacobian_logdet_grad(m.h, random_matrix(5, 6, 11), Vector::Zero(5));
        CHECK(g.squared_norm() == 0.0);
    }
    SUBCASE("random 2-layer net, n=3, against central differences") {
        HmmModel m = tiny_model(3, 2, 2, 12);
        const Matrix rows = random_matrix(8, 6, 13);
        const Vector w = random_matrix(8, 1, 14).array().abs();
        nnet::MlpGrads g = jacobian_logdet_grad(m.h, rows, w);
        const auto res = nnet::grad_check([&] { return w.dot(jacobian_logdet(m.h, rows)); }, nnet::param_views(m.h),
                                          nnet::const_views(nnet::param_views(g)));
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("forward_backward against exhaustive path enumeration") {
    int instance = 0;
    for (int C : {2, 3})
        for (int trial = 0; trial < 25; ++trial, ++instance) {
            const int N = 1 + trial % 6;
            CAPTURE(C);
            CAPTURE(N);
            const std::uint64_t seed = 300 + static_cast<std::uint64_t>(instance);
            const Matrix e = 3.0 * random_matrix(N, C, seed);
            Matrix a = softmax_rows(random_matrix(C, C, seed + 1));
            if (trial % 5 == 0) {  // structural zeros
                a(0, C - 1) = 0.0;
                a.row(0) /= a.row(0).sum();
            }
            const Vector pi = softmax_rows(random_matrix(1, C, seed + 2)).transpose();
            const Posteriors post = forward_backward(e, a, pi);
            const Brute b = brute_force(e, a, pi);
            CHECK(std::abs(post.loglik - b.loglik) < 1e-9);
            CHECK(max_abs_diff(post.gamma, b.gamma) < 1e-9);
            if (N > 1) CHECK(max_abs_diff(post.xi, b.xi) < 1e-9);
            CHECK(viterbi(e, a, pi) == b.best_path);
        }
    CHECK(instance == 50);
}

TEST_CASE("forward_backward invariants") {
    const int C = 4, N = 300;
    const Matrix e = 5.0 * random_matrix(N, C, 20);
    const Matrix a = softmax_rows(2.0 * random_matrix(C, C, 21));
    const Vector pi = Vector::Constant(C, 0.25);
    const Posteriors post = forward_backward(e, a, pi);
    CHECK((post.gamma.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((post.xi.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    double worst = 0.0;
    for (Eigen::Index t = 0; t + 1 < N; ++t)
        for (int i = 0; i < C; ++i) worst = std::max(worst, std::abs(post.xi.row(t).segment(i * C, C).sum() - post.gamma(t, i)));
    CHECK(worst < 1e-10);

    SUBCASE("one state") {
        const Matrix e1 = random_matrix(10, 1, 22);
        const Posteriors p1 = forward_backward(e1, Matrix::Ones(1, 1), Vector::Ones(1));
        CHECK((p1.gamma.array() == 1.0).all());
        CHECK(p1.loglik == doctest::Approx(e1.sum()).epsilon(1e-13));
    }
    SUBCASE("a point no state explains") {
        Matrix bad = e;
        bad.row(7).setConstant(-std::numeric_limits<double>::infinity());
        CHECK_THROWS_AS(forward_backward(bad, a, pi), NumericError);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(forward_backward(e, Matrix::Identity(3, 3), pi), InvalidArgument);
    }
}

TEST_CASE("m_step_discrete") {
    SUBCASE("one state: mean is the sample mean") {
        HmmModel m = tiny_model(2, 1, 1, 30);
        const Matrix s = random_matrix(50, 2, 31);
        Posteriors post;
        post.gamma = Matrix::Ones(50, 1);
        post.xi = Matrix::Ones(49, 1);
        CHECK(m_step_discrete(m, post, s, 0) == 0);
        CHECK(max_abs_diff(m.means, s.colwise().mean()) < 1e-14);
        CHECK(m.transition(0, 0) == 1.0);
    }
    SUBCASE("hand-set responsibilities on three points") {
        HmmModel m = tiny_model(1, 1, 2, 32);
        Matrix s(3, 1);
        s << 1.0, 2.0, 4.0;
        Posteriors post;
        post.gamma.resize(3, 2);
        post.gamma << 1.0, 0.0, 0.5, 0.5, 0.25, 0.75;
        post.xi.resize(2, 4);
        post.xi << 0.5, 0.5, 0.0, 0.0, 0.25, 0.25, 0.0, 0.5;
        m_step_discrete(m, post, s, 0);
        // state 0: weights 1, .5, .25 -> mean (1 + 1 + 1) / 1.75
        const double m0 = 3.0 / 1.75;
        const double v0 = (1.0 * std::pow(1 - m0, 2) + 0.5 * std::pow(2 - m0, 2) + 0.25 * std::pow(4 - m0, 2)) / 1.75;
        // state 1: weights 0, .5, .75 -> mean (1 + 3) / 1.25
        const double m1 = 4.0 / 1.25;
        const double v1 = (0.5 * std::pow(2 - m1, 2) + 0.75 * std::pow(4 - m1, 2)) / 1.25;
        CHECK(m.means(0, 0) == doctest::Approx(m0).epsilon(1e-14));
        CHECK(m.variances(0, 0) == doctest::Approx(v0).epsilon(1e-14));
        CHECK(m.means(1, 0) == doctest::Approx(m1).epsilon(1e-14));
        CHECK(m.variances(1, 0) == doctest::Approx(v1).epsilon(1e-14));
        // counts: row 0 -> (0.75, 0.75), row 1 -> (0, 0.5)
        CHECK(m.transition(0, 0) == doctest::Approx(0.5));
        CHECK(m.transition(0, 1) == doctest::Approx(0.5));
        CHECK(m.transition(1, 0) == doctest::Approx(0.0));
        CHECK(m.transition(1, 1) == doctest::Approx(1.0));
        CHECK(m.initial[0] == 1.0);
        CHECK(m.initial[1] == 0.0);
    }
    SUBCASE("rows of A sum to one after a real E-step") {
        HmmModel m = tiny_model(2, 2, 3, 33);
        const Matrix rows = random_matrix(200, 4, 34);
        const Posteriors post = forward_backward(emission_loglik(m, rows), m.transition, m.initial);
        m_step_discrete(m, post, nnet::mlp_apply(m.h, rows), 1);
        CHECK((m.transition.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK(std::abs(m.initial.sum() - 1.0) < 1e-12);
        m.validate();
    }
    SUBCASE("variance floor and reseeding") {
        HmmModel m = tiny_model(1, 1, 2, 35);
        const Matrix s = Matrix::Constant(10, 1, 3.0);
        Posteriors post;
        post.gamma = Matrix::Zero(10, 2);
        post.gamma.col(0).setOnes();
        post.xi = Matrix::Zero(9, 4);
        post.xi.col(0).setOnes();
        const Matrix a_before = m.transition;
        CHECK(m_step_discrete(m, post, s, 5) == 1);
        CHECK(m.variances(0, 0) == 1e-6);
        CHECK(m.means(1, 0) == 3.0);
        CHECK(m.variances(1, 0) > 0.0);
        CHECK(max_abs_diff(m.transition.row(1), a_before.row(1)) == 0.0);
    }
}

TEST_CASE("q_network and the network M-step") {
    HmmModel m = tiny_model(3, 2, 3, 40);
    const Matrix rows = random_matrix(40, 6, 41);
    const Posteriors post = forward_backward(emission_loglik(m, rows), m.transition, m.initial);

    SUBCASE("gradient against central differences") {
        nnet::MlpGrads g;
        q_network(m, rows, post.gamma, &g);
        const auto res = nnet::grad_check([&] { return q_network(m, rows, post.gamma); }, nnet::param_views(m.h),
                                          nnet::const_views(nnet::param_views(g)));
        CHECK(res.max_rel_error < 1e-4);
    }
    SUBCASE("Q equals the responsibility-weighted emission sum") {
        const Matrix e = emission_loglik(m, rows);
        CHECK(q_network(m, rows, post.gamma) ==
              doctest::Approx((post.gamma.array() * e.array()).sum() / 40.0).epsilon(1e-12));
    }
    SUBCASE("accepted steps never decrease Q") {
        NetStepConfig cfg;
        cfg.steps = 20;
        double step = 0.5;
        double q = q_network(m, rows, post.gamma);
        for (int k = 0; k < 5; ++k) {
            const NetStepResult r = m_step_network(m, rows, post.gamma, cfg, step);
            CHECK(r.q_before == doctest::Approx(q).epsilon(1e-14));
            CHECK(r.q_after >= r.q_before);
            q = r.q_after;
        }
        CHECK(q > q_network(tiny_model(3, 2, 3, 40), rows, post.gamma));
    }
    SUBCASE("zero responsibilities leave the net unchanged") {
        const nnet::MlpParams before = m.h;
        double step = 0.5;
        const NetStepResult r = m_step_network(m, rows, Matrix::Zero(40, 3), NetStepConfig{}, step);
        CHECK(r.accepted == 0);
        CHECK(m.h == before);
    }
}

TEST_CASE("train_hmm_em on a small instance") {
    const int n = 2, C = 2, N = 3000;
    auto truth = simgen::make_hmm_truth(C, n, 0.99, 50);
    truth.states = simgen::sample_hmm_states(C, N, truth.transition, Vector::Constant(C, 0.5), 51);
    const TimeSeries s = simgen::sample_hmm_innovations(truth, 52);
    const TimeSeries x = simgen::generate_series(simgen::build_nvar_mlp(n, 1, 53), s);

    EmConfig cfg;
    cfg.restarts = 3;
    cfg.max_iters = 15;
    cfg.tcl_epochs = 2;
    cfg.tcl_segment_length = 100;
    cfg.seed = 54;
    const EmResult r = train_hmm_em(x.values, C, cfg);

    REQUIRE(r.restart_loglik.size() == 3);
    double best = r.restart_loglik[0];
    for (double v : r.restart_loglik) best = std::max(best, v);
    CHECK(r.final_loglik == best);
    CHECK(r.restart_loglik[static_cast<std::size_t>(r.best_restart)] == best);
    CHECK(r.restart_seed == restart_seed(54, r.best_restart));

    int rows_seen = 0;
    for (std::size_t i = 1; i < r.log.size(); ++i) {
        if (r.log[i].restart != r.log[i - 1].restart) continue;
        CHECK(r.log[i].loglik >= r.log[i - 1].loglik - 1e-6);
        ++rows_seen;
    }
    CHECK(rows_seen > 10);
    r.model.validate();

    const auto path = decode_states(r.model, x.values);
    CHECK(path.size() == static_cast<std::size_t>(N - 1));
    CHECK(extract_innovations(r.model, x.values).rows() == N - 1);

    const auto again = train_hmm_restart(x.values, C, cfg, r.best_restart);
    CHECK(again.final_loglik == r.final_loglik);
    CHECK(again.model.h == r.model.h);
}

TEST_CASE("hmm json and log csv") {
    HmmModel m = tiny_model(2, 2, 3, 60);
    const nlohmann::json j = m;
    const HmmModel back = j.get<HmmModel>();
    CHECK(back.h == m.h);
    CHECK(back.transition == m.transition);
    CHECK(back.initial == m.initial);
    CHECK(back.means == m.means);
    CHECK(back.variances == m.variances);
    CHECK(j.at("C") == 3);

    EmResult r;
    r.model = m;
    r.restart_seed = 99;
    r.final_loglik = -12.5;
    const nlohmann::json rj = result_to_json(r);
    CHECK(rj.at("restart_seed") == 99);
    CHECK(rj.at("final_loglik") == -12.5);
    for (const char* key : {"h_net", "A", "pi", "means", "vars", "C"}) CHECK(rj.contains(key));

    nlohmann::json bad = j;
    bad["C"] = 4;
    CHECK_THROWS_AS(bad.get<HmmModel>(), InvalidArgument);

    std::vector<EmLogRow> log(2);
    log[0] = {0, 0, -10.5, 1.25, 3};
    log[1] = {0, 1, -10.25, std::numeric_limits<double>::quiet_NaN(), 0};
    CHECK(em_log_csv(log) == "restart,iter,loglik,Q,accepted_net_step\n0,0,-10.5,1.25,3\n0,1,-10.25,,0\n");
}
