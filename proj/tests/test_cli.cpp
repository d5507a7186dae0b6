#include "doctest.h"
#include "test_util.hpp"

#include "iia/contrastive.hpp"
#include "iia/experiment.hpp"
#include "iia/hmm.hpp"
#include "iia/jsonio.hpp"
#include "iia/simgen.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <sys/wait.h>

using namespace iia;
using namespace iia::experiment;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("iia_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    int k = 0;
    for (std::string line; std::getline(in, line);) k += !line.empty();
    return k;
}

int run_cli(const std::string& args, const fs::path& out_dir) {
    const std::string cmd = "IIA_OUT_DIR='" + out_dir.string() + "' '" IIA_CLI_PATH "' " + args + " > '" +
                            (out_dir / "stdout.txt").string() + "' 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

ExperimentConfig small(const std::string& method) {
    ExperimentConfig c;
    c.method = method;
    c.n = 2;
    c.length = 2048;
    c.segments = 16;
    c.epochs = 2;
    return c;
}

}  // namespace

TEST_CASE("config hash ignores key order") {
    const json a = json::parse(R"({"method":"gcl","n":5,"grid":{"L":[1,3],"N":[16384]},"seeds":[1,2]})");
    const json b = json::parse(R"({"seeds":[1,2],"grid":{"N":[16384],"L":[1,3]},"n":5,"method":"gcl"})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    const json c = json::parse(R"({"method":"gcl","n":6,"grid":{"L":[1,3],"N":[16384]},"seeds":[1,2]})");
    CHECK(config_hash(a) != config_hash(c));
    // via the typed config as well
    CHECK(config_hash(json(a.get<ExperimentConfig>())) == config_hash(json(b.get<ExperimentConfig>())));
}

TEST_CASE("config file then overrides") {
    const fs::path dir = scratch("config");
    std::ofstream(dir / "c.json") << R"({"method":"tcl","n":4,"segments":32,"grid":{"L":[1]}})";
    const ExperimentConfig c =
        load_config((dir / "c.json").string(), {"n=7", "method=gcl", "grid.N=[1024,2048]", "out=some/dir", "seeds=[3,4]"});
    CHECK(c.method == "gcl");
    CHECK(c.n == 7);
    CHECK(c.segments == 32);
    CHECK(c.grid.layers == std::vector<int>{1});
    CHECK(c.grid.lengths == std::vector<int>{1024, 2048});
    CHECK(c.out == "some/dir");
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});

    CHECK_THROWS_AS(load_config("", {"nokey"}), UsageError);
    CHECK_THROWS_AS(load_config("", {"colour=red"}), UsageError);
    CHECK_THROWS_AS(load_config("", {"n=five"}), UsageError);
}

TEST_CASE("config validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    c.method = "vae";
    CHECK_THROWS_AS(c.validate(), UsageError);
    c.method = "hmm";
    CHECK_THROWS_AS(c.validate(), UsageError);  // needs C
    c.num_states = 7;
    CHECK_NOTHROW(c.validate());
    CHECK(c.restarts == 20);
    CHECK(hmm::EmConfig{}.restarts == 20);
    c.seeds = {1, 2, 1};
    CHECK_THROWS_AS(c.validate(), UsageError);
    c.seeds = {1, 2};
    c.method = "tcl";
    c.segments = 1;
    CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("gen bundle at n=20, L=3, N=2^16") {
    ExperimentConfig c;
    c.n = 20;
    c.layers = 3;
    c.length = 1 << 16;
    const fs::path dir = scratch("gen_big");
    const Dataset d = generate(c, 5);
    write_dataset(d, dir);
    CHECK(count_lines(dir / "x.csv") == (1 << 16) + 1);
    CHECK(count_lines(dir / "s.csv") == (1 << 16) + 1);
    CHECK(count_lines(dir / "u.csv") == (1 << 16) + 1);
    const json truth = json::parse(slurp(dir / "truth.json"));
    CHECK(truth.at("n") == 20);
    CHECK(truth.at("nvar").at("layers") == 3);
    CHECK(truth.at("modulation").at("draws").size() == 40);
    CHECK(d.variability.pass);
    fs::remove_all(dir);
}

TEST_CASE("gen is bitwise reproducible") {
    ExperimentConfig c = small("tcl");
    const fs::path a = scratch("rep_a"), b = scratch("rep_b");
    write_dataset(generate(c, 9), a);
    write_dataset(generate(c, 9), b);
    for (const char* f : {"x.csv", "s.csv", "u.csv", "truth.json"}) CHECK(slurp(a / f) == slurp(b / f));
    const fs::path other = scratch("rep_c");
    write_dataset(generate(c, 10), other);
    CHECK(slurp(a / "x.csv") != slurp(other / "x.csv"));

    const Dataset back = read_dataset(a);
    const Dataset orig = generate(c, 9);
    CHECK(back.x == orig.x);
    CHECK(*back.s == *orig.s);
    CHECK(back.labels == orig.labels);
}

TEST_CASE("hmm bundle carries an 11-state row-stochastic chain") {
    ExperimentConfig c;
    c.n = 5;
    c.num_states = 11;
    c.length = 4096;
    const fs::path dir = scratch("hmm_gen");
    write_dataset(generate(c, 1), dir);
    const json truth = json::parse(slurp(dir / "truth.json"));
    REQUIRE(truth.at("source") == "hmm");
    const Matrix A = matrix_from_json(truth.at("hmm").at("A"));
    REQUIRE(A.rows() == 11);
    REQUIRE(A.cols() == 11);
    CHECK((A.array() >= 0.0).all());
    for (Eigen::Index r = 0; r < 11; ++r) CHECK(A.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Dataset d = read_dataset(dir);
    for (int s : d.labels) CHECK((s >= 0 && s < 11));
}

TEST_CASE("train dispatch and model kinds") {
    for (const std::string m : {"gcl", "tcl", "nica-tcl", "adnvar", "nsvica"}) {
        CAPTURE(m);
        ExperimentConfig c = small(m);
        const Dataset d = generate(c, 2);
        const TrainOutput t = train(c, d, 2);
        const std::string expect = m == "nica-tcl" ? "tcl" : m;
        CHECK(t.model.at("kind") == expect);
        CHECK(t.s_hat.cols() == 2);
        CHECK(iia::testing::max_abs_diff(extract(t.model, d.x), t.s_hat) < 1e-9);
        CHECK(!t.log_csv.empty());
    }
    ExperimentConfig c = small("hmm");
    c.num_states = 3;
    c.restarts = 1;
    c.max_iters = 3;
    const Dataset d = generate(c, 3);
    const TrainOutput t = train(c, d, 3);
    CHECK(t.model.at("kind") == "hmm");
    CHECK(std::isfinite(t.loglik));
    CHECK(t.model.contains("restart_seed"));
    CHECK(iia::testing::max_abs_diff(extract(t.model, d.x), t.s_hat) < 1e-9);
    CHECK_THROWS_AS(extract(json{{"kind", "vae"}}, d.x), UsageError);
}

TEST_CASE("results csv rows") {
    ResultRow r = make_row(small("tcl"), 4);
    r.mcc = 0.875;
    r.mcc_spearman = 0.5;
    r.runtime_s = 1.25;
    r.status = "error: a, b";
    const std::string line = to_csv(r);
    CHECK(std::count(line.begin(), line.end(), ',') == 12);
    const ResultRow back = parse_result_row(line);
    CHECK(back.method == "tcl");
    CHECK(back.length == 2048);
    CHECK(back.seed == 4);
    CHECK(*back.mcc == 0.875);
    CHECK(!back.loglik.has_value());
    CHECK(back.status == "error: a; b");

    const fs::path dir = scratch("rows");
    append_result(dir / "results.csv", r);
    append_result(dir / "results.csv", r);
    CHECK(count_lines(dir / "results.csv") == 3);
    CHECK(read_results(dir / "results.csv").size() == 2);
}

TEST_CASE("run_one is reproducible from config and seed") {
    ExperimentConfig c = small("nica-tcl");
    ResultRow a = run_one(c, 6), b = run_one(c, 6);
    a.runtime_s = b.runtime_s = 0.0;
    CHECK(to_csv(a) == to_csv(b));
    CHECK(a.status == "ok");
}

TEST_CASE("sweep row count and panels") {
    ExperimentConfig c;
    c.n = 2;
    c.epochs = 1;
    c.segments = 16;
    c.seeds = {0, 1, 2};
    c.grid.methods = {"nsvica", "nica-tcl"};
    c.grid.layers = {1, 3, 5};
    c.grid.lengths = {1 << 14, 1 << 16};
    const auto rows = sweep(c);
    CHECK(rows.size() == 36);
    for (const auto& r : rows) CHECK(r.status == "ok");
    CHECK(rows.front().method == "nsvica");
    CHECK(rows.back().method == "nica-tcl");

    const auto panels = render_panels(rows);
    REQUIRE(panels.size() == 1);
    CHECK(panels[0].first == "tcl");
    const std::string& svg = panels[0].second;
    const std::regex poly("<polyline");
    CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), poly), std::sregex_iterator()) == 6);
    for (int L : {1, 3, 5}) {
        CHECK(svg.find("nsvica L=" + std::to_string(L)) != std::string::npos);
        CHECK(svg.find("nica-tcl L=" + std::to_string(L)) != std::string::npos);
    }
}

TEST_CASE("sweep records failures and continues") {
    ExperimentConfig c;
    c.n = 3;
    c.segments = 8;
    c.grid.methods = {"nsvica"};
    c.grid.lengths = {16, 4096};
    const auto rows = sweep(c);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].status.rfind("error", 0) == 0);
    CHECK(!rows[0].mcc.has_value());
    CHECK(rows[1].status == "ok");
    CHECK(*rows[1].mcc > 0.0);

    c.workers = 2;
    const auto again = sweep(c);
    CHECK(to_csv(again[0]).substr(0, 20) == to_csv(rows[0]).substr(0, 20));
    CHECK(*again[1].mcc == *rows[1].mcc);
}

TEST_CASE("cli end to end") {
    const fs::path out = scratch("e2e");
    const std::string data = (out / "data").string();
    REQUIRE(run_cli("gen --set n=2 --set N=2048 --set segments=16 --set dataset=" + data, out) == 0);
    CHECK(slurp(out / "stdout.txt").find("variability") != std::string::npos);

    SUBCASE("unknown method is a usage error") {
        CHECK(run_cli("train --set method=vae --set dataset=" + data, out) == 2);
        CHECK(run_cli("frobnicate", out) == 2);
    }
    SUBCASE("train then eval appends one row per call") {
        REQUIRE(run_cli("train --set method=nsvica --set n=2 --set N=2048 --set segments=16 --set dataset=" + data, out) == 0);
        fs::path model;
        for (const auto& e : fs::directory_iterator(out))
            if (e.path().filename().string().rfind("nsvica_", 0) == 0) model = e.path() / "model.json";
        REQUIRE(fs::exists(model));
        CHECK(json::parse(slurp(model)).at("kind") == "nsvica");
        CHECK(fs::exists(model.parent_path() / "run.json"));
        CHECK(fs::exists(model.parent_path() / "train_log.csv"));

        const std::string args = "eval --set dataset=" + data + " --set model=" + model.string();
        REQUIRE(run_cli(args, out) == 0);
        CHECK(count_lines(out / "results.csv") == 2);
        REQUIRE(run_cli(args, out) == 0);
        CHECK(count_lines(out / "results.csv") == 3);
        const auto rows = read_results(out / "results.csv");
        CHECK(rows[0].method == "nsvica");
        CHECK(rows[0].mcc.has_value());

        // real-data mode: no s.csv
        fs::remove(out / "data" / "s.csv");
        REQUIRE(run_cli(args, out) == 0);
        const auto more = read_results(out / "results.csv");
        REQUIRE(more.size() == 3);
        CHECK(!more[2].mcc.has_value());
        CHECK(more[2].status == "no_truth");
    }
    SUBCASE("a perfect model scores 1") {
        ExperimentConfig c = small("tcl");
        const simgen::NvarModel nv = simgen::build_nvar_mlp(2, 1, derive_seed(0, 4), 1);
        contrastive::FeatureNets nets = contrastive::make_feature_nets(2, {}, 1);
        nets.h = simgen::linear_demixer(nv);
        const fs::path model = out / "oracle" / "model.json";
        fs::create_directories(model.parent_path());
        std::ofstream(model) << json(contrastive::make_tcl_model(nets, 16)).dump();
        REQUIRE(run_cli("eval --set dataset=" + data + " --set model=" + model.string(), out) == 0);
        const auto rows = read_results(out / "results.csv");
        REQUIRE(rows.size() == 1);
        CHECK(*rows[0].mcc == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("sweep then plot") {
        REQUIRE(run_cli("sweep --set n=2 --set epochs=1 --set segments=16 --set seeds=[0,1] "
                        "--set 'grid={\"methods\":[\"nsvica\",\"nica-gcl\"],\"N\":[1024,2048]}'",
                        out) == 0);
        CHECK(count_lines(out / "results.csv") == 9);
        REQUIRE(fs::exists(out / "fig_gcl.svg"));
        fs::remove(out / "fig_gcl.svg");
        REQUIRE(run_cli("plot", out) == 0);
        CHECK(fs::exists(out / "fig_gcl.svg"));
    }
}
