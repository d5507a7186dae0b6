// iia: generate NVAR datasets, fit innovation estimators, score and plot.

#include "iia/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace ex = iia::experiment;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "iia 0.1.0";

struct Options {
    std::string config_path;
    std::vector<std::string> sets;
    std::string results;  // plot input
};

ex::ExperimentConfig load(const Options& o) { return ex::load_config(o.config_path, o.sets); }

std::string short_hash(const ex::ExperimentConfig& c) { return ex::config_hash(json(c)).substr(0, 8); }

void write_text(const ex::fs::path& p, const std::string& text) {
    ex::fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

int cmd_gen(const Options& o) {
    auto c = load(o);
    c.validate(false);
    const std::uint64_t seed = c.seeds.front();
    const ex::fs::path dir = c.dataset.empty() ? ex::output_root(c) / ("data_" + short_hash(c)) : ex::fs::path(c.dataset);
    const ex::Dataset d = ex::generate(c, seed);
    ex::write_dataset(d, dir);
    const auto& v = d.variability;
    std::cout << "dataset " << dir.string() << " (" << d.x.rows() << " x " << d.x.cols() << ", seed " << seed << ")\n"
              << "variability: rank " << v.rank << " of " << v.l_matrix.rows() << ", smallest singular value "
              << v.smallest_singular << ", " << (v.pass ? "pass" : "FAIL") << '\n';
    return 0;
}

int cmd_train(const Options& o) {
    auto c = load(o);
    c.validate();
    if (c.dataset.empty()) throw ex::UsageError("train needs --set dataset=DIR");
    const std::uint64_t seed = c.seeds.front();
    const ex::Dataset d = ex::read_dataset(c.dataset);
    const std::string hash = ex::config_hash(json(c));
    const ex::fs::path dir = c.model.empty() ? ex::output_root(c) / (c.method + "_" + hash.substr(0, 8))
                                             : ex::fs::path(c.model).parent_path();
    const ex::fs::path model_path = c.model.empty() ? dir / "model.json" : ex::fs::path(c.model);

    const auto wall0 = std::chrono::system_clock::now();
    const ex::TrainOutput t = ex::train(c, d, seed);
    write_text(model_path, t.model.dump() + '\n');
    write_text(dir / "train_log.csv", t.log_csv);
    ex::write_matrix_csv(dir / "s_hat.csv", t.s_hat, "s_hat");
    json record{{"config", c},
                {"config_hash", hash},
                {"version", kVersion},
                {"seed", seed},
                {"started", std::chrono::duration_cast<std::chrono::seconds>(wall0.time_since_epoch()).count()},
                {"runtime_s", t.runtime_s},
                {"effective", {{"lr", ex::effective_learning_rate(c)}, {"epochs", ex::effective_epochs(c)}}},
                {"artifacts", {model_path.filename().string(), "train_log.csv", "s_hat.csv"}}};
    if (std::isfinite(t.loglik)) record["loglik"] = t.loglik;
    write_text(dir / "run.json", record.dump(1) + '\n');
    std::cout << "model " << model_path.string() << " (" << c.method << ", " << t.runtime_s << " s)\n";
    return 0;
}

int cmd_eval(const Options& o) {
    auto c = load(o);
    if (c.dataset.empty() || c.model.empty()) throw ex::UsageError("eval needs --set dataset=DIR --set model=FILE");
    const ex::fs::path model_path = c.model;
    std::ifstream in(model_path);
    if (!in) throw ex::UsageError("cannot read " + model_path.string());
    const json model = json::parse(in);

    // the run record next to the model carries what the model file lacks
    ex::ResultRow row;
    const ex::fs::path rec_path = model_path.parent_path() / "run.json";
    if (ex::fs::exists(rec_path)) {
        const json rec = json::parse(std::ifstream(rec_path));
        const auto rc = rec.at("config").get<ex::ExperimentConfig>();
        row = ex::make_row(rc, rec.at("seed").get<std::uint64_t>());
        row.runtime_s = rec.value("runtime_s", 0.0);
        if (rec.contains("loglik")) row.loglik = rec.at("loglik").get<double>();
    } else {
        row = ex::make_row(c, c.seeds.front());
        row.method = model.value("kind", "unknown");
    }
    const ex::Dataset d = ex::read_dataset(c.dataset);
    row.length = static_cast<int>(d.x.rows());
    row.n = static_cast<int>(d.x.cols());
    const iia::Matrix s_hat = ex::extract(model, d.x);
    if (d.s) {
        const auto rep = iia::eval::evaluate(*d.s, s_hat);
        row.mcc = rep.mcc;
        row.mcc_spearman = rep.mcc_spearman;
        ex::write_matrix_csv(model_path.parent_path() / "corr.csv", rep.corr, "est");
    } else {
        row.status = "no_truth";
    }
    const ex::fs::path results = ex::output_root(c) / "results.csv";
    ex::append_result(results, row);
    std::cout << ex::results_header() << '\n' << ex::to_csv(row) << '\n';
    return 0;
}

int cmd_sweep(const Options& o) {
    auto c = load(o);
    c.validate(false);
    const auto rows = ex::sweep(c);
    const ex::fs::path root = ex::output_root(c);
    std::string csv = ex::results_header() + '\n';
    int failed = 0;
    for (const auto& r : rows) {
        csv += ex::to_csv(r) + '\n';
        failed += r.status != "ok";
    }
    write_text(root / "results.csv", csv);
    json effective = json::object();
    for (const auto& m : c.grid.methods.empty() ? std::vector<std::string>{c.method} : c.grid.methods) {
        auto mc = c;
        mc.method = m;
        effective[m] = {{"lr", ex::effective_learning_rate(mc)}, {"epochs", ex::effective_epochs(mc)}};
    }
    write_text(root / "sweep_config.json",
               json{{"config", c}, {"config_hash", ex::config_hash(json(c))}, {"version", kVersion}, {"effective", effective}}
                       .dump(1) +
                   '\n');
    const auto svgs = ex::write_panels(rows, root);
    std::cout << rows.size() << " runs, " << failed << " failed; " << (root / "results.csv").string() << '\n';
    for (const auto& p : svgs) std::cout << p.string() << '\n';
    return 0;
}

int cmd_plot(const Options& o) {
    auto c = load(o);
    const ex::fs::path results = o.results.empty() ? ex::output_root(c) / "results.csv" : ex::fs::path(o.results);
    const auto rows = ex::read_results(results);
    for (const auto& p : ex::write_panels(rows, results.parent_path())) std::cout << p.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Independent innovation analysis experiments"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Options opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--set", opts.sets, "override a config key, key=value (repeatable)");
    };
    auto* gen = app.add_subcommand("gen", "generate a dataset bundle");
    auto* train = app.add_subcommand("train", "fit a method on a bundle");
    auto* evalc = app.add_subcommand("eval", "score a model and append to results.csv");
    auto* sweep = app.add_subcommand("sweep", "run a grid of experiments");
    auto* plot = app.add_subcommand("plot", "draw SVG panels from results.csv");
    for (auto* s : {gen, train, evalc, sweep, plot}) add_common(s);
    plot->add_option("--results", opts.results, "results.csv to plot");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        if (*gen) return cmd_gen(opts);
        if (*train) return cmd_train(opts);
        if (*evalc) return cmd_eval(opts);
        if (*sweep) return cmd_sweep(opts);
        return cmd_plot(opts);
    } catch (const ex::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const iia::DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
