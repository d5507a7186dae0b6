#include "iia/experiment.hpp"

#include "iia/baselines.hpp"
#include "iia/contrastive.hpp"
#include "iia/hmm.hpp"
#include "iia/jsonio.hpp"
#include "iia/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace iia::experiment {

namespace {

constexpr const char* kGeneratorVersion = "iia-nvar-1";

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

bool is_nica(const std::string& method) { return method.rfind("nica-", 0) == 0; }

}  // namespace

const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"gcl", "tcl", "hmm", "adnvar", "nsvica", "nica-gcl", "nica-tcl"};
    return m;
}

bool is_known_method(const std::string& method) {
    const auto& m = known_methods();
    return std::find(m.begin(), m.end(), method) != m.end();
}

void ExperimentConfig::validate(bool need_method) const {
    auto fail = [](const std::string& what) { throw UsageError(what); };
    if (need_method && !is_known_method(method)) fail("unknown method '" + method + "'");
    for (const auto& m : grid.methods)
        if (!is_known_method(m)) fail("unknown method '" + m + "' in grid");
    if (n < 1) fail("n must be >= 1");
    if (layers < 1) fail("L must be >= 1");
    if (order < 1) fail("p must be >= 1");
    if (length < 16) fail("N must be >= 16");
    if (num_freq < 1) fail("num_freq must be >= 1");
    if (num_states < 0) fail("C must be >= 0");
    if (stay <= 0.0 || stay > 1.0) fail("stay must lie in (0, 1]");
    if (seeds.empty()) fail("seeds must not be empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds must be distinct");
    if (restarts < 1 || max_iters < 1) fail("restarts and max_iters must be >= 1");
    if (batch_size < 1 || epochs < 0 || learning_rate < 0.0) fail("bad optimizer settings");
    if (workers < 1) fail("workers must be >= 1");
    auto check_method = [&](const std::string& m) {
        if (m == "hmm" && num_states < 2) fail("method hmm needs C >= 2");
        if ((m == "tcl" || m == "nica-tcl" || m == "nsvica" || m == "adnvar") && segments < 2)
            fail("method " + m + " needs segments >= 2");
    };
    if (need_method) check_method(method);
    for (const auto& m : grid.methods) check_method(m);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"method", c.method},     {"n", c.n},
                       {"L", c.layers},          {"N", c.length},
                       {"p", c.order},           {"segments", c.segments},
                       {"C", c.num_states},      {"num_freq", c.num_freq},
                       {"stay", c.stay},         {"seeds", c.seeds},
                       {"lr", c.learning_rate},  {"momentum", c.momentum},
                       {"batch", c.batch_size},  {"epochs", c.epochs},
                       {"restarts", c.restarts}, {"max_iters", c.max_iters},
                       {"workers", c.workers},   {"out", c.out},
                       {"dataset", c.dataset},   {"model", c.model},
                       {"grid", {{"methods", c.grid.methods}, {"L", c.grid.layers}, {"N", c.grid.lengths}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    static const std::set<std::string> keys{"method", "n",        "L",         "N",       "p",      "segments",
                                            "C",      "num_freq", "stay",      "seeds",   "lr",     "momentum",
                                            "batch",  "epochs",   "restarts",  "max_iters", "workers", "out",
                                            "dataset", "model",   "grid",      "seed"};
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!keys.contains(k)) throw UsageError("unknown config key '" + k + "'");
    try {
        c.method = j.value("method", c.method);
        c.n = j.value("n", c.n);
        c.layers = j.value("L", c.layers);
        c.length = j.value("N", c.length);
        c.order = j.value("p", c.order);
        c.segments = j.value("segments", c.segments);
        c.num_states = j.value("C", c.num_states);
        c.num_freq = j.value("num_freq", c.num_freq);
        c.stay = j.value("stay", c.stay);
        if (j.contains("seed")) c.seeds = {j.at("seed").get<std::uint64_t>()};
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            c.seeds = s.is_array() ? s.get<std::vector<std::uint64_t>>() : std::vector<std::uint64_t>{s.get<std::uint64_t>()};
        }
        c.learning_rate = j.value("lr", c.learning_rate);
        c.momentum = j.value("momentum", c.momentum);
        c.batch_size = j.value("batch", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.restarts = j.value("restarts", c.restarts);
        c.max_iters = j.value("max_iters", c.max_iters);
        c.workers = j.value("workers", c.workers);
        c.out = j.value("out", c.out);
        c.dataset = j.value("dataset", c.dataset);
        c.model = j.value("model", c.model);
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            c.grid.methods = g.value("methods", c.grid.methods);
            c.grid.layers = g.value("L", c.grid.layers);
            c.grid.lengths = g.value("N", c.grid.lengths);
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad config value: ") + e.what());
    }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    nlohmann::json* node = &config;
    for (const auto& part : split(key, '.')) {
        if (part.empty()) throw UsageError("bad key '" + key + "'");
        if (!node->is_object()) *node = nlohmann::json::object();
        node = &(*node)[part];
    }
    *node = value;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        j = nlohmann::json::parse(read_file(path), nullptr, false);
        if (j.is_discarded()) throw UsageError("config " + path + " is not valid JSON");
    }
    for (const auto& o : overrides) apply_override(j, o);
    return j.get<ExperimentConfig>();
}

std::string config_hash(const nlohmann::json& config) {
    // object keys are stored sorted, so the dump is canonical
    const std::string text = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

fs::path output_root(const ExperimentConfig& config) {
    if (const char* env = std::getenv("IIA_OUT_DIR"); env && *env) return env;
    return config.out.empty() ? fs::path("iia_out") : fs::path(config.out);
}

double effective_learning_rate(const ExperimentConfig& c) {
    if (c.learning_rate > 0.0) return c.learning_rate;
    if (c.method == "gcl" || c.method == "nica-gcl") return 0.05;
    if (c.method == "tcl" || c.method == "nica-tcl") return 0.1;
    return 0.01;
}

int effective_epochs(const ExperimentConfig& c) {
    if (c.epochs > 0) return c.epochs;
    if (c.method == "gcl" || c.method == "nica-gcl") return 60;
    if (c.method == "tcl" || c.method == "nica-tcl") return 100;
    return 10;
}

// ---------------------------------------------------------------------------
// datasets

namespace {

nlohmann::json nvar_to_json(const simgen::NvarModel& m) {
    return {{"n", m.n}, {"order", m.order}, {"layers", m.layers}, {"seed", m.seed}, {"f", m.f}};
}

eval::VariabilityReport variability_for(const simgen::ModulationParams& mod, std::uint64_t seed) {
    const int nk = 2 * mod.n;
    Rng rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, mod.length() - 1);
    Matrix lam(nk, nk + 1);
    for (int c = 0; c <= nk; ++c) lam.col(c) = mod.natural_parameters(pick(rng));
    return eval::variability_check(lam);
}

eval::VariabilityReport variability_for(const simgen::HmmGroundTruth& t) {
    const auto n = t.means.cols();
    Matrix lam(2 * n, t.num_states);
    for (int c = 0; c < t.num_states; ++c)
        for (Eigen::Index i = 0; i < n; ++i) {
            lam(2 * i, c) = -0.5 / t.variances(c, i);
            lam(2 * i + 1, c) = t.means(c, i) / t.variances(c, i);
        }
    return eval::variability_check(lam);
}

nlohmann::json variability_json(const eval::VariabilityReport& r) {
    return {{"rank", r.rank},
            {"required_rank", r.l_matrix.rows()},
            {"smallest_singular", r.smallest_singular},
            {"largest_singular", r.largest_singular},
            {"pass", r.pass}};
}

}  // namespace

Dataset generate(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate(false);
    Dataset d;
    TimeSeries s;
    nlohmann::json truth{{"generator_version", kGeneratorVersion},
                         {"seed", seed},
                         {"n", config.n},
                         {"L", config.layers},
                         {"p", config.order},
                         {"N", config.length}};
    if (config.hmm_data()) {
        simgen::HmmGroundTruth t = simgen::make_hmm_truth(config.num_states, config.n, config.stay, derive_seed(seed, 1));
        t.states = simgen::sample_hmm_states(t.num_states, config.length, t.transition, t.initial, derive_seed(seed, 2));
        s = simgen::sample_hmm_innovations(t, derive_seed(seed, 3));
        d.labels = t.states;
        d.variability = variability_for(t);
        truth["source"] = "hmm";
        truth["hmm"] = {{"C", t.num_states},
                        {"stay", config.stay},
                        {"A", matrix_to_json(t.transition)},
                        {"pi", vector_to_json(t.initial)},
                        {"means", matrix_to_json(t.means)},
                        {"vars", matrix_to_json(t.variances)}};
    } else {
        const simgen::ModulationParams mod =
            simgen::make_fourier_modulation(config.n, config.length, config.num_freq, derive_seed(seed, 1));
        s = simgen::sample_nonstationary_innovations(mod, derive_seed(seed, 3));
        d.labels = simgen::segment_labels(config.length, std::max(config.segments, 1));
        d.variability = variability_for(mod, derive_seed(seed, 2));
        nlohmann::json draws = nlohmann::json::array();
        for (const auto& dr : mod.draws)
            draws.push_back({{"sin", vector_to_json(dr.sin_weights)}, {"cos", vector_to_json(dr.cos_weights)}});
        truth["source"] = "fourier";
        truth["modulation"] = {{"num_freq", config.num_freq},
                               {"weight_distribution", "uniform(-1,1)"},
                               {"order", "lambda1 then lambda2 per component"},
                               {"draws", draws}};
        truth["segments"] = config.segments;
    }
    const simgen::NvarModel model = simgen::build_nvar_mlp(config.n, config.layers, derive_seed(seed, 4), config.order);
    d.x = simgen::generate_series(model, s).values;
    d.s = s.values;
    truth["nvar"] = nvar_to_json(model);
    truth["variability"] = variability_json(d.variability);
    d.truth = std::move(truth);
    return d;
}

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& prefix) {
    std::string text;
    for (Eigen::Index c = 0; c < m.cols(); ++c) text += (c ? "," : "") + prefix + std::to_string(c + 1);
    text += '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) text += ',';
            text += fmt(m(r, c));
        }
        text += '\n';
    }
    write_file(path, text);
}

Matrix read_matrix_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    const auto cols = static_cast<Eigen::Index>(split(line, ',').size());
    std::vector<double> vals;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (static_cast<Eigen::Index>(cells.size()) != cols)
            throw UsageError(path.string() + ": ragged row " + std::to_string(rows + 2));
        for (const auto& c : cells) vals.push_back(std::stod(c));
        ++rows;
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = vals[static_cast<std::size_t>(r * cols + c)];
    return m;
}

void write_dataset(const Dataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    write_matrix_csv(dir / "x.csv", data.x, "x");
    if (data.s) write_matrix_csv(dir / "s.csv", *data.s, "s");
    std::string u = "t,label\n";
    for (std::size_t t = 0; t < data.labels.size(); ++t) u += std::to_string(t) + ',' + std::to_string(data.labels[t]) + '\n';
    write_file(dir / "u.csv", u);
    write_file(dir / "truth.json", data.truth.dump(1) + '\n');
}

Dataset read_dataset(const fs::path& dir) {
    Dataset d;
    d.x = read_matrix_csv(dir / "x.csv");
    if (fs::exists(dir / "s.csv")) {
        d.s = read_matrix_csv(dir / "s.csv");
        if (d.s->rows() != d.x.rows() || d.s->cols() != d.x.cols()) throw UsageError("s.csv and x.csv differ in shape");
    }
    if (fs::exists(dir / "u.csv")) {
        const Matrix u = read_matrix_csv(dir / "u.csv");
        for (Eigen::Index t = 0; t < u.rows(); ++t) d.labels.push_back(static_cast<int>(u(t, 1)));
    }
    if (fs::exists(dir / "truth.json")) d.truth = nlohmann::json::parse(read_file(dir / "truth.json"));
    return d;
}

// ---------------------------------------------------------------------------
// training

TrainOutput train(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed) {
    config.validate();
    const Matrix& x = data.x;
    const int N = static_cast<int>(x.rows());
    const std::string& m = config.method;
    TrainConfig tc;
    tc.learning_rate = effective_learning_rate(config);
    tc.epochs = effective_epochs(config);
    tc.momentum = config.momentum;
    tc.batch_size = config.batch_size;
    tc.seed = derive_seed(seed, 10);
    contrastive::FeatureConfig fc;
    fc.layers = config.layers;
    fc.order = config.order;
    fc.nica = is_nica(m);

    TrainOutput out;
    const auto t0 = std::chrono::steady_clock::now();
    if (m == "gcl" || m == "nica-gcl") {
        std::vector<int> u(static_cast<std::size_t>(N));
        for (int t = 0; t < N; ++t) u[static_cast<std::size_t>(t)] = t;
        const auto ds = contrastive::build_contrastive_dataset(x, u, derive_seed(seed, 11), config.order);
        contrastive::GclConfig gc;
        gc.features = fc;
        gc.train = tc;
        gc.num_freq = config.num_freq;
        const auto r = contrastive::train_gcl(ds, gc);
        out.model = r.model;
        out.log_csv = contrastive::epoch_log_csv(r.log);
        out.s_hat = contrastive::extract_innovations(r.model.nets.h, x, config.order);
    } else if (m == "tcl" || m == "nica-tcl") {
        contrastive::TclConfig cc;
        cc.features = fc;
        cc.train = tc;
        const auto r = contrastive::train_tcl(x, simgen::segment_labels(N, config.segments), cc);
        out.model = r.model;
        out.log_csv = contrastive::epoch_log_csv(r.log);
        out.s_hat = contrastive::extract_innovations(r.model.nets.h, x, config.order);
    } else if (m == "hmm") {
        hmm::EmConfig ec;
        ec.layers = config.layers;
        ec.order = config.order;
        ec.restarts = config.restarts;
        ec.max_iters = config.max_iters;
        ec.seed = derive_seed(seed, 12);
        const auto r = hmm::train_hmm_em(x, config.num_states, ec);
        out.model = hmm::result_to_json(r);
        out.log_csv = hmm::em_log_csv(r.log);
        out.s_hat = hmm::extract_innovations(r.model, x);
        out.loglik = r.final_loglik;
    } else if (m == "adnvar") {
        baselines::AdnvarConfig ac;
        ac.layers = config.layers;
        ac.order = config.order;
        ac.num_segments = config.segments;
        ac.train = tc;
        const auto r = baselines::run_adnvar(x, ac);
        out.model = r.model;
        out.log_csv = contrastive::epoch_log_csv(r.fit.log);
        out.s_hat = r.sources;
    } else {
        const auto r = baselines::nsvica(x, config.segments);
        out.model = r.model;
        std::ostringstream os;
        os.precision(12);
        os << "sweep,objective\n";
        for (std::size_t k = 0; k < r.objective.size(); ++k) os << k << ',' << r.objective[k] << '\n';
        out.log_csv = os.str();
        out.s_hat = r.sources;
    }
    out.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out.s_hat.allFinite()) throw DivergenceError("training produced non-finite innovations");
    return out;
}

Matrix extract(const nlohmann::json& model, const Matrix& x) {
    const std::string kind = model.value("kind", "");
    if (kind == "gcl") {
        const auto m = model.get<contrastive::GclModel>();
        return contrastive::extract_innovations(m.nets.h, x, m.nets.order);
    }
    if (kind == "tcl") {
        const auto m = model.get<contrastive::TclModel>();
        return contrastive::extract_innovations(m.nets.h, x, m.nets.order);
    }
    if (kind == "hmm") return hmm::extract_innovations(model.get<hmm::HmmModel>(), x);
    if (kind == "adnvar") return baselines::adnvar_sources(model.get<baselines::AdnvarModel>(), x);
    if (kind == "nsvica") return baselines::nsvica_apply(model.get<baselines::NsvicaModel>(), x);
    throw UsageError("model has unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// results

const std::string& results_header() {
    static const std::string h = "method,n,L,N,p,segments,C,seed,mcc,mcc_spearman,loglik,runtime_s,status";
    return h;
}

std::string to_csv(const ResultRow& r) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    std::string status = r.status;
    std::replace_if(status.begin(), status.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ';');
    std::ostringstream os;
    os << r.method << ',' << r.n << ',' << r.layers << ',' << r.length << ',' << r.order << ',' << r.segments << ','
       << r.num_states << ',' << r.seed << ',' << opt(r.mcc) << ',' << opt(r.mcc_spearman) << ',' << opt(r.loglik)
       << ',' << fmt(r.runtime_s) << ',' << status;
    return os.str();
}

ResultRow parse_result_row(const std::string& line) {
    const auto c = split(line, ',');
    if (c.size() != 13) throw UsageError("results row has " + std::to_string(c.size()) + " fields");
    auto opt = [](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        return std::stod(s);
    };
    ResultRow r;
    r.method = c[0];
    r.n = std::stoi(c[1]);
    r.layers = std::stoi(c[2]);
    r.length = std::stoi(c[3]);
    r.order = std::stoi(c[4]);
    r.segments = std::stoi(c[5]);
    r.num_states = std::stoi(c[6]);
    r.seed = std::stoull(c[7]);
    r.mcc = opt(c[8]);
    r.mcc_spearman = opt(c[9]);
    r.loglik = opt(c[10]);
    r.runtime_s = std::stod(c[11]);
    r.status = c[12];
    return r;
}

std::vector<ResultRow> read_results(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    if (line != results_header()) throw UsageError(path.string() + ": unexpected header");
    std::vector<ResultRow> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(parse_result_row(line));
    return rows;
}

void append_result(const fs::path& path, const ResultRow& row) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to " + path.string());
    if (fresh) out << results_header() << '\n';
    out << to_csv(row) << '\n';
}

ResultRow make_row(const ExperimentConfig& c, std::uint64_t seed) {
    ResultRow r;
    r.method = c.method;
    r.n = c.n;
    r.layers = c.layers;
    r.length = c.length;
    r.order = c.order;
    r.segments = c.segments;
    r.num_states = c.num_states;
    r.seed = seed;
    return r;
}

ResultRow run_one(const ExperimentConfig& config, std::uint64_t seed) {
    ResultRow row = make_row(config, seed);
    try {
        const Dataset d = generate(config, seed);
        const TrainOutput t = train(config, d, seed);
        const eval::EvalReport rep = eval::evaluate(*d.s, t.s_hat);
        row.mcc = rep.mcc;
        row.mcc_spearman = rep.mcc_spearman;
        if (std::isfinite(t.loglik)) row.loglik = t.loglik;
        row.runtime_s = t.runtime_s;
    } catch (const DivergenceError& e) {
        row.status = std::string("diverged: ") + e.what();
    } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
    }
    return row;
}

std::vector<ResultRow> sweep(const ExperimentConfig& config) {
    config.validate(false);
    const auto methods = config.grid.methods.empty() ? std::vector<std::string>{config.method} : config.grid.methods;
    const auto layers = config.grid.layers.empty() ? std::vector<int>{config.layers} : config.grid.layers;
    const auto lengths = config.grid.lengths.empty() ? std::vector<int>{config.length} : config.grid.lengths;
    std::vector<ExperimentConfig> jobs;
    std::vector<std::uint64_t> seeds;
    for (const auto& m : methods)
        for (int L : layers)
            for (int N : lengths)
                for (auto s : config.seeds) {
                    ExperimentConfig c = config;
                    c.method = m;
                    c.layers = L;
                    c.length = N;
                    c.grid = {};
                    c.validate();
                    jobs.push_back(c);
                    seeds.push_back(s);
                }
    std::vector<ResultRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) rows[i] = run_one(jobs[i], seeds[i]);
    };
    const int nthreads = std::min<int>(config.workers, static_cast<int>(jobs.size()));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return rows;
}

// ---------------------------------------------------------------------------
// plots

std::string panel_of(const std::string& method) {
    if (method == "gcl" || method == "nica-gcl") return "gcl";
    if (method == "tcl" || method == "nica-tcl") return "tcl";
    if (method == "hmm") return "hmm";
    return "";
}

namespace {

struct Series {
    std::string method;
    int layers = 0;
    std::map<int, std::pair<double, int>> by_length;  // N -> (sum, count)
};

std::string render_panel(const std::string& title, const std::vector<Series>& series) {
    constexpr double W = 640, H = 420, left = 60, right = 170, top = 40, bottom = 50;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series)
        for (const auto& [N, v] : s.by_length) {
            lo = std::min(lo, std::log2(static_cast<double>(N)));
            hi = std::max(hi, std::log2(static_cast<double>(N)));
        }
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    auto px = [&](double log2n) { return left + (log2n - lo) / (hi - lo) * (W - left - right); };
    auto py = [&](double mcc) { return top + (1.0 - mcc) * (H - top - bottom); };

    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << W - right << "\" y2=\"" << py(0)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1)
       << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double v = 0.2 * k;
        os << "<text x=\"" << left - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << v
           << "</text>\n";
    }
    for (int e = static_cast<int>(std::ceil(lo)); e <= static_cast<int>(std::floor(hi)); ++e)
        os << "<text x=\"" << px(e) << "\" y=\"" << py(0) + 18 << "\" text-anchor=\"middle\" font-size=\"11\">2^" << e
           << "</text>\n";
    os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 10
       << "\" text-anchor=\"middle\" font-size=\"12\">N (data points)</text>\n";
    os << "<text x=\"16\" y=\"" << (top + H - bottom) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (top + H - bottom) / 2 << ")\" text-anchor=\"middle\">mean MCC</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* col = colors[i % 8];
        const char* dash = s.method.rfind("nica-", 0) == 0 ? " stroke-dasharray=\"6 3\"" : "";
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\"" << dash << " points=\"";
        bool first = true;
        for (const auto& [N, v] : s.by_length) {
            os << (first ? "" : " ") << px(std::log2(static_cast<double>(N))) << ',' << py(v.first / v.second);
            first = false;
        }
        os << "\"><title>" << s.method << " L=" << s.layers << "</title></polyline>\n";
        for (const auto& [N, v] : s.by_length)
            os << "<circle cx=\"" << px(std::log2(static_cast<double>(N))) << "\" cy=\"" << py(v.first / v.second)
               << "\" r=\"3\" fill=\"" << col << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(i);
        os << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << col << "\" stroke-width=\"2\"" << dash << "/>\n";
        os << "<text x=\"" << W - right + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.method
           << " L=" << s.layers << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace

std::vector<std::pair<std::string, std::string>> render_panels(const std::vector<ResultRow>& rows) {
    std::map<std::pair<std::string, int>, Series> all;
    std::set<std::string> panels;
    for (const auto& r : rows) {
        if (r.status != "ok" || !r.mcc) continue;
        auto& s = all[{r.method, r.layers}];
        s.method = r.method;
        s.layers = r.layers;
        auto& cell = s.by_length[r.length];
        cell.first += *r.mcc;
        cell.second += 1;
        if (!panel_of(r.method).empty()) panels.insert(panel_of(r.method));
    }
    if (panels.empty() && !all.empty()) panels.insert("baselines");
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : panels) {
        std::vector<Series> members;
        for (const auto& [key, s] : all) {
            const std::string fam = panel_of(key.first);
            if (fam == p || fam.empty()) members.push_back(s);
        }
        out.emplace_back(p, render_panel(p, members));
    }
    return out;
}

std::vector<fs::path> write_panels(const std::vector<ResultRow>& rows, const fs::path& dir) {
    std::vector<fs::path> paths;
    for (const auto& [name, svg] : render_panels(rows)) {
        paths.push_back(dir / ("fig_" + name + ".svg"));
        write_file(paths.back(), svg);
    }
    return paths;
}

}  // namespace iia::experiment
