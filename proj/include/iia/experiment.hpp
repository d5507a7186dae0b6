#pragma once

// Experiment plumbing behind the iia command line: configs, dataset bundles
// on disk, method dispatch, result rows and SVG summaries.

#include "iia/common.hpp"
#include "iia/eval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace iia::experiment {

namespace fs = std::filesystem;

/// Raised for unknown methods and malformed configs; the CLI maps it to exit 2.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

const std::vector<std::string>& known_methods();
bool is_known_method(const std::string& method);

struct Grid {
    std::vector<std::string> methods;
    std::vector<int> layers;
    std::vector<int> lengths;
};

struct ExperimentConfig {
    std::string method = "tcl";
    int n = 5;
    int layers = 1;        // L, used for the generator and the estimator
    int length = 1 << 14;  // N
    int order = 1;         // p
    int segments = 64;
    int num_states = 0;    // C; data come from a hidden Markov chain when > 0
    int num_freq = 64;
    double stay = 0.99;
    std::vector<std::uint64_t> seeds{0};

    // 0 picks the method default
    double learning_rate = 0.0;
    double momentum = 0.9;
    int batch_size = 256;
    int epochs = 0;

    int restarts = 20;
    int max_iters = 300;
    int workers = 1;

    std::string out;      // output root; IIA_OUT_DIR wins
    std::string dataset;  // bundle directory
    std::string model;    // model.json path
    Grid grid;

    /// Throws UsageError when a field is out of range or missing for the method.
    void validate(bool need_method = true) const;
    [[nodiscard]] bool hmm_data() const { return num_states > 0; }
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Applies `key=value` to a config object. The value is parsed as JSON when
/// possible and kept as a string otherwise; dotted keys reach nested objects.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then overrides.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

/// FNV-1a over the canonical (key-sorted) dump, 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// IIA_OUT_DIR, else config.out, else "iia_out".
fs::path output_root(const ExperimentConfig& config);

/// Method-specific defaults filled in for the learning rate and epochs.
double effective_learning_rate(const ExperimentConfig& config);
int effective_epochs(const ExperimentConfig& config);

struct Dataset {
    Matrix x;
    std::optional<Matrix> s;  // absent for real data
    std::vector<int> labels;  // segment index, or the hidden state for HMM data
    nlohmann::json truth;
    eval::VariabilityReport variability;
};

/// Synthetic bundle for one seed.
Dataset generate(const ExperimentConfig& config, std::uint64_t seed);

void write_dataset(const Dataset& data, const fs::path& dir);
Dataset read_dataset(const fs::path& dir);

struct TrainOutput {
    nlohmann::json model;  // carries "kind"
    std::string log_csv;
    Matrix s_hat;
    double loglik = std::numeric_limits<double>::quiet_NaN();
    double runtime_s = 0.0;
};

/// Fits config.method on the bundle. DivergenceError and NumericError propagate.
TrainOutput train(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed);

/// Innovation estimates from a saved model of any kind.
Matrix extract(const nlohmann::json& model, const Matrix& x);

struct ResultRow {
    std::string method;
    int n = 0, layers = 0, length = 0, order = 1, segments = 0, num_states = 0;
    std::uint64_t seed = 0;
    std::optional<double> mcc, mcc_spearman, loglik;
    double runtime_s = 0.0;
    std::string status = "ok";
};

const std::string& results_header();
std::string to_csv(const ResultRow& row);
ResultRow parse_result_row(const std::string& line);
std::vector<ResultRow> read_results(const fs::path& path);

/// Appends one row, writing the header first when the file is new or empty.
void append_result(const fs::path& path, const ResultRow& row);

ResultRow make_row(const ExperimentConfig& config, std::uint64_t seed);

/// Generate, train and score one configuration; failures land in `status`.
ResultRow run_one(const ExperimentConfig& config, std::uint64_t seed);

/// Every (method, L, N, seed) of the grid, run on config.workers threads.
/// Rows come back in grid order.
std::vector<ResultRow> sweep(const ExperimentConfig& config);

/// Panel name for a method: the estimator family, "gcl", "tcl" or "hmm".
/// Baselines return an empty string and are drawn on every panel.
std::string panel_of(const std::string& method);

/// One SVG per panel: x = N (log scale), y = mean MCC over seeds, one
/// polyline per (method, L). Returns panel name -> SVG text.
std::vector<std::pair<std::string, std::string>> render_panels(const std::vector<ResultRow>& rows);

/// Writes fig_<panel>.svg files into `dir`; returns their paths.
std::vector<fs::path> write_panels(const std::vector<ResultRow>& rows, const fs::path& dir);

// small CSV helpers shared with the CLI
void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& prefix);
Matrix read_matrix_csv(const fs::path& path);

}  // namespace iia::experiment
