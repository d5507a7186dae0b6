#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace iia {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// A real n-dimensional sequence stored with time along the rows (N x n).
/// `labels` carries the per-point auxiliary variable when one exists.
struct TimeSeries {
    Matrix values;
    std::vector<int> labels;

    [[nodiscard]] Eigen::Index length() const { return values.rows(); }
    [[nodiscard]] Eigen::Index dim() const { return values.cols(); }
};

/// Raised when a caller violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative procedure produces non-finite values.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a numeric routine hits a degenerate (singular, empty) case.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidArgument(what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Derives an independent child seed from a parent seed and a stream tag
/// (splitmix64 finalizer), so that separate RNG streams never share state.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Stacks lagged copies of a series: row r of the result is
/// [x_{r+lags}, x_{r+lags-1}, ..., x_{r+lags-width+1}] where width = number
/// of stacked points. `first_lag` = 0 includes x_t, 1 starts at x_{t-1}.
Matrix stack_lags(const Matrix& x, int order, int first_lag, int width);

}  // namespace iia
