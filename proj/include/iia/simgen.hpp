#pragma once

// Ground-truth generation: modulated Gaussian innovations, hidden-Markov
// innovations, random NVAR mixing networks, and the observation rollout
// x_t = f(x_{t-1}, ..., x_{t-p}, s_t).

#include "iia/common.hpp"
#include "iia/nnet.hpp"

#include <vector>

namespace iia::simgen {

/// A random combination of sin/cos bases, kept with its weights so a
/// modulation can be regenerated exactly.
struct FourierDraw {
    Vector sin_weights;  // one per frequency 1..num_freq
    Vector cos_weights;
    Vector values;       // length N, rescaled to [-2, 2] (exponentiated if requested)
};

FourierDraw fourier_draw(int num_freq, int length, std::uint64_t seed, bool exponentiate);

/// Evaluates sum_f a_f sin(2 pi f t / N) + b_f cos(2 pi f t / N) for
/// t = 0..N-1 and applies the [-2, 2] rescaling (and exp if requested).
Vector fourier_series(const Vector& sin_weights, const Vector& cos_weights, int length, bool exponentiate);

/// Random-weight Fourier series over [0, 2pi) rescaled to min -2, max +2;
/// optionally exponentiated. A constant raw signal gives zeros (ones).
Vector fourier_modulation(int num_freq, int length, std::uint64_t seed, bool exponentiate);

/// Per-component modulations lambda1 (precision-like, > 0) and lambda2
/// (mean-like, in [-2, 2]) with auxiliary labels u. The conditional density
/// of s_i given u is Gaussian with mean -lambda2/2 and variance 1/(2 lambda1).
struct ModulationParams {
    int n = 0;
    int k = 2;
    Matrix lambda1;  // n x N
    Matrix lambda2;  // n x N
    std::vector<int> u;
    std::vector<FourierDraw> draws;  // provenance, 2n entries (lambda1 then lambda2 per component)

    [[nodiscard]] Eigen::Index length() const { return lambda1.cols(); }
    void validate() const;

    /// Natural parameters (coefficients of s^2 and s in the log-density),
    /// stacked as an nk vector (i-major) at time t.
    [[nodiscard]] Vector natural_parameters(Eigen::Index t) const;
};

ModulationParams make_fourier_modulation(int n, int length, int num_freq, std::uint64_t seed);

TimeSeries sample_nonstationary_innovations(const ModulationParams& mod, std::uint64_t seed);

struct HmmGroundTruth {
    int num_states = 0;
    Matrix transition;  // C x C, row-stochastic
    Vector initial;     // length C
    Matrix means;       // C x n
    Matrix variances;   // C x n
    std::vector<int> states;

    void validate() const;
};

/// Cyclic chain: stay with probability `stay`, otherwise move to the next state.
Matrix cyclic_transition(int num_states, double stay);

/// Random distinctive state moments: means U[-4,4], variances log-uniform in
/// [0.25, 4]; draws closer than 0.5 in l-infinity to an earlier state are
/// redrawn. The state path is left empty.
HmmGroundTruth make_hmm_truth(int num_states, int n, double stay, std::uint64_t seed);

std::vector<int> sample_hmm_states(int num_states, int length, const Matrix& transition,
                                   const Vector& initial, std::uint64_t seed);

TimeSeries sample_hmm_innovations(const HmmGroundTruth& truth, std::uint64_t seed);

/// Mixing network: input [x_{t-1}; ...; x_{t-p}; s_t] of width (p+1)n, first
/// layer (p+1)n -> n then (L-1) n -> n leaky-ReLU layers, last layer linear.
struct NvarModel {
    int n = 0;
    int order = 1;
    int layers = 1;
    nnet::MlpParams f;
    std::uint64_t seed = 0;  // seed of the accepted draw
};

/// Smallest |det df/ds_t| over `probes` standard-normal input points.
double min_innovation_jacobian_det(const NvarModel& model, int probes, std::uint64_t seed);

/// Draws random mixing networks until one passes the invertibility probe
/// (100 points, |det| > 1e-8) and a bounded short rollout; at most 50 tries.
/// Square blocks are U(-1,1) draws with condition number <= 10n scaled to
/// unit |det|; hidden layers carry a 1/sqrt(leak) gain; biases are zero.
/// The x_{t-1} block is scaled so that max |f(x, 0)| / |x| over random
/// directions equals loop_gain.
NvarModel build_nvar_mlp(int n, int layers, std::uint64_t seed, int order = 1, double leak = 0.2,
                         double loop_gain = 0.7);

/// Rolls the NVAR forward. `x0` holds the p initial points (row 0 = x_{-1}).
TimeSeries generate_series(const NvarModel& model, const TimeSeries& innovations, const Matrix& x0);
TimeSeries generate_series(const NvarModel& model, const TimeSeries& innovations);

/// Contiguous equal blocks; the last block absorbs the remainder.
std::vector<int> segment_labels(int length, int num_segments);

/// Exact demixing network of a one-layer model: input [x_t; x_{t-1}; ...],
/// output s_t = W_s^{-1} (x_t - W_x [x_{t-1}; ...] - b).
nnet::MlpParams linear_demixer(const NvarModel& model);

}  // namespace iia::simgen
