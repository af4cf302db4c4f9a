// Seeded Monte Carlo validation: random sensor networks drawn from the model
// ensemble, encoding, per-sensor noise, exhaustive ML/MAP decoding, loopy
// belief propagation, and rate/error curves. Every artifact is a pure
// function of (seed, config); trials parallelize without changing results.

#pragma once

#include <cstdint>
#include <vector>

#include "senscap/model.hpp"

namespace senscap {

struct SensorNetwork {
  int targets = 0;  // vector length k, or side^2 for 2D fields
  int side = 0;     // 2D side length; 0 for 1D disciplines
  int sensors = 0;
  double rate = 0.0;  // targets per sensor
  std::uint64_t seed = 0;
  std::vector<int> sensor_class;          // class index per sensor
  std::vector<std::vector<int>> connections;  // target indices per sensor
};

// Fresh network from the model's ensemble. `k` is the vector length (1D) or
// the field side (2D).
SensorNetwork generate_network(const ModelSpec& m, int k, int n, std::uint64_t seed);

// Ideal codeword: per-sensor output index into its class's output alphabet.
std::vector<int> encode(const ModelSpec& m, const SensorNetwork& net, std::span<const int> v);

// Noisy observation: one channel draw per sensor.
std::vector<int> observe(const ModelSpec& m, const SensorNetwork& net, std::span<const int> x,
                         std::uint64_t seed);

// Exhaustive ML (MAP when the model has a prior) over all |V|^k candidates.
// Ties break toward the lexicographically smallest vector.
std::vector<int> decode_ml(const ModelSpec& m, const SensorNetwork& net, std::span<const int> y);

// Exact posterior marginals by exhaustive enumeration (test oracle scale).
Matrix exact_posterior_marginals(const ModelSpec& m, const SensorNetwork& net,
                                 std::span<const int> y);

// ---------------------------------------------------------------------------
// belief propagation

struct FactorGraph {
  int variables = 0;
  int alphabet = 2;
  std::vector<double> log_prior;              // variables x alphabet
  std::vector<std::vector<int>> factor_vars;  // slot -> variable (repeats allowed)
  std::vector<std::vector<double>> factor_logpot;  // over |V|^arity patterns
};

FactorGraph build_factor_graph(const ModelSpec& m, const SensorNetwork& net,
                               std::span<const int> y);

struct BpResult {
  std::vector<int> decoded;
  Matrix marginals;  // variables x alphabet
  bool converged = false;
  int iters = 0;
};

// Synchronous flooding schedule, log-domain messages, optional damping in
// [0, 1). Convergence: max probability-domain message delta < 1e-6.
BpResult decode_bp(const FactorGraph& g, int max_iters = 50, double damping = 0.0);

// ---------------------------------------------------------------------------
// trials

enum class DecoderKind { ml, bp };

struct SimOptions {
  DecoderKind decoder = DecoderKind::bp;
  int bp_iters = 50;
  double damping = 0.0;
  unsigned threads = 0;       // 0: SENSCAP_THREADS or hardware
  bool keep_records = true;
};

struct TrialRecord {
  std::uint64_t seed = 0;
  std::vector<int> truth;
  std::vector<int> codeword;
  std::vector<int> observation;
  std::vector<int> decoded;
  double distortion = 0.0;
  bool error = false;  // distortion >= D (the tolerable region is strict)
  int bp_iters = 0;
  bool bp_converged = true;
};

struct TrialSummary {
  int trials = 0;
  int errors = 0;
  double error_rate = 0.0;
  double ci_lo = 0.0;  // Wilson 95%
  double ci_hi = 0.0;
  std::vector<TrialRecord> records;
};

// Ensemble average: a fresh network per trial; target vectors uniform or
// drawn from the model prior.
TrialSummary run_trials(const ModelSpec& m, int k, int n, double distortion, int trials,
                        std::uint64_t seed, const SimOptions& opts = {});

struct RateCurveRow {
  int k = 0;
  int n = 0;
  double rate = 0.0;
  double error_rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int trials = 0;
};

std::vector<RateCurveRow> sweep_rate(const ModelSpec& m, std::span<const int> ks,
                                     std::span<const double> rates, double distortion, int trials,
                                     std::uint64_t seed, const SimOptions& opts = {});

// Wilson score interval for a binomial proportion.
void wilson_interval(int successes, int trials, double& lo, double& hi);

// RMS residual of the best nondecreasing (in rate) fit to an error curve.
double isotonic_residual(std::span<const RateCurveRow> curve);

// Rate width between the given error levels on the isotonic fit; NaN when the
// curve does not bracket them.
double transition_width(std::span<const RateCurveRow> curve, double lo_level = 0.2,
                        double hi_level = 0.8);

}  // namespace senscap
