// Achievable-rate lower bounds: constrained minimization of a KL-over-entropy
// ratio across the polytope of adversarial joint types, for every connection
// discipline. Two solvers: a refined grid scan over the free coordinates for
// the order-1 (arbitrary-connections) variants, and a bisection-on-rate /
// projected-gradient scheme for the convex higher-order variants. Plus the
// pairwise and random-coding error exponents that certify the same rates.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "senscap/model.hpp"

namespace senscap {

enum class Variant { arbitrary, nonbinary, map_prior, heterogeneous, contiguous, grid2d };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Variant a model naturally maps to when the caller does not force one.
Variant default_variant(const ModelSpec& m);

struct SolverOptions {
  int grid_points = 200;      // per free dimension, first pass
  int refine_rounds = 3;      // local windows, cell size halves each round
  double bisect_tol = 1e-3;   // rate units
  double inner_grad_tol = 1e-5;
  int inner_max_iters = 4000;
  int multistart = 5;         // random restarts on top of the analytic center
  bool shift_consistency = true;  // contiguous variant: require circular-consistent joints
  std::uint64_t seed = kDefaultSeed;
  long long max_grid_points = 10'000'000;
};

struct BoundProblem {
  ModelSpec model;
  double distortion = 0.1;
  Variant variant = Variant::arbitrary;
  SolverOptions opts;
};

BoundProblem make_problem(ModelSpec model, double distortion,
                          std::optional<Variant> variant = std::nullopt, SolverOptions opts = {});

struct SolveDiagnostics {
  long long evaluations = 0;
  double final_cell = 0.0;   // grid solver: last refinement cell size
  double grid_gap = 0.0;     // grid solver: local spread around the optimum
  double grad_norm = 0.0;    // inner solver: final projected-gradient norm
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int starts = 0;
  int converged_starts = 0;
  int inconclusive_steps = 0;  // bisection steps resolved conservatively
  std::string method;
};

struct BoundResult {
  double clb = 0.0;
  JointType minimizer;
  double numerator = 0.0;    // KL at the minimizer (mixture-weighted)
  double denominator = 0.0;  // entropy gap at the minimizer
  double distortion = 0.0;
  Variant variant = Variant::arbitrary;
  SolveDiagnostics diag;
};

// KL / entropy-gap ratio at one joint type; +infinity when the entropy gap
// vanishes (a subexponential adversary class cannot constrain the minimum).
// Raises InfeasibleLambda when lambda violates the variant's constraints.
double objective_ratio(const BoundProblem& p, const JointType& lambda);

// Numerator and denominator separately, without the feasibility check.
struct RatioParts {
  double numerator = 0.0;
  double denominator = 0.0;
};
RatioParts objective_parts(const BoundProblem& p, const JointType& lambda);

// Grid scan over the free coordinates of the order-1 polytope.
BoundResult clb_grid(const BoundProblem& p);

// Largest rate whose linearized objective stays positive, by bisection with
// a projected-gradient inner solve. Contiguous and 2D variants.
BoundResult clb_bisect(const BoundProblem& p);

// The bisection solver's inner objective f_R(lambda) = divergence(lambda)
// - rate * entropy_gap(lambda), with optional analytic gradient. Defined on
// the whole simplex (it is the function the inner solver minimizes), exposed
// for convexity/derivative verification.
double bisect_inner_objective(const BoundProblem& p, const JointType& lambda, double rate,
                              std::vector<double>* grad = nullptr);

// Dispatch on variant.
BoundResult compute_bound(const BoundProblem& p);

// ---------------------------------------------------------------------------
// error exponents

// Pairwise exponent at tilt rho for a fixed (gamma, lambda).
double pair_error_exponent(const ModelSpec& m, double rho, const TypeHistogram& gamma,
                           const JointType& lambda);

struct ExponentResult {
  double rho = 0.0;
  double E_value = 0.0;
  double Er_value = 0.0;
  TypeHistogram gamma;
  JointType lambda;
};

// Random-coding exponent at rate R and distortion D: min over the variant's
// adversarial joint types of the best positive-tilt exponent margin. Positive
// iff R is below the rate bound (up to matched tolerance). Order-1 variants.
ExponentResult random_coding_exponent(const BoundProblem& p, double rate);

// ---------------------------------------------------------------------------
// sweeps and derived analyses

enum class SweepAxis { distortion, noise_p, range, rate };

const char* sweep_axis_name(SweepAxis a);
SweepAxis sweep_axis_from_name(const std::string& name);

struct SweepRow {
  double value = 0.0;
  BoundResult bound;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::distortion;
  std::vector<SweepRow> rows;
  bool monotone_ok = true;   // clb nondecreasing in D / nonincreasing in p
  std::string monotone_note;
};

SweepResult sweep(const BoundProblem& p, SweepAxis axis, const std::vector<double>& grid);

std::vector<double> linspace(double from, double to, int points);

// First crossing (by linear interpolation) of two bound curves on a shared
// axis grid; nullopt when the difference never changes sign.
std::optional<double> find_crossover(const SweepResult& a, const SweepResult& b);

struct ReplicationResult {
  int factor = 1;
  double p_eff = 0.0;
  double rate_direct = 0.0;
  double rate_replicated = 0.0;
  BoundResult direct;
  BoundResult replicated;
};

// Majority-vote replication of each sensor m times versus spending the same
// budget on independent sensors. Requires an exponential noise spec (the
// channel is rebuilt at the effective error level).
ReplicationResult replication_comparison(const BoundProblem& p, int replication_factor);

}  // namespace senscap
