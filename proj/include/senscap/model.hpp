// Sensor models: sensing functions, noise channels, connection disciplines,
// and the single-sensor output distributions they induce for a given type or
// joint type of the underlying target vector/field.

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "senscap/types.hpp"

namespace senscap {

enum class Discipline { arbitrary, contiguous1d, contiguous2d };

enum class PsiKind { sum, weighted_sum, lookup };

// Deterministic map from a window of `range` symbols to a finite ordered
// output alphabet X. Real-valued images are merged into X with a 1e-9
// tolerance so weighted sums get a well-defined finite alphabet.
struct SensingFunction {
  PsiKind kind = PsiKind::sum;
  int range = 1;
  int alphabet = 2;
  std::vector<double> weights;        // weighted_sum only
  std::vector<double> output_values;  // X, sorted, exactly the image
  std::vector<int> pattern_output;    // pattern index -> index into X

  static SensingFunction sum(int range, int alphabet = 2);
  static SensingFunction weighted_sum(std::vector<double> weights, int alphabet = 2);
  static SensingFunction lookup(std::vector<double> values, int range, int alphabet = 2);

  int num_outputs() const { return static_cast<int>(output_values.size()); }
  int output_index(std::size_t pattern) const { return pattern_output[pattern]; }
};

// Row-stochastic square channel matrix W(y|x); outputs share X's indexing.
struct NoiseChannel {
  int size = 0;
  std::vector<double> w;  // row-major size x size

  double at(int x, int y) const { return w[static_cast<std::size_t>(x) * size + y]; }
  double& at(int x, int y) { return w[static_cast<std::size_t>(x) * size + y]; }
  std::span<const double> row(int x) const {
    return {w.data() + static_cast<std::size_t>(x) * size, static_cast<std::size_t>(size)};
  }
  void validate(double tol = 1e-12) const;
};

NoiseChannel identity_channel(int size);

// Diagonal 1-p; off-diagonal mass exactly p per row, split in proportion to
// decay^-|rank(y)-rank(x)|.
NoiseChannel make_exponential_noise(double p, int alphabet_size, double decay = 4.0);

// How a channel was specified; kept so solvers can rebuild it at a different
// error level (replication analysis, noise sweeps).
struct NoiseSpec {
  enum class Kind { exponential, matrix } kind = Kind::exponential;
  double p = 0.0;
  double decay = 4.0;
  std::vector<std::vector<double>> rows;  // matrix kind
};

NoiseChannel build_noise(const NoiseSpec& spec, int alphabet_size);

// One sensor class: range/stencil, sensing function, channel. Homogeneous
// models have a single class with alpha = 1.
struct SensorClass {
  double alpha = 1.0;
  int range = 1;        // window length (1D) / cell count (2D)
  double radius = 0.0;  // 2D coverage radius; 0 for 1D disciplines
  std::vector<std::pair<int, int>> stencil;  // 2D only, canonical order
  SensingFunction psi;
  NoiseChannel noise;
  NoiseSpec noise_spec;
};

struct ModelSpec {
  Discipline discipline = Discipline::arbitrary;
  int alphabet = 2;
  std::optional<std::vector<double>> prior;  // i.i.d. per-position law over V
  std::vector<SensorClass> classes;

  bool has_mixture() const { return classes.size() > 1; }
  const SensorClass& cls(std::size_t i = 0) const { return classes.at(i); }
  void validate() const;

  // Pattern order a type must have to be compatible with this model.
  int type_order(std::size_t cls_index = 0) const;
};

// All grid offsets within Euclidean distance `radius` of the origin, sorted
// by (drow, dcol). radius <= 2 keeps the cell count within the dense cap.
std::vector<std::pair<int, int>> coverage_stencil(double radius);

// ---------------------------------------------------------------------------
// induced distributions

// P(x) for one randomly placed sensor given the type of the target vector.
// Arbitrary connections read i.i.d. symbols of an order-1 type; contiguous
// disciplines read one pattern of an order-c (stencil) type.
std::vector<double> output_dist(const ModelSpec& m, const TypeHistogram& gamma,
                                std::size_t cls_index = 0);

// P(x_i, x_j) for one sensor across two target vectors at joint type lambda.
Matrix joint_output_dist(const ModelSpec& m, const JointType& lambda, std::size_t cls_index = 0);

// Joint law of ideal output and noisy observation under the true vector.
Matrix pxy(const ModelSpec& m, const TypeHistogram& gamma, std::size_t cls_index = 0);

// Joint law of a candidate's ideal output and an observation generated by a
// different vector at joint type lambda with it.
Matrix qxy(const ModelSpec& m, const JointType& lambda, std::size_t cls_index = 0);

// alpha-weighted sum of per-class KL(pxy || qxy), in bits.
double mixture_divergence(const ModelSpec& m, const TypeHistogram& gamma, const JointType& lambda);

}  // namespace senscap
