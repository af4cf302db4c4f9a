// Empirical types of symbol vectors: plain (order-1) types, circular
// higher-order window types, joint types of vector pairs, and the pattern
// types of toroidal 2D fields. Also the entropy/KL algebra and the
// type-class counting bounds built on them.
//
// Pattern indexing is normative everywhere: a length-c pattern maps to the
// radix-|V| value of its symbol string read left to right (first symbol most
// significant). A pattern pair (a, b) maps to index(a) * |V|^c + index(b).

#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "senscap/common.hpp"

namespace senscap {

// c is capped: dense storage keeps the entropy/KL algebra trivially
// vectorizable and nothing here needs longer windows.
constexpr int kMaxOrder = 8;
constexpr int kMaxStencilCells = 13;

std::size_t ipow(int base, int exp);

// Normalized frequency vector over length-`order` patterns. `denominator` is
// present exactly when this is the empirical type of a concrete vector: k
// windows, every entry an integer multiple of 1/k. Optimizer iterates are
// relaxed (denominator absent, entries only simplex-constrained).
struct TypeHistogram {
  int order = 1;
  int alphabet = 2;
  bool circular = true;
  std::vector<double> probs;
  std::optional<long long> denominator;

  std::size_t size() const { return probs.size(); }

  // Checks simplex, exactness (when denominator present), and the circular
  // shift consistency (prefix marginal == suffix marginal) for order > 1.
  void validate(double tol = 1e-12) const;

  std::vector<long long> counts() const;  // requires denominator

  TypeHistogram prefix_marginal() const;  // order-(c-1), last symbol summed out
  TypeHistogram suffix_marginal() const;  // order-(c-1), first symbol summed out

  // Distribution of the first symbol of a pattern.
  std::vector<double> first_symbol_marginal() const;
  // Distribution of a uniformly chosen position within a pattern. Equal to
  // first_symbol_marginal for shift-consistent types; this is the form used
  // for stencil pattern types, where cells have no linear order.
  std::vector<double> cell_averaged_symbol_marginal() const;
};

// Normalized frequency vector over aligned pattern pairs of two equal-length
// vectors. probs has |V|^(2c) entries in (a, b) pair order.
struct JointType {
  int order = 1;
  int alphabet = 2;
  bool circular = true;
  std::vector<double> probs;
  std::optional<long long> denominator;

  std::size_t side() const { return ipow(alphabet, order); }
  std::size_t size() const { return probs.size(); }
  double at(std::size_t a, std::size_t b) const { return probs[a * side() + b]; }
  double& at(std::size_t a, std::size_t b) { return probs[a * side() + b]; }

  void validate(double tol = 1e-12) const;
  std::vector<long long> counts() const;

  TypeHistogram row_type() const;  // marginal over b
  TypeHistogram col_type() const;  // marginal over a

  JointType prefix_marginal() const;  // order-(c-1) pair, last symbols summed out
  JointType suffix_marginal() const;  // order-(c-1) pair, first symbols summed out

  // Order-1 pair distribution of the first symbols; off-diagonal mass of this
  // is the normalized Hamming distance of the underlying vectors.
  JointType first_symbol_joint() const;
  JointType cell_averaged_symbol_joint() const;

  double offdiag_symbol_mass(bool cell_averaged = false) const;
};

// ---------------------------------------------------------------------------
// construction from vectors / fields

TypeHistogram compute_type(std::span<const int> v, int order, bool circular, int alphabet = 2);

JointType compute_joint_type(std::span<const int> vi, std::span<const int> vj, int order,
                             bool circular, int alphabet = 2);

// Stencil pattern types of a side x side toroidal field, one window per cell.
// Stencil offsets are (drow, dcol) pairs in their canonical sorted order.
TypeHistogram compute_field_type(std::span<const int> field, int side,
                                 std::span<const std::pair<int, int>> stencil, int alphabet = 2);

JointType compute_joint_field_type(std::span<const int> fi, std::span<const int> fj, int side,
                                   std::span<const std::pair<int, int>> stencil, int alphabet = 2);

// ---------------------------------------------------------------------------
// marginal views and entropy algebra

struct JointMarginals {
  TypeHistogram gamma_i;
  TypeHistogram gamma_j;
  JointType prefix;    // order c-1
  JointType symbol;    // order 1
};

JointMarginals marginalize(const JointType& lambda);

// H of the last symbol given the preceding c-1, i.e. H(full) - H(prefix).
double conditional_entropy_bits(const TypeHistogram& g);
double conditional_entropy_bits(const JointType& l);

// ---------------------------------------------------------------------------
// type-class counting

struct CountBound {
  double log2_count_upper = 0.0;        // exponential part, bits
  double polynomial_factor_log2 = 0.0;  // log2 of the polynomial prefactor
  std::optional<unsigned long long> exact_count;
};

// Number of vectors of the given exact type (order 1: exact multinomial;
// order c: exponential upper bound on the circular class size).
CountBound count_type_classes(const TypeHistogram& g);

// Number of partners v_j at the given exact joint type with a reference of
// the matching row type. Order 1 fills exact_count with the product of
// per-symbol binomials; higher orders report the conditional-entropy bound
// with its polynomial prefactor.
CountBound count_type_classes(const JointType& l);

struct EnumerationResult {
  unsigned long long count = 0;
  std::vector<std::vector<int>> members;  // filled only when requested
};

// Brute-force scan of all |V|^k partners of `reference`; exponential, guarded.
EnumerationResult enumerate_type_class(std::span<const int> reference, const JointType& lambda,
                                       bool collect_members = false);

}  // namespace senscap
