#include "senscap/types.hpp"

#include <algorithm>
#include <cmath>

namespace senscap {

const char* errc_name(errc c) {
  switch (c) {
    case errc::empty_vector: return "EmptyVector";
    case errc::order_exceeds_length: return "OrderExceedsLength";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::instance_too_large: return "InstanceTooLarge";
    case errc::non_exact_type: return "NonExactType";
    case errc::support_mismatch: return "SupportMismatch";
    case errc::order_mismatch: return "OrderMismatch";
    case errc::invalid_probability: return "InvalidProbability";
    case errc::no_mixture: return "NoMixture";
    case errc::dimension_too_large: return "DimensionTooLarge";
    case errc::empty_feasible_set: return "EmptyFeasibleSet";
    case errc::inner_solver_diverged: return "InnerSolverDiverged";
    case errc::conditional_undefined: return "ConditionalUndefined";
    case errc::range_exceeds_field: return "RangeExceedsField";
    case errc::alphabet_violation: return "AlphabetViolation";
    case errc::even_replication: return "EvenReplication";
    case errc::numerical_underflow: return "NumericalUnderflow";
    case errc::infeasible_lambda: return "InfeasibleLambda";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::io_error: return "IoError";
  }
  return "Error";
}

std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

namespace {

void check_symbols(std::span<const int> v, int alphabet) {
  for (int s : v) {
    if (s < 0 || s >= alphabet) fail(errc::alphabet_violation, "symbol out of range");
  }
}

void check_order(int order, int alphabet) {
  require(alphabet >= 2, errc::invalid_argument, "alphabet size must be >= 2");
  require(order >= 0 && order <= kMaxOrder, errc::dimension_too_large, "pattern order out of range");
}

void check_simplex_exact(std::span<const double> probs, const std::optional<long long>& denom,
                         double tol) {
  double s = 0.0;
  for (double p : probs) {
    require(p >= -tol, errc::invalid_probability, "negative type entry");
    s += p;
  }
  require(std::abs(s - 1.0) <= 1e-12 * std::max<double>(1.0, static_cast<double>(probs.size())),
          errc::invalid_probability, "type entries must sum to 1");
  if (denom) {
    for (double p : probs) {
      double scaled = p * static_cast<double>(*denom);
      require(std::abs(scaled - std::llround(scaled)) <= 1e-9, errc::non_exact_type,
              "entry inconsistent with stated denominator");
    }
  }
}

std::vector<long long> exact_counts(std::span<const double> probs,
                                    const std::optional<long long>& denom) {
  require(denom.has_value(), errc::non_exact_type, "type has no denominator");
  std::vector<long long> c(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) c[i] = std::llround(probs[i] * static_cast<double>(*denom));
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// TypeHistogram

void TypeHistogram::validate(double tol) const {
  check_order(order, alphabet);
  require(probs.size() == ipow(alphabet, order), errc::invalid_argument, "type has wrong length");
  check_simplex_exact(probs, denominator, tol);
  if (circular && order > 1) {
    const TypeHistogram pre = prefix_marginal();
    const TypeHistogram suf = suffix_marginal();
    for (std::size_t i = 0; i < pre.probs.size(); ++i) {
      require(std::abs(pre.probs[i] - suf.probs[i]) <= tol, errc::invalid_probability,
              "circular type violates shift consistency");
    }
  }
}

std::vector<long long> TypeHistogram::counts() const { return exact_counts(probs, denominator); }

TypeHistogram TypeHistogram::prefix_marginal() const {
  TypeHistogram m{order - 1, alphabet, circular, std::vector<double>(ipow(alphabet, order - 1), 0.0), denominator};
  for (std::size_t i = 0; i < probs.size(); ++i) m.probs[i / alphabet] += probs[i];
  return m;
}

TypeHistogram TypeHistogram::suffix_marginal() const {
  TypeHistogram m{order - 1, alphabet, circular, std::vector<double>(ipow(alphabet, order - 1), 0.0), denominator};
  const std::size_t tail = ipow(alphabet, order - 1);
  for (std::size_t i = 0; i < probs.size(); ++i) m.probs[i % tail] += probs[i];
  return m;
}

std::vector<double> TypeHistogram::first_symbol_marginal() const {
  std::vector<double> m(alphabet, 0.0);
  const std::size_t tail = ipow(alphabet, order - 1);
  for (std::size_t i = 0; i < probs.size(); ++i) m[i / tail] += probs[i];
  return m;
}

std::vector<double> TypeHistogram::cell_averaged_symbol_marginal() const {
  std::vector<double> m(alphabet, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    std::size_t rest = i;
    for (int u = 0; u < order; ++u) {
      m[rest % alphabet] += probs[i] / order;
      rest /= alphabet;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// JointType

void JointType::validate(double tol) const {
  check_order(order, alphabet);
  require(probs.size() == ipow(alphabet, 2 * order), errc::invalid_argument, "joint type has wrong length");
  check_simplex_exact(probs, denominator, tol);
  row_type().validate(tol);
  col_type().validate(tol);
  if (circular && order > 1) {
    const JointType pre = prefix_marginal();
    const JointType suf = suffix_marginal();
    for (std::size_t i = 0; i < pre.probs.size(); ++i) {
      require(std::abs(pre.probs[i] - suf.probs[i]) <= tol, errc::invalid_probability,
              "circular joint type violates shift consistency");
    }
  }
}

std::vector<long long> JointType::counts() const { return exact_counts(probs, denominator); }

TypeHistogram JointType::row_type() const {
  const std::size_t s = side();
  TypeHistogram g{order, alphabet, circular, std::vector<double>(s, 0.0), denominator};
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = 0; b < s; ++b) g.probs[a] += at(a, b);
  return g;
}

TypeHistogram JointType::col_type() const {
  const std::size_t s = side();
  TypeHistogram g{order, alphabet, circular, std::vector<double>(s, 0.0), denominator};
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = 0; b < s; ++b) g.probs[b] += at(a, b);
  return g;
}

JointType JointType::prefix_marginal() const {
  const std::size_t s = side();
  const std::size_t sp = ipow(alphabet, order - 1);
  JointType m{order - 1, alphabet, circular, std::vector<double>(sp * sp, 0.0), denominator};
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = 0; b < s; ++b) m.probs[(a / alphabet) * sp + (b / alphabet)] += at(a, b);
  return m;
}

JointType JointType::suffix_marginal() const {
  const std::size_t s = side();
  const std::size_t sp = ipow(alphabet, order - 1);
  JointType m{order - 1, alphabet, circular, std::vector<double>(sp * sp, 0.0), denominator};
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = 0; b < s; ++b) m.probs[(a % sp) * sp + (b % sp)] += at(a, b);
  return m;
}

JointType JointType::first_symbol_joint() const {
  const std::size_t s = side();
  const std::size_t tail = ipow(alphabet, order - 1);
  JointType m{1, alphabet, circular, std::vector<double>(static_cast<std::size_t>(alphabet) * alphabet, 0.0), denominator};
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = 0; b < s; ++b) m.probs[(a / tail) * alphabet + (b / tail)] += at(a, b);
  return m;
}

JointType JointType::cell_averaged_symbol_joint() const {
  const std::size_t s = side();
  JointType m{1, alphabet, circular, std::vector<double>(static_cast<std::size_t>(alphabet) * alphabet, 0.0), denominator};
  for (std::size_t a = 0; a < s; ++a) {
    for (std::size_t b = 0; b < s; ++b) {
      const double w = at(a, b) / order;
      std::size_t ra = a, rb = b;
      for (int u = 0; u < order; ++u) {
        m.probs[(ra % alphabet) * alphabet + (rb % alphabet)] += w;
        ra /= alphabet;
        rb /= alphabet;
      }
    }
  }
  return m;
}

double JointType::offdiag_symbol_mass(bool cell_averaged) const {
  const JointType s = cell_averaged ? cell_averaged_symbol_joint() : first_symbol_joint();
  double mass = 0.0;
  for (int a = 0; a < alphabet; ++a)
    for (int b = 0; b < alphabet; ++b)
      if (a != b) mass += s.at(a, b);
  return mass;
}

// ---------------------------------------------------------------------------
// construction

namespace {

std::size_t window_index(std::span<const int> v, std::size_t start, int order, int alphabet,
                         bool circular) {
  std::size_t idx = 0;
  const std::size_t k = v.size();
  for (int u = 0; u < order; ++u) {
    const std::size_t pos = circular ? (start + u) % k : start + u;
    idx = idx * alphabet + static_cast<std::size_t>(v[pos]);
  }
  return idx;
}

long long window_count(std::size_t k, int order, bool circular) {
  return circular ? static_cast<long long>(k) : static_cast<long long>(k) - order + 1;
}

}  // namespace

TypeHistogram compute_type(std::span<const int> v, int order, bool circular, int alphabet) {
  require(!v.empty(), errc::empty_vector, "compute_type: empty vector");
  check_order(order, alphabet);
  require(order >= 1, errc::invalid_argument, "order must be >= 1");
  require(static_cast<std::size_t>(order) <= v.size(), errc::order_exceeds_length,
          "order exceeds vector length");
  check_symbols(v, alphabet);

  const long long windows = window_count(v.size(), order, circular);
  TypeHistogram g{order, alphabet, circular, std::vector<double>(ipow(alphabet, order), 0.0), windows};
  for (long long i = 0; i < windows; ++i)
    g.probs[window_index(v, static_cast<std::size_t>(i), order, alphabet, circular)] += 1.0 / static_cast<double>(windows);
  return g;
}

JointType compute_joint_type(std::span<const int> vi, std::span<const int> vj, int order,
                             bool circular, int alphabet) {
  require(vi.size() == vj.size(), errc::length_mismatch, "compute_joint_type: length mismatch");
  require(!vi.empty(), errc::empty_vector, "compute_joint_type: empty vectors");
  check_order(order, alphabet);
  require(order >= 1, errc::invalid_argument, "order must be >= 1");
  require(static_cast<std::size_t>(order) <= vi.size(), errc::order_exceeds_length,
          "order exceeds vector length");
  check_symbols(vi, alphabet);
  check_symbols(vj, alphabet);

  const long long windows = window_count(vi.size(), order, circular);
  const std::size_t s = ipow(alphabet, order);
  JointType l{order, alphabet, circular, std::vector<double>(s * s, 0.0), windows};
  for (long long i = 0; i < windows; ++i) {
    const std::size_t a = window_index(vi, static_cast<std::size_t>(i), order, alphabet, circular);
    const std::size_t b = window_index(vj, static_cast<std::size_t>(i), order, alphabet, circular);
    l.probs[a * s + b] += 1.0 / static_cast<double>(windows);
  }
  return l;
}

namespace {

std::size_t stencil_pattern(std::span<const int> field, int side,
                            std::span<const std::pair<int, int>> stencil, int row, int col,
                            int alphabet) {
  std::size_t idx = 0;
  for (const auto& [dr, dc] : stencil) {
    const int r = ((row + dr) % side + side) % side;
    const int c = ((col + dc) % side + side) % side;
    idx = idx * alphabet + static_cast<std::size_t>(field[static_cast<std::size_t>(r) * side + c]);
  }
  return idx;
}

void check_field(std::span<const int> field, int side, std::span<const std::pair<int, int>> stencil,
                 int alphabet) {
  require(side >= 1, errc::invalid_argument, "field side must be >= 1");
  require(field.size() == static_cast<std::size_t>(side) * side, errc::length_mismatch,
          "field size != side^2");
  require(!stencil.empty() && stencil.size() <= kMaxStencilCells, errc::dimension_too_large,
          "stencil cell count out of range");
  check_symbols(field, alphabet);
}

}  // namespace

TypeHistogram compute_field_type(std::span<const int> field, int side,
                                 std::span<const std::pair<int, int>> stencil, int alphabet) {
  check_field(field, side, stencil, alphabet);
  const int cells = static_cast<int>(stencil.size());
  const long long windows = static_cast<long long>(side) * side;
  TypeHistogram g{cells, alphabet, false, std::vector<double>(ipow(alphabet, cells), 0.0), windows};
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      g.probs[stencil_pattern(field, side, stencil, r, c, alphabet)] += 1.0 / static_cast<double>(windows);
  return g;
}

JointType compute_joint_field_type(std::span<const int> fi, std::span<const int> fj, int side,
                                   std::span<const std::pair<int, int>> stencil, int alphabet) {
  require(fi.size() == fj.size(), errc::length_mismatch, "joint field type: size mismatch");
  check_field(fi, side, stencil, alphabet);
  check_symbols(fj, alphabet);
  const int cells = static_cast<int>(stencil.size());
  const long long windows = static_cast<long long>(side) * side;
  const std::size_t s = ipow(alphabet, cells);
  JointType l{cells, alphabet, false, std::vector<double>(s * s, 0.0), windows};
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const std::size_t a = stencil_pattern(fi, side, stencil, r, c, alphabet);
      const std::size_t b = stencil_pattern(fj, side, stencil, r, c, alphabet);
      l.probs[a * s + b] += 1.0 / static_cast<double>(windows);
    }
  }
  return l;
}

// ---------------------------------------------------------------------------
// marginals and entropies

JointMarginals marginalize(const JointType& lambda) {
  return JointMarginals{lambda.row_type(), lambda.col_type(), lambda.prefix_marginal(),
                        lambda.first_symbol_joint()};
}

double conditional_entropy_bits(const TypeHistogram& g) {
  if (g.order <= 1) return entropy_bits(g.probs);
  return entropy_bits(g.probs) - entropy_bits(g.prefix_marginal().probs);
}

double conditional_entropy_bits(const JointType& l) {
  if (l.order <= 1) return entropy_bits(l.probs);
  return entropy_bits(l.probs) - entropy_bits(l.prefix_marginal().probs);
}

// ---------------------------------------------------------------------------
// counting

namespace {

// log2 of the polynomial prefactor of the higher-order class-count bound:
// 2^(2(c-1)) * k^(2^(c-1)) * (k+1)^(2^(2(c-1))).
double poly_prefactor_log2(int order, long long k) {
  const double c1 = static_cast<double>(ipow(2, order - 1));
  const double c2 = static_cast<double>(ipow(2, 2 * (order - 1)));
  return 2.0 * (order - 1) + c1 * std::log2(static_cast<double>(k)) +
         c2 * std::log2(static_cast<double>(k) + 1.0);
}

unsigned long long multinomial_exact(long long n, std::span<const long long> parts) {
  unsigned long long r = 1;
  long long rem = n;
  for (long long p : parts) {
    // product of binomials; stays exact for the desk-scale k used here
    r *= binomial_exact(rem, p);
    rem -= p;
  }
  return r;
}

}  // namespace

CountBound count_type_classes(const TypeHistogram& g) {
  require(g.denominator.has_value(), errc::non_exact_type, "count_type_classes: relaxed type");
  const long long k = *g.denominator;
  CountBound out;
  if (g.order == 1) {
    out.log2_count_upper = static_cast<double>(k) * entropy_bits(g.probs);
    out.exact_count = multinomial_exact(k, g.counts());
  } else {
    out.log2_count_upper = static_cast<double>(k) * conditional_entropy_bits(g);
  }
  return out;
}

CountBound count_type_classes(const JointType& l) {
  require(l.denominator.has_value(), errc::non_exact_type, "count_type_classes: relaxed joint type");
  const long long k = *l.denominator;
  CountBound out;
  if (l.order == 1) {
    // Product over symbols a of C(k*gamma_a; row a's split). Binary: the
    // two-binomial product.
    const std::vector<long long> rows = l.row_type().counts();
    const std::vector<long long> cells = l.counts();
    unsigned long long exact = 1;
    for (int a = 0; a < l.alphabet; ++a) {
      std::vector<long long> parts(cells.begin() + a * l.alphabet,
                                   cells.begin() + (a + 1) * l.alphabet);
      exact *= multinomial_exact(rows[static_cast<std::size_t>(a)], parts);
    }
    out.exact_count = exact;
    out.log2_count_upper =
        static_cast<double>(k) * (entropy_bits(l.probs) - entropy_bits(l.row_type().probs));
  } else {
    out.log2_count_upper = static_cast<double>(k) * (conditional_entropy_bits(l) -
                                                     conditional_entropy_bits(l.row_type()));
    out.polynomial_factor_log2 = poly_prefactor_log2(l.order, k);
  }
  return out;
}

EnumerationResult enumerate_type_class(std::span<const int> reference, const JointType& lambda,
                                       bool collect_members) {
  const std::size_t k = reference.size();
  require(k >= 1, errc::empty_vector, "enumerate_type_class: empty reference");
  const double log2_space = static_cast<double>(k) * std::log2(static_cast<double>(lambda.alphabet));
  require(log2_space <= 24.0, errc::instance_too_large, "enumeration space exceeds 2^24");
  require(lambda.denominator.has_value(), errc::non_exact_type, "enumerate_type_class: relaxed joint type");
  require(*lambda.denominator == window_count(k, lambda.order, lambda.circular),
          errc::invalid_argument, "joint type denominator does not match reference length");

  const std::vector<long long> want = lambda.counts();
  const std::size_t total = ipow(lambda.alphabet, static_cast<int>(k));
  EnumerationResult out;
  std::vector<int> partner(k, 0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t pos = k; pos-- > 0;) {
      partner[pos] = static_cast<int>(rest % lambda.alphabet);
      rest /= lambda.alphabet;
    }
    const JointType jt =
        compute_joint_type(reference, partner, lambda.order, lambda.circular, lambda.alphabet);
    if (jt.counts() == want) {
      ++out.count;
      if (collect_members) out.members.push_back(partner);
    }
  }
  return out;
}

}  // namespace senscap
