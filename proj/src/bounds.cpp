#include "senscap/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace senscap {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kDenomFloor = 1e-12;
constexpr double kFeasTol = 1e-8;

double log2_clamped(double x) { return std::log2(std::max(x, 1e-300)); }
double log2_grad_clamped(double x) { return std::log2(std::max(x, 1e-12)); }

bool is_grid_variant(Variant v) {
  return v == Variant::arbitrary || v == Variant::nonbinary || v == Variant::map_prior ||
         v == Variant::heterogeneous;
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::arbitrary: return "arbitrary";
    case Variant::nonbinary: return "nonbinary";
    case Variant::map_prior: return "map_prior";
    case Variant::heterogeneous: return "heterogeneous";
    case Variant::contiguous: return "contiguous";
    case Variant::grid2d: return "grid2d";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::arbitrary, Variant::nonbinary, Variant::map_prior,
                    Variant::heterogeneous, Variant::contiguous, Variant::grid2d}) {
    if (name == variant_name(v)) return v;
  }
  fail(errc::invalid_argument, "unknown variant '" + name + "'");
}

Variant default_variant(const ModelSpec& m) {
  switch (m.discipline) {
    case Discipline::contiguous1d: return Variant::contiguous;
    case Discipline::contiguous2d: return Variant::grid2d;
    case Discipline::arbitrary: break;
  }
  if (m.has_mixture()) return Variant::heterogeneous;
  if (m.prior) return Variant::map_prior;
  if (m.alphabet > 2) return Variant::nonbinary;
  return Variant::arbitrary;
}

BoundProblem make_problem(ModelSpec model, double distortion, std::optional<Variant> variant,
                          SolverOptions opts) {
  model.validate();
  require(distortion >= 0.0 && distortion <= 1.0, errc::invalid_argument,
          "distortion must lie in [0, 1]");
  BoundProblem p{std::move(model), distortion, Variant::arbitrary, opts};
  p.variant = variant.value_or(default_variant(p.model));
  if (is_grid_variant(p.variant)) {
    require(p.model.discipline == Discipline::arbitrary, errc::invalid_argument,
            "variant requires the arbitrary-connections discipline");
  } else if (p.variant == Variant::contiguous) {
    require(p.model.discipline == Discipline::contiguous1d, errc::invalid_argument,
            "contiguous variant requires the 1d contiguous discipline");
  } else {
    require(p.model.discipline == Discipline::contiguous2d, errc::invalid_argument,
            "grid2d variant requires the 2d discipline");
    require(p.model.alphabet == 2, errc::invalid_argument, "2d bound supports binary fields");
  }
  if (p.variant == Variant::arbitrary) {
    require(p.model.alphabet == 2, errc::invalid_argument,
            "arbitrary variant is binary; use nonbinary for larger alphabets");
  }
  if (p.variant == Variant::map_prior) {
    require(p.model.prior.has_value(), errc::invalid_argument, "map_prior variant needs a prior");
  }
  return p;
}

// ---------------------------------------------------------------------------
// fixed adversarial marginal per variant

namespace {

TypeHistogram uniform_type(int order, int alphabet) {
  const std::size_t n = ipow(alphabet, order);
  return TypeHistogram{order, alphabet, true,
                       std::vector<double>(n, 1.0 / static_cast<double>(n)), std::nullopt};
}

TypeHistogram grid_gamma(const BoundProblem& p) {
  switch (p.variant) {
    case Variant::arbitrary:
    case Variant::nonbinary:
      return uniform_type(1, p.model.alphabet);
    case Variant::map_prior:
      return TypeHistogram{1, p.model.alphabet, true, *p.model.prior, std::nullopt};
    case Variant::heterogeneous: {
      if (p.model.prior) return TypeHistogram{1, p.model.alphabet, true, *p.model.prior, std::nullopt};
      return uniform_type(1, p.model.alphabet);
    }
    default: break;
  }
  fail(errc::invalid_argument, "not an order-1 variant");
}

std::vector<double> grid_reference_prior(const BoundProblem& p) {
  if (p.model.prior) return *p.model.prior;
  return std::vector<double>(p.model.alphabet, 1.0 / p.model.alphabet);
}

// Entropy-gap denominator for the order-1 variants.
double grid_denominator(const BoundProblem& p, const JointType& lambda) {
  const double h_lambda = entropy_bits(lambda.probs);
  if (p.variant == Variant::arbitrary || p.variant == Variant::nonbinary) {
    return h_lambda - entropy_bits(grid_gamma(p).probs);
  }
  const TypeHistogram gj = lambda.col_type();
  const std::vector<double> pv = grid_reference_prior(p);
  return h_lambda - entropy_bits(gj.probs) - kl_bits(gj.probs, pv);
}

}  // namespace

RatioParts objective_parts(const BoundProblem& p, const JointType& lambda) {
  RatioParts out;
  if (is_grid_variant(p.variant)) {
    require(lambda.order == 1, errc::order_mismatch, "order-1 joint type expected");
    const TypeHistogram gamma = grid_gamma(p);
    if (p.variant == Variant::heterogeneous) {
      out.numerator = mixture_divergence(p.model, gamma, lambda);
    } else {
      out.numerator = kl_bits(pxy(p.model, gamma).flat(), qxy(p.model, lambda).flat());
    }
    out.denominator = grid_denominator(p, lambda);
    return out;
  }
  if (p.variant == Variant::contiguous) {
    const int c = p.model.cls().range;
    require(lambda.order == c, errc::order_mismatch, "joint type order must equal the range");
    const TypeHistogram gamma = uniform_type(c, p.model.alphabet);
    out.numerator = kl_bits(pxy(p.model, gamma).flat(), qxy(p.model, lambda).flat());
    const double h_prefix = c > 1 ? entropy_bits(lambda.prefix_marginal().probs) : 0.0;
    out.denominator =
        entropy_bits(lambda.probs) - h_prefix - std::log2(static_cast<double>(p.model.alphabet));
    return out;
  }
  // grid2d: the adversarial pattern type is the row marginal itself; only its
  // symbol balance is pinned by the constraints.
  const TypeHistogram gi = lambda.row_type();
  out.numerator = kl_bits(pxy(p.model, gi).flat(), qxy(p.model, lambda).flat());
  const double ones = lambda.col_type().cell_averaged_symbol_marginal()[1];
  out.denominator = binary_entropy_bits(ones);
  return out;
}

namespace {

void check_feasible(const BoundProblem& p, const JointType& lambda) {
  const double tol = kFeasTol;
  if (is_grid_variant(p.variant)) {
    const TypeHistogram gamma = grid_gamma(p);
    const TypeHistogram rows = lambda.row_type();
    for (std::size_t i = 0; i < rows.probs.size(); ++i) {
      require(std::abs(rows.probs[i] - gamma.probs[i]) <= tol, errc::infeasible_lambda,
              "row marginal does not match the adversarial type");
    }
    require(lambda.offdiag_symbol_mass() >= p.distortion - tol, errc::infeasible_lambda,
            "below the distortion constraint");
    return;
  }
  if (p.variant == Variant::contiguous) {
    const TypeHistogram rows = lambda.row_type();
    const double want = 1.0 / static_cast<double>(rows.probs.size());
    for (double r : rows.probs) {
      require(std::abs(r - want) <= tol, errc::infeasible_lambda, "row marginal must be uniform");
    }
    if (p.opts.shift_consistency && lambda.order > 1) {
      const JointType pre = lambda.prefix_marginal();
      const JointType suf = lambda.suffix_marginal();
      for (std::size_t i = 0; i < pre.probs.size(); ++i) {
        require(std::abs(pre.probs[i] - suf.probs[i]) <= tol, errc::infeasible_lambda,
                "joint shift consistency violated");
      }
    }
    require(lambda.offdiag_symbol_mass() >= p.distortion - tol, errc::infeasible_lambda,
            "below the distortion constraint");
    return;
  }
  const double balance = lambda.row_type().cell_averaged_symbol_marginal()[0];
  require(std::abs(balance - 0.5) <= tol, errc::infeasible_lambda,
          "2d row symbol balance must be 0.5");
  require(lambda.offdiag_symbol_mass(true) >= p.distortion - tol, errc::infeasible_lambda,
          "below the distortion constraint");
}

}  // namespace

double objective_ratio(const BoundProblem& p, const JointType& lambda) {
  check_feasible(p, lambda);
  const RatioParts parts = objective_parts(p, lambda);
  if (parts.denominator <= kDenomFloor) return kInf;
  return parts.numerator / parts.denominator;
}

// ---------------------------------------------------------------------------
// grid solver (order-1 variants)

namespace {

struct GridEval {
  const BoundProblem& p;
  TypeHistogram gamma;
  std::vector<double> prior_ref;
  std::vector<Matrix> pxys;  // one per class
  int V;

  explicit GridEval(const BoundProblem& prob)
      : p(prob), gamma(grid_gamma(prob)), prior_ref(grid_reference_prior(prob)),
        V(prob.model.alphabet) {
    for (std::size_t l = 0; l < p.model.classes.size(); ++l)
      pxys.push_back(pxy(p.model, gamma, l));
  }

  // free coords are the off-diagonal entries, row by row
  bool build(std::span<const double> free, JointType& lambda) const {
    std::size_t f = 0;
    double offdiag = 0.0;
    for (int a = 0; a < V; ++a) {
      double rest = gamma.probs[static_cast<std::size_t>(a)];
      for (int b = 0; b < V; ++b) {
        if (b == a) continue;
        const double v = free[f++];
        lambda.at(a, b) = v;
        rest -= v;
        offdiag += v;
      }
      if (rest < -1e-15) return false;
      lambda.at(a, a) = std::max(rest, 0.0);
    }
    return offdiag >= p.distortion - 1e-12;
  }

  RatioParts parts(const JointType& lambda) const {
    RatioParts out;
    if (p.variant == Variant::heterogeneous) {
      for (std::size_t l = 0; l < p.model.classes.size(); ++l) {
        out.numerator +=
            p.model.classes[l].alpha * kl_bits(pxys[l].flat(), qxy(p.model, lambda, l).flat());
      }
    } else {
      out.numerator = kl_bits(pxys[0].flat(), qxy(p.model, lambda).flat());
    }
    out.denominator = grid_denominator(p, lambda);
    return out;
  }

  double ratio(const JointType& lambda) const {
    const RatioParts r = parts(lambda);
    return r.denominator <= kDenomFloor ? kInf : r.numerator / r.denominator;
  }
};

}  // namespace

BoundResult clb_grid(const BoundProblem& p) {
  require(is_grid_variant(p.variant), errc::invalid_argument,
          "grid solver covers the order-1 variants only");
  const GridEval ev(p);
  const int V = p.model.alphabet;
  const int dims = V * (V - 1);
  const int N = std::max(2, p.opts.grid_points);
  double total = 1.0;
  for (int i = 0; i < dims; ++i) total *= N;
  require(total <= static_cast<double>(p.opts.max_grid_points), errc::dimension_too_large,
          "free-coordinate grid too large; reduce grid_points or alphabet");

  // row budget per free coordinate
  std::vector<double> budget(dims);
  {
    int f = 0;
    for (int a = 0; a < V; ++a)
      for (int b = 0; b < V; ++b)
        if (b != a) budget[f++] = ev.gamma.probs[static_cast<std::size_t>(a)];
  }

  JointType lambda{1, V, true, std::vector<double>(static_cast<std::size_t>(V) * V, 0.0),
                   std::nullopt};
  JointType best_lambda = lambda;
  double best = kInf;
  std::vector<double> best_free(dims, 0.0);
  long long evals = 0;

  std::vector<int> idx(dims, 0);
  std::vector<double> free(dims, 0.0);
  for (;;) {
    for (int i = 0; i < dims; ++i) free[i] = budget[i] * idx[i] / (N - 1);
    if (ev.build(free, lambda)) {
      ++evals;
      const double r = ev.ratio(lambda);
      if (r < best) {
        best = r;
        best_lambda = lambda;
        best_free = free;
      }
    }
    int d = 0;
    while (d < dims && ++idx[d] == N) idx[d++] = 0;
    if (d == dims) break;
  }

  // local refinement: window of one cell around the incumbent, step halves
  std::vector<double> step(dims);
  for (int i = 0; i < dims; ++i) step[i] = budget[i] / (N - 1);
  double gap = 0.0;
  for (int round = 0; round < p.opts.refine_rounds; ++round) {
    const std::vector<double> center = best_free;
    for (int i = 0; i < dims; ++i) step[i] *= 0.5;
    std::vector<int> li(dims, 0);
    double local_min = kInf, local_max = -kInf;
    for (;;) {
      bool in_box = true;
      for (int i = 0; i < dims; ++i) {
        free[i] = center[i] + (li[i] - 2) * step[i];
        if (free[i] < -1e-15 || free[i] > budget[i] + 1e-15) in_box = false;
        free[i] = std::clamp(free[i], 0.0, budget[i]);
      }
      if (in_box && ev.build(free, lambda)) {
        ++evals;
        const double r = ev.ratio(lambda);
        if (std::isfinite(r)) {
          local_min = std::min(local_min, r);
          local_max = std::max(local_max, r);
        }
        if (r < best) {
          best = r;
          best_lambda = lambda;
          best_free = free;
        }
      }
      int d = 0;
      while (d < dims && ++li[d] == 5) li[d++] = 0;
      if (d == dims) break;
    }
    if (std::isfinite(local_min) && std::isfinite(local_max)) gap = local_max - local_min;
  }

  BoundResult out;
  out.clb = best;
  out.minimizer = best_lambda;
  const RatioParts parts = ev.parts(best_lambda);
  out.numerator = parts.numerator;
  out.denominator = parts.denominator;
  out.distortion = p.distortion;
  out.variant = p.variant;
  out.diag.evaluations = evals;
  out.diag.final_cell = *std::max_element(step.begin(), step.end());
  out.diag.grid_gap = gap;
  out.diag.method = "grid";
  return out;
}

// ---------------------------------------------------------------------------
// affine projection machinery for the convex variants

namespace {

// Orthonormalized equality system Qx = c built from raw rows by modified
// Gram-Schmidt; dependent rows are dropped, inconsistent ones rejected.
struct AffineProjector {
  std::size_t dim = 0;
  std::vector<std::vector<double>> q;
  std::vector<double> c;
  bool feasible = true;

  void add_row(std::vector<double> row, double rhs) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double dot = std::inner_product(row.begin(), row.end(), q[i].begin(), 0.0);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] -= dot * q[i][j];
      rhs -= dot * c[i];
    }
    const double norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
    if (norm < 1e-10) {
      if (std::abs(rhs) > 1e-8) feasible = false;  // inconsistent equalities
      return;
    }
    for (double& v : row) v /= norm;
    q.push_back(std::move(row));
    c.push_back(rhs / norm);
  }

  void project(std::vector<double>& x) const {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double dot = std::inner_product(x.begin(), x.end(), q[i].begin(), 0.0) - c[i];
      for (std::size_t j = 0; j < x.size(); ++j) x[j] -= dot * q[i][j];
    }
  }

  double residual(std::span<const double> x) const {
    double r = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double dot = std::inner_product(x.begin(), x.end(), q[i].begin(), 0.0) - c[i];
      r = std::max(r, std::abs(dot));
    }
    return r;
  }
};

// Dykstra's alternating projection onto {Qx = c} intersect {x >= 0}.
void project_polytope(const AffineProjector& aff, std::vector<double>& x, int max_iter = 300,
                      double tol = 1e-13) {
  const std::size_t n = x.size();
  std::vector<double> corr(n, 0.0);  // correction for the orthant step
  std::vector<double> prev(n);
  for (int it = 0; it < max_iter; ++it) {
    prev = x;
    aff.project(x);  // affine sets need no correction term
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = x[i] + corr[i];
      const double clipped = std::max(y, 0.0);
      corr[i] = y - clipped;
      delta = std::max(delta, std::abs(clipped - prev[i]));
      x[i] = clipped;
    }
    if (delta < tol) break;
  }
  aff.project(x);
  for (double& v : x) v = std::max(v, 0.0);
}

// One convex inner problem: minimize kl-term(lambda) - R * entropy-gap(lambda)
// over the variant polytope.
struct InnerContext {
  const BoundProblem& p;
  bool is2d = false;
  std::size_t S = 0;  // pattern count
  std::size_t M = 0;  // variables
  int nx = 0;
  // per variable: output index of the row/column pattern
  std::vector<int> xi, xj;
  // contiguous: prefix bucket of each pair; 2d: ones fraction per pattern
  std::vector<std::size_t> bucket;
  std::size_t buckets = 0;
  std::vector<double> ones_frac;
  std::vector<double> dvec;  // distortion functional
  Matrix P;                  // fixed for contiguous
  double denom_const = 0.0;  // contiguous: conditional entropy of the marginal
  AffineProjector base;      // equality rows without the distortion row
  AffineProjector tight;     // with the distortion row as equality
  std::vector<double> center_base, center_tight;

  explicit InnerContext(const BoundProblem& prob) : p(prob) {
    const SensorClass& cls = p.model.cls();
    is2d = p.variant == Variant::grid2d;
    const int V = p.model.alphabet;
    const int order = p.model.type_order();
    S = ipow(V, order);
    M = S * S;
    nx = cls.psi.num_outputs();

    xi.resize(M);
    xj.resize(M);
    for (std::size_t a = 0; a < S; ++a)
      for (std::size_t b = 0; b < S; ++b) {
        xi[a * S + b] = cls.psi.output_index(a);
        xj[a * S + b] = cls.psi.output_index(b);
      }

    dvec.assign(M, 0.0);
    if (is2d) {
      ones_frac.resize(S);
      for (std::size_t a = 0; a < S; ++a)
        ones_frac[a] = static_cast<double>(__builtin_popcountll(a)) / order;
      for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = 0; b < S; ++b)
          dvec[a * S + b] =
              static_cast<double>(__builtin_popcountll(a ^ b)) / order;
    } else {
      const std::size_t tail = ipow(V, order - 1);
      for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = 0; b < S; ++b)
          dvec[a * S + b] = (a / tail) != (b / tail) ? 1.0 : 0.0;
    }

    if (!is2d) {
      const TypeHistogram gamma = uniform_type(order, V);
      P = pxy(p.model, gamma);
      denom_const = std::log2(static_cast<double>(V));
      const std::size_t sp = ipow(V, order - 1);
      buckets = sp * sp;
      bucket.resize(M);
      for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = 0; b < S; ++b)
          bucket[a * S + b] = (a / V) * sp + (b / V);
    }

    build_equalities();
    build_centers();
  }

  void build_equalities() {
    const int V = p.model.alphabet;
    const int order = p.model.type_order();
    base.dim = M;
    base.add_row(std::vector<double>(M, 1.0), 1.0);
    if (!is2d) {
      // uniform row marginal
      for (std::size_t a = 0; a < S; ++a) {
        std::vector<double> row(M, 0.0);
        for (std::size_t b = 0; b < S; ++b) row[a * S + b] = 1.0;
        base.add_row(std::move(row), 1.0 / static_cast<double>(S));
      }
      if (p.opts.shift_consistency && order > 1) {
        const std::size_t sp = ipow(V, order - 1);
        for (std::size_t ap = 0; ap < sp; ++ap) {
          for (std::size_t bp = 0; bp < sp; ++bp) {
            std::vector<double> row(M, 0.0);
            for (int a = 0; a < V; ++a) {
              for (int b = 0; b < V; ++b) {
                // prepended-first-symbol mass minus appended-last-symbol mass
                row[(a * sp + ap) * S + (b * sp + bp)] += 1.0;
                row[(ap * V + a) * S + (bp * V + b)] -= 1.0;
              }
            }
            base.add_row(std::move(row), 0.0);
          }
        }
      }
    } else {
      std::vector<double> row(M, 0.0);
      for (std::size_t a = 0; a < S; ++a)
        for (std::size_t b = 0; b < S; ++b) row[a * S + b] = ones_frac[a];
      base.add_row(std::move(row), 0.5);
    }
    require(base.feasible, errc::empty_feasible_set, "equality constraints are inconsistent");
    tight = base;
    tight.add_row(dvec, p.distortion);
    // The tight system can only become infeasible for distortion outside the
    // polytope's reach; flagged later if that phase is actually needed.
  }

  void build_centers() {
    const int V = p.model.alphabet;
    // Interior feasible point: blend the uniform pair distribution toward the
    // fully-mismatched one until the distortion constraint holds with slack.
    std::vector<double> uniform(M, 1.0 / static_cast<double>(M));
    std::vector<double> swapped(M, 0.0);
    if (!is2d) {
      for (std::size_t a = 0; a < S; ++a) {
        // partner pattern with every symbol shifted by one alphabet step
        std::size_t b = 0, ra = a;
        std::vector<int> digits(p.model.type_order());
        for (int u = p.model.type_order(); u-- > 0;) {
          digits[u] = static_cast<int>(ra % V);
          ra /= V;
        }
        for (int u = 0; u < p.model.type_order(); ++u) b = b * V + (digits[u] + 1) % V;
        swapped[a * S + b] = 1.0 / static_cast<double>(S);
      }
    } else {
      for (std::size_t a = 0; a < S; ++a) swapped[a * S + (S - 1 - a)] = 1.0 / static_cast<double>(S);
    }
    const double off_uni = std::inner_product(uniform.begin(), uniform.end(), dvec.begin(), 0.0);
    const double off_swp = std::inner_product(swapped.begin(), swapped.end(), dvec.begin(), 0.0);
    double theta = 0.0;
    const double target = std::min(p.distortion + 0.02, 0.999);
    if (target > off_uni && off_swp > off_uni) {
      theta = std::min((target - off_uni) / (off_swp - off_uni), 1.0 - 1e-6);
    }
    center_base.resize(M);
    for (std::size_t e = 0; e < M; ++e) center_base[e] = (1.0 - theta) * uniform[e] + theta * swapped[e];
    project_polytope(base, center_base);

    center_tight = center_base;
    project_polytope(tight, center_tight);
    // keep strictly interior starts so the divergence terms stay finite
    for (double& v : center_base) v = std::max(v, 0.0);
    for (double& v : center_tight) v = std::max(v, 0.0);
  }

  JointType to_joint(std::span<const double> x) const {
    JointType l{p.model.type_order(), p.model.alphabet, !is2d,
                std::vector<double>(x.begin(), x.end()), std::nullopt};
    return l;
  }

  // numerator and entropy gap (plus gradients) at a feasible interior point
  double value(std::span<const double> x, double rate, std::vector<double>* grad) const {
    const SensorClass& cls = p.model.cls();
    if (grad) grad->assign(M, 0.0);

    std::vector<double> q(static_cast<std::size_t>(nx) * nx, 0.0);
    std::vector<double> pmat;
    const double* pdata = nullptr;
    std::vector<double> rowsum;  // 2d: row-marginal pattern type

    if (is2d) {
      rowsum.assign(S, 0.0);
      for (std::size_t a = 0; a < S; ++a) {
        const double* lrow = x.data() + a * S;
        double s = 0.0;
        for (std::size_t b = 0; b < S; ++b) s += lrow[b];
        rowsum[a] = s;
      }
      pmat.assign(static_cast<std::size_t>(nx) * nx, 0.0);
      std::vector<double> px(nx, 0.0);
      for (std::size_t a = 0; a < S; ++a) px[cls.psi.output_index(a)] += rowsum[a];
      for (int xo = 0; xo < nx; ++xo)
        for (int y = 0; y < nx; ++y) pmat[static_cast<std::size_t>(xo) * nx + y] = px[xo] * cls.noise.at(xo, y);
      pdata = pmat.data();
    } else {
      pdata = P.a.data();
    }

    for (std::size_t e = 0; e < M; ++e) {
      const double w = x[e];
      if (w == 0.0) continue;
      const int xo = xi[e];
      const std::span<const double> wrow = cls.noise.row(xj[e]);
      double* qrow = q.data() + static_cast<std::size_t>(xo) * nx;
      for (int y = 0; y < nx; ++y) qrow[y] += w * wrow[y];
    }

    double kl = 0.0;
    for (int xo = 0; xo < nx; ++xo) {
      for (int y = 0; y < nx; ++y) {
        const double pv = pdata[static_cast<std::size_t>(xo) * nx + y];
        if (pv <= 0.0) continue;
        const double qv = q[static_cast<std::size_t>(xo) * nx + y];
        if (qv <= 0.0) return kInf;
        kl += pv * std::log2(pv / qv);
      }
    }

    double denom;
    double s1 = 0.0;
    if (is2d) {
      // ones fraction of the column marginal
      for (std::size_t e = 0; e < M; ++e) s1 += x[e] * ones_frac[e % S];
      denom = binary_entropy_bits(s1);
    } else {
      double h = 0.0;
      for (std::size_t e = 0; e < M; ++e) h -= xlog2x(x[e]);
      std::vector<double> pref(buckets, 0.0);
      for (std::size_t e = 0; e < M; ++e) pref[bucket[e]] += x[e];
      double hp = 0.0;
      for (double v : pref) hp -= xlog2x(v);
      denom = h - hp - denom_const;
      if (grad) {
        for (std::size_t e = 0; e < M; ++e)
          (*grad)[e] -= rate * (log2_grad_clamped(pref[bucket[e]]) - log2_grad_clamped(x[e]));
      }
    }

    if (grad) {
      // divergence part
      if (!is2d) {
        // T(x, xout) = sum_y (P/Q)(x,y) W(y|xout)
        std::vector<double> t(static_cast<std::size_t>(nx) * nx, 0.0);
        for (int xo = 0; xo < nx; ++xo) {
          for (int y = 0; y < nx; ++y) {
            const double pv = pdata[static_cast<std::size_t>(xo) * nx + y];
            if (pv <= 0.0) continue;
            const double ratio = pv / std::max(q[static_cast<std::size_t>(xo) * nx + y], 1e-300);
            for (int xout = 0; xout < nx; ++xout)
              t[static_cast<std::size_t>(xo) * nx + xout] += ratio * cls.noise.at(xout, y);
          }
        }
        for (std::size_t e = 0; e < M; ++e)
          (*grad)[e] += -t[static_cast<std::size_t>(xi[e]) * nx + xj[e]] / kLn2;
      } else {
        // A(x) = sum_y W(y|x)(log2(P/Q)+1/ln2); B(x,xout) = sum_y (P/Q)W(y|xout)/ln2
        std::vector<double> aterm(nx, 0.0);
        std::vector<double> bterm(static_cast<std::size_t>(nx) * nx, 0.0);
        for (int xo = 0; xo < nx; ++xo) {
          for (int y = 0; y < nx; ++y) {
            const double pv = pdata[static_cast<std::size_t>(xo) * nx + y];
            const double qv = q[static_cast<std::size_t>(xo) * nx + y];
            const double wxy = cls.noise.at(xo, y);
            if (wxy > 0.0)
              aterm[xo] += wxy * (log2_grad_clamped(pv) - log2_grad_clamped(qv) + 1.0 / kLn2);
            if (pv <= 0.0) continue;
            const double ratio = pv / std::max(qv, 1e-300);
            for (int xout = 0; xout < nx; ++xout)
              bterm[static_cast<std::size_t>(xo) * nx + xout] += ratio * cls.noise.at(xout, y) / kLn2;
          }
        }
        const double dH2 = std::log2(std::max(1.0 - s1, 1e-12)) - std::log2(std::max(s1, 1e-12));
        for (std::size_t e = 0; e < M; ++e) {
          (*grad)[e] += aterm[xi[e]] - bterm[static_cast<std::size_t>(xi[e]) * nx + xj[e]];
          (*grad)[e] -= rate * dH2 * ones_frac[e % S];
        }
      }
    }
    return kl - rate * denom;
  }
};

struct InnerSolveResult {
  double fmin = kInf;
  std::vector<double> x;
  double grad_norm = kInf;
  bool converged = false;
  long long evals = 0;
};

// Accelerated projected gradient (FISTA with function-value restart). The
// entropy terms make plain projected descent zigzag near the boundary; the
// momentum form reaches the bisection-level accuracy in a few hundred steps.
// stop_below: once f drops clearly below it the sign of the minimum is
// settled, which is all the rate bisection needs from a negative solve.
InnerSolveResult pgd_minimize(const InnerContext& ctx, const AffineProjector& aff,
                              std::vector<double> x, double rate, const SolverOptions& opts,
                              double stop_below = -kInf) {
  InnerSolveResult res;
  const std::size_t n = x.size();
  project_polytope(aff, x);
  std::vector<double> g(n), y(n), z(n), xprev(n);
  double fx = ctx.value(x, rate, nullptr);
  ++res.evals;
  if (!std::isfinite(fx)) {
    // nudge toward the interior center until finite
    const std::vector<double>& center = &aff == &ctx.tight ? ctx.center_tight : ctx.center_base;
    for (int tries = 0; tries < 60 && !std::isfinite(fx); ++tries) {
      for (std::size_t i = 0; i < n; ++i) x[i] = 0.5 * x[i] + 0.5 * center[i];
      fx = ctx.value(x, rate, nullptr);
      ++res.evals;
    }
    if (!std::isfinite(fx)) {
      res.x = std::move(x);
      return res;
    }
  }

  y = x;
  xprev = x;
  double t = 0.5;
  double theta = 1.0;
  int stagnant = 0;
  for (int it = 0; it < opts.inner_max_iters; ++it) {
    double fy = ctx.value(y, rate, &g);
    ++res.evals;
    if (!std::isfinite(fy)) {  // extrapolation reached the boundary: restart
      y = x;
      theta = 1.0;
      fy = ctx.value(y, rate, &g);
      ++res.evals;
    }

    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) z[i] = y[i] - t * g[i];
      project_polytope(aff, z);
      double quad = 0.0, lin = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = z[i] - y[i];
        quad += d * d;
        lin += g[i] * d;
      }
      const double fz = ctx.value(z, rate, nullptr);
      ++res.evals;
      if (std::isfinite(fz) && fz <= fy + lin + quad / (2.0 * t) + 1e-14) {
        res.grad_norm = std::sqrt(quad) / t;
        if (fz > fx + 1e-14) accepted = false;  // momentum overshoot
        else {
          accepted = true;
          xprev.swap(x);
          x = z;
          stagnant = fx - fz <= 1e-13 * (1.0 + std::abs(fz)) ? stagnant + 1 : 0;
          fx = fz;
        }
        break;
      }
      t *= 0.5;
      if (t < 1e-14) break;
    }

    if (!accepted) {
      if (theta > 1.0) {  // drop momentum and retry from the incumbent
        y = x;
        theta = 1.0;
        continue;
      }
      // no descent from the incumbent at machine precision: stationary
      res.converged = true;
      break;
    }
    if (fx < stop_below) break;  // sign settled
    if (res.grad_norm <= opts.inner_grad_tol || stagnant >= 25) {
      res.converged = true;
      break;
    }
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const double beta = (theta - 1.0) / theta_next;
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + beta * (x[i] - xprev[i]);
    project_polytope(aff, y);
    theta = theta_next;
    t = std::min(t * 1.4, 64.0);
  }
  res.fmin = fx;
  res.x = std::move(x);
  return res;
}

struct InnerBest {
  double fmin = kInf;            // best function value over all starts
  std::vector<double> x;         // witness for fmin
  double fmin_converged = kInf;  // best value among converged starts
  double grad_norm = kInf;
  int converged = 0;
  long long evals = 0;
};

InnerBest inner_minimize(const InnerContext& ctx, double rate, const SolverOptions& opts,
                         double stop_below) {
  InnerBest best;
  std::vector<std::vector<double>> starts;
  starts.push_back(ctx.center_base);
  Rng rng(opts.seed ^ 0x1ce50111u);
  for (int s = 0; s < opts.multistart; ++s) {
    std::vector<double> x(ctx.M);
    for (auto& v : x) v = -std::log(std::max(rng.unit(), 1e-12));
    double sum = std::accumulate(x.begin(), x.end(), 0.0);
    for (auto& v : x) v /= sum;
    starts.push_back(std::move(x));
  }

  for (const auto& start : starts) {
    InnerSolveResult a = pgd_minimize(ctx, ctx.base, start, rate, opts, stop_below);
    best.evals += a.evals;
    const double off = std::inner_product(a.x.begin(), a.x.end(), ctx.dvec.begin(), 0.0);
    InnerSolveResult* pick = nullptr;
    InnerSolveResult b;
    if (off >= ctx.p.distortion - 1e-9) {
      pick = &a;
    } else {
      require(ctx.tight.feasible, errc::empty_feasible_set,
              "distortion constraint incompatible with the marginal equalities");
      b = pgd_minimize(ctx, ctx.tight, start, rate, opts, stop_below);
      best.evals += b.evals;
      pick = &b;
    }
    if (pick->converged) {
      ++best.converged;
      best.fmin_converged = std::min(best.fmin_converged, pick->fmin);
    }
    if (pick->fmin < best.fmin ||
        (pick->fmin == best.fmin && pick->x < best.x)) {  // deterministic tie-break
      best.fmin = pick->fmin;
      best.x = pick->x;
      best.grad_norm = pick->grad_norm;
    }
    if (best.fmin < stop_below) break;  // sign settled; remaining starts moot
  }
  return best;
}

}  // namespace

double bisect_inner_objective(const BoundProblem& p, const JointType& lambda, double rate,
                              std::vector<double>* grad) {
  require(p.variant == Variant::contiguous || p.variant == Variant::grid2d,
          errc::invalid_argument, "inner objective covers the contiguous and 2d variants");
  const InnerContext ctx(p);
  require(lambda.probs.size() == ctx.M, errc::order_mismatch, "joint type has the wrong dimension");
  return ctx.value(lambda.probs, rate, grad);
}

BoundResult clb_bisect(const BoundProblem& p) {
  require(p.variant == Variant::contiguous || p.variant == Variant::grid2d,
          errc::invalid_argument, "bisection solver covers the contiguous and 2d variants");
  const InnerContext ctx(p);
  require(ctx.base.feasible, errc::empty_feasible_set, "constraint system inconsistent");

  const int order = p.model.type_order();
  double lo = 0.0;
  double hi = order * std::log2(static_cast<double>(p.model.alphabet));

  BoundResult out;
  out.distortion = p.distortion;
  out.variant = p.variant;
  out.diag.method = "bisect";

  // Each bisection step needs only the sign of the inner minimum. A negative
  // function value certifies by itself; a positive claim needs a converged
  // start (the problem is convex). Inconclusive steps lower the rate, which
  // keeps the reported value on the sound side of the bound.
  InnerBest witness;
  bool have_witness = false;
  int certificates = 0;
  int inconclusive = 0;

  auto probe = [&](double rate) {
    const double stop_below = -1e-6 * (1.0 + rate);
    InnerBest r = inner_minimize(ctx, rate, p.opts, stop_below);
    out.diag.evaluations += r.evals;
    out.diag.starts += p.opts.multistart + 1;
    out.diag.converged_starts += r.converged;
    out.diag.grad_norm = r.grad_norm;
    return r;
  };

  InnerBest top = probe(hi);
  bool cap_binds = false;
  if (top.fmin < 0.0) {
    ++certificates;
    witness = std::move(top);
    have_witness = true;
  } else if (top.converged > 0) {
    ++certificates;
    cap_binds = true;  // even the raw per-sensor information rate is achievable
    witness = std::move(top);
    have_witness = true;
    lo = hi;
  } else {
    ++inconclusive;
  }

  if (!cap_binds) {
    while (hi - lo > p.opts.bisect_tol) {
      const double mid = 0.5 * (lo + hi);
      InnerBest r = probe(mid);
      if (r.fmin < 0.0) {
        ++certificates;
        hi = mid;
        witness = std::move(r);
        have_witness = true;
      } else if (r.converged > 0 && r.fmin_converged > 0.0) {
        ++certificates;
        lo = mid;
      } else {
        ++inconclusive;
        hi = mid;
      }
    }
  }

  if (certificates == 0) {
    fail(errc::inner_solver_diverged,
         "no bisection step produced a certificate (last grad_norm=" +
             std::to_string(out.diag.grad_norm) + ", inconclusive=" +
             std::to_string(inconclusive) + ")");
  }

  out.diag.inconclusive_steps = inconclusive;
  out.diag.bracket_lo = lo;
  out.diag.bracket_hi = hi;
  out.clb = 0.5 * (lo + hi);
  if (cap_binds) out.clb = hi;
  if (have_witness) {
    out.minimizer = ctx.to_joint(witness.x);
    const RatioParts parts = objective_parts(p, out.minimizer);
    out.numerator = parts.numerator;
    out.denominator = parts.denominator;
  }
  return out;
}

BoundResult compute_bound(const BoundProblem& p) {
  return is_grid_variant(p.variant) ? clb_grid(p) : clb_bisect(p);
}

// ---------------------------------------------------------------------------
// error exponents

double pair_error_exponent(const ModelSpec& m, double rho, const TypeHistogram& gamma,
                           const JointType& lambda) {
  require(rho >= 0.0 && rho <= 1.0, errc::invalid_argument, "rho must lie in [0, 1]");
  require(!m.has_mixture(), errc::invalid_argument, "exponent defined for single-class models");
  const SensorClass& cls = m.cls();
  const std::vector<double> px = output_dist(m, gamma);
  const Matrix joint = joint_output_dist(m, lambda);
  const int nx = cls.psi.num_outputs();

  std::vector<double> row(nx, 0.0);
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < nx; ++b) row[a] += joint.at(a, b);
  for (int a = 0; a < nx; ++a) {
    if (px[a] > 1e-15 && row[a] <= 1e-15)
      fail(errc::conditional_undefined, "joint type marginal vanishes where the type does not");
  }

  const double inv = 1.0 / (1.0 + rho);
  std::vector<double> wpow(static_cast<std::size_t>(nx) * nx);
  for (int a = 0; a < nx; ++a)
    for (int y = 0; y < nx; ++y)
      wpow[static_cast<std::size_t>(a) * nx + y] = std::pow(cls.noise.at(a, y), inv);

  double total = 0.0;
  for (int ai = 0; ai < nx; ++ai) {
    if (px[ai] <= 0.0) continue;
    for (int y = 0; y < nx; ++y) {
      double inner = 0.0;
      for (int aj = 0; aj < nx; ++aj) {
        if (joint.at(ai, aj) <= 0.0) continue;
        inner += joint.at(ai, aj) / row[ai] * wpow[static_cast<std::size_t>(aj) * nx + y];
      }
      total += px[ai] * wpow[static_cast<std::size_t>(ai) * nx + y] * std::pow(inner, rho);
    }
  }
  return -std::log2(total);
}

namespace {

double exponent_margin(const BoundProblem& p, const GridEval& ev, double rate, double rho,
                       const JointType& lambda) {
  const double e = pair_error_exponent(p.model, rho, ev.gamma, lambda);
  const double denom = grid_denominator(p, lambda);
  return e - rho * rate * denom;
}

}  // namespace

ExponentResult random_coding_exponent(const BoundProblem& p, double rate) {
  require(is_grid_variant(p.variant), errc::invalid_argument,
          "random-coding exponent covers the order-1 variants");
  require(p.variant != Variant::heterogeneous, errc::invalid_argument,
          "exponent defined for single-class models");
  const GridEval ev(p);
  const int V = p.model.alphabet;
  const int dims = V * (V - 1);
  const int N = std::max(2, std::min(p.opts.grid_points, 80));

  std::vector<double> budget(dims);
  {
    int f = 0;
    for (int a = 0; a < V; ++a)
      for (int b = 0; b < V; ++b)
        if (b != a) budget[f++] = ev.gamma.probs[static_cast<std::size_t>(a)];
  }

  constexpr int kRhoPoints = 64;
  JointType lambda{1, V, true, std::vector<double>(static_cast<std::size_t>(V) * V, 0.0),
                   std::nullopt};
  ExponentResult out;
  out.gamma = ev.gamma;
  double best_margin = kInf;
  JointType best_lambda = lambda;
  double best_rho = 1.0 / kRhoPoints;

  std::vector<int> idx(dims, 0);
  std::vector<double> free(dims, 0.0);
  for (;;) {
    for (int i = 0; i < dims; ++i) free[i] = budget[i] * idx[i] / (N - 1);
    if (ev.build(free, lambda)) {
      // tilt grid excludes rho = 0, whose margin is identically zero
      double lam_best = -kInf, lam_rho = best_rho;
      for (int r = 1; r <= kRhoPoints; ++r) {
        const double rho = static_cast<double>(r) / kRhoPoints;
        const double m = exponent_margin(p, ev, rate, rho, lambda);
        if (m > lam_best) {
          lam_best = m;
          lam_rho = rho;
        }
      }
      if (lam_best < best_margin) {
        best_margin = lam_best;
        best_lambda = lambda;
        best_rho = lam_rho;
      }
    }
    int d = 0;
    while (d < dims && ++idx[d] == N) idx[d++] = 0;
    if (d == dims) break;
  }

  // golden-section polish of the tilt at the minimizing joint type
  {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = std::max(best_rho - 1.0 / kRhoPoints, 1e-6);
    double b = std::min(best_rho + 1.0 / kRhoPoints, 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = exponent_margin(p, ev, rate, x1, best_lambda);
    double f2 = exponent_margin(p, ev, rate, x2, best_lambda);
    for (int it = 0; it < 40; ++it) {
      if (f1 < f2) {  // maximize
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = exponent_margin(p, ev, rate, x2, best_lambda);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = exponent_margin(p, ev, rate, x1, best_lambda);
      }
    }
    const double rho = 0.5 * (a + b);
    const double m = exponent_margin(p, ev, rate, rho, best_lambda);
    if (m > best_margin) {
      best_margin = m;
      best_rho = rho;
    }
  }

  out.rho = best_rho;
  out.lambda = best_lambda;
  out.E_value = pair_error_exponent(p.model, best_rho, ev.gamma, best_lambda);
  out.Er_value = best_margin;
  return out;
}

// ---------------------------------------------------------------------------
// sweeps

const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::distortion: return "D";
    case SweepAxis::noise_p: return "noise_p";
    case SweepAxis::range: return "c";
    case SweepAxis::rate: return "rate";
  }
  return "?";
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "D" || name == "distortion") return SweepAxis::distortion;
  if (name == "noise_p" || name == "p" || name == "noise") return SweepAxis::noise_p;
  if (name == "c" || name == "range") return SweepAxis::range;
  if (name == "rate" || name == "R") return SweepAxis::rate;
  fail(errc::invalid_argument, "unknown sweep axis '" + name + "'");
}

std::vector<double> linspace(double from, double to, int points) {
  require(points >= 1, errc::invalid_argument, "grid needs at least one point");
  std::vector<double> g(points);
  if (points == 1) {
    g[0] = from;
    return g;
  }
  for (int i = 0; i < points; ++i) g[i] = from + (to - from) * i / (points - 1);
  return g;
}

namespace {

BoundProblem problem_at(const BoundProblem& base, SweepAxis axis, double value) {
  BoundProblem p = base;
  switch (axis) {
    case SweepAxis::distortion:
      p.distortion = value;
      break;
    case SweepAxis::noise_p: {
      for (auto& cls : p.model.classes) {
        require(cls.noise_spec.kind == NoiseSpec::Kind::exponential, errc::invalid_argument,
                "noise sweep requires an exponential noise spec");
        cls.noise_spec.p = value;
        cls.noise = build_noise(cls.noise_spec, cls.psi.num_outputs());
      }
      break;
    }
    case SweepAxis::range: {
      const int c = static_cast<int>(std::llround(value));
      require(c >= 1, errc::invalid_argument, "range must be >= 1");
      for (auto& cls : p.model.classes) {
        require(cls.psi.kind == PsiKind::sum, errc::invalid_argument,
                "range sweep supports the sum sensing function");
        cls.range = c;
        cls.psi = SensingFunction::sum(c, p.model.alphabet);
        cls.noise = build_noise(cls.noise_spec, cls.psi.num_outputs());
      }
      break;
    }
    case SweepAxis::rate:
      break;
  }
  return p;
}

}  // namespace

SweepResult sweep(const BoundProblem& p, SweepAxis axis, const std::vector<double>& grid) {
  require(!grid.empty(), errc::invalid_argument, "sweep grid is empty");
  SweepResult out;
  out.axis = axis;
  out.rows.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    if (interrupt_flag().load()) return;
    SweepRow& row = out.rows[i];
    row.value = grid[i];
    if (axis == SweepAxis::rate) {
      const ExponentResult er = random_coding_exponent(p, grid[i]);
      row.bound.clb = er.Er_value;  // exponent margin at this rate
      row.bound.minimizer = er.lambda;
      row.bound.variant = p.variant;
      row.bound.distortion = p.distortion;
      row.bound.diag.method = "exponent";
    } else {
      row.bound = compute_bound(problem_at(p, axis, grid[i]));
    }
  });

  const double tol = 1e-6;
  if (axis == SweepAxis::distortion) {
    for (std::size_t i = 1; i < out.rows.size(); ++i) {
      if (out.rows[i].bound.clb < out.rows[i - 1].bound.clb - tol) {
        out.monotone_ok = false;
        out.monotone_note = "clb decreased along the distortion axis";
        break;
      }
    }
  } else if (axis == SweepAxis::noise_p) {
    for (std::size_t i = 1; i < out.rows.size(); ++i) {
      if (out.rows[i].bound.clb > out.rows[i - 1].bound.clb + tol) {
        out.monotone_ok = false;
        out.monotone_note = "clb increased along the noise axis";
        break;
      }
    }
  }
  return out;
}

std::optional<double> find_crossover(const SweepResult& a, const SweepResult& b) {
  require(a.rows.size() == b.rows.size() && a.axis == b.axis, errc::invalid_argument,
          "crossover needs sweeps on a shared grid");
  for (std::size_t i = 1; i < a.rows.size(); ++i) {
    require(std::abs(a.rows[i].value - b.rows[i].value) <= 1e-12, errc::invalid_argument,
            "crossover needs sweeps on a shared grid");
    const double d0 = a.rows[i - 1].bound.clb - b.rows[i - 1].bound.clb;
    const double d1 = a.rows[i].bound.clb - b.rows[i].bound.clb;
    if (d0 == 0.0) return a.rows[i - 1].value;
    if ((d0 < 0.0) != (d1 < 0.0)) {
      const double t = d0 / (d0 - d1);
      return a.rows[i - 1].value + t * (a.rows[i].value - a.rows[i - 1].value);
    }
  }
  return std::nullopt;
}

ReplicationResult replication_comparison(const BoundProblem& p, int replication_factor) {
  require(replication_factor >= 1 && replication_factor % 2 == 1, errc::even_replication,
          "replication factor must be odd");
  require(!p.model.has_mixture(), errc::invalid_argument,
          "replication analysis covers single-class models");
  const NoiseSpec& spec = p.model.cls().noise_spec;
  require(spec.kind == NoiseSpec::Kind::exponential, errc::invalid_argument,
          "replication analysis needs an exponential noise spec");

  const int m = replication_factor;
  const double pe = spec.p;
  double p_eff = 0.0;
  for (int j = (m + 1) / 2; j <= m; ++j) {
    p_eff += static_cast<double>(binomial_exact(m, j)) * std::pow(pe, j) *
             std::pow(1.0 - pe, m - j);
  }

  ReplicationResult out;
  out.factor = m;
  out.p_eff = p_eff;
  out.direct = compute_bound(p);
  BoundProblem rep = p;
  for (auto& cls : rep.model.classes) {
    cls.noise_spec.p = p_eff;
    cls.noise = build_noise(cls.noise_spec, cls.psi.num_outputs());
  }
  out.replicated = compute_bound(rep);
  out.rate_direct = out.direct.clb;
  out.rate_replicated = out.replicated.clb / m;
  return out;
}

}  // namespace senscap
