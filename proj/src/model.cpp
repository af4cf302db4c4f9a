#include "senscap/model.hpp"

#include <algorithm>
#include <cmath>

namespace senscap {

namespace {

constexpr double kMergeTol = 1e-9;

std::vector<int> digits_of(std::size_t pattern, int len, int alphabet) {
  std::vector<int> d(len);
  for (int u = len; u-- > 0;) {
    d[u] = static_cast<int>(pattern % alphabet);
    pattern /= alphabet;
  }
  return d;
}

SensingFunction finish(PsiKind kind, int range, int alphabet, std::vector<double> weights,
                       const std::vector<double>& raw_values) {
  SensingFunction f;
  f.kind = kind;
  f.range = range;
  f.alphabet = alphabet;
  f.weights = std::move(weights);

  std::vector<double> sorted = raw_values;
  std::sort(sorted.begin(), sorted.end());
  f.output_values.clear();
  for (double v : sorted) {
    if (f.output_values.empty() || v - f.output_values.back() > kMergeTol) f.output_values.push_back(v);
  }
  f.pattern_output.resize(raw_values.size());
  for (std::size_t i = 0; i < raw_values.size(); ++i) {
    const auto it = std::lower_bound(f.output_values.begin(), f.output_values.end(),
                                     raw_values[i] - kMergeTol);
    f.pattern_output[i] = static_cast<int>(it - f.output_values.begin());
  }
  return f;
}

}  // namespace

SensingFunction SensingFunction::sum(int range, int alphabet) {
  require(range >= 1 && range <= kMaxStencilCells, errc::dimension_too_large, "psi range out of range");
  const std::size_t n = ipow(alphabet, range);
  std::vector<double> vals(n);
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int d : digits_of(p, range, alphabet)) s += d;
    vals[p] = s;
  }
  return finish(PsiKind::sum, range, alphabet, {}, vals);
}

SensingFunction SensingFunction::weighted_sum(std::vector<double> weights, int alphabet) {
  const int range = static_cast<int>(weights.size());
  require(range >= 1 && range <= kMaxStencilCells, errc::dimension_too_large, "psi range out of range");
  const std::size_t n = ipow(alphabet, range);
  std::vector<double> vals(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::vector<int> d = digits_of(p, range, alphabet);
    double s = 0.0;
    for (int u = 0; u < range; ++u) s += weights[u] * d[u];
    vals[p] = s;
  }
  return finish(PsiKind::weighted_sum, range, alphabet, std::move(weights), vals);
}

SensingFunction SensingFunction::lookup(std::vector<double> values, int range, int alphabet) {
  require(range >= 1 && range <= kMaxStencilCells, errc::dimension_too_large, "psi range out of range");
  require(values.size() == ipow(alphabet, range), errc::invalid_argument,
          "lookup table must cover every pattern");
  return finish(PsiKind::lookup, range, alphabet, {}, values);
}

void NoiseChannel::validate(double tol) const {
  require(size >= 1 && w.size() == static_cast<std::size_t>(size) * size, errc::invalid_argument,
          "channel matrix must be square");
  for (int x = 0; x < size; ++x) {
    double s = 0.0;
    for (int y = 0; y < size; ++y) {
      require(at(x, y) >= -tol, errc::invalid_probability, "negative channel entry");
      s += at(x, y);
    }
    require(std::abs(s - 1.0) <= 1e-12 * size, errc::invalid_probability, "channel row must sum to 1");
  }
}

NoiseChannel identity_channel(int size) {
  NoiseChannel w{size, std::vector<double>(static_cast<std::size_t>(size) * size, 0.0)};
  for (int x = 0; x < size; ++x) w.at(x, x) = 1.0;
  return w;
}

NoiseChannel make_exponential_noise(double p, int alphabet_size, double decay) {
  require(p >= 0.0 && p < 1.0, errc::invalid_probability, "noise level must satisfy 0 <= p < 1");
  require(decay >= 1.0, errc::invalid_argument, "decay base must be >= 1");
  require(alphabet_size >= 1, errc::invalid_argument, "channel needs a nonempty alphabet");
  if (p == 0.0 || alphabet_size == 1) {
    require(p == 0.0 || alphabet_size > 1, errc::invalid_probability,
            "nonzero noise needs at least two outputs");
    return identity_channel(alphabet_size);
  }
  NoiseChannel w{alphabet_size, std::vector<double>(static_cast<std::size_t>(alphabet_size) * alphabet_size, 0.0)};
  for (int x = 0; x < alphabet_size; ++x) {
    double z = 0.0;
    for (int y = 0; y < alphabet_size; ++y)
      if (y != x) z += std::pow(decay, -std::abs(y - x));
    for (int y = 0; y < alphabet_size; ++y)
      w.at(x, y) = (y == x) ? 1.0 - p : p * std::pow(decay, -std::abs(y - x)) / z;
  }
  return w;
}

NoiseChannel build_noise(const NoiseSpec& spec, int alphabet_size) {
  if (spec.kind == NoiseSpec::Kind::exponential) return make_exponential_noise(spec.p, alphabet_size, spec.decay);
  NoiseChannel w;
  w.size = static_cast<int>(spec.rows.size());
  require(w.size == alphabet_size, errc::invalid_argument, "channel size must match output alphabet");
  for (const auto& row : spec.rows) {
    require(static_cast<int>(row.size()) == w.size, errc::invalid_argument, "channel matrix must be square");
    w.w.insert(w.w.end(), row.begin(), row.end());
  }
  w.validate();
  return w;
}

std::vector<std::pair<int, int>> coverage_stencil(double radius) {
  require(radius >= 0.0, errc::invalid_argument, "radius must be >= 0");
  const int r = static_cast<int>(std::floor(radius));
  std::vector<std::pair<int, int>> cells;
  for (int dr = -r; dr <= r; ++dr)
    for (int dc = -r; dc <= r; ++dc)
      if (dr * dr + dc * dc <= radius * radius + 1e-9) cells.emplace_back(dr, dc);
  std::sort(cells.begin(), cells.end());
  require(cells.size() <= kMaxStencilCells, errc::dimension_too_large,
          "coverage stencil exceeds the dense cell cap");
  return cells;
}

void ModelSpec::validate() const {
  require(alphabet >= 2, errc::invalid_argument, "alphabet size must be >= 2");
  require(!classes.empty(), errc::no_mixture, "model has no sensor classes");
  double alpha_sum = 0.0;
  for (const auto& c : classes) {
    require(c.alpha > 0.0, errc::invalid_probability, "class weight must be positive");
    alpha_sum += c.alpha;
    require(c.psi.alphabet == alphabet, errc::alphabet_violation, "psi alphabet mismatch");
    c.noise.validate();
    require(c.noise.size == c.psi.num_outputs(), errc::invalid_argument,
            "channel size must match psi output alphabet");
    if (discipline == Discipline::contiguous2d) {
      require(!c.stencil.empty(), errc::invalid_argument, "2d class needs a stencil");
      require(c.psi.range == static_cast<int>(c.stencil.size()), errc::order_mismatch,
              "psi range must equal stencil cell count");
    } else {
      require(c.psi.range == c.range, errc::order_mismatch, "psi range must equal sensor range");
    }
  }
  require(std::abs(alpha_sum - 1.0) <= 1e-9, errc::invalid_probability, "class weights must sum to 1");
  if (prior) {
    require(static_cast<int>(prior->size()) == alphabet, errc::invalid_argument,
            "prior length must equal alphabet size");
    require(is_simplex(*prior, 1e-9), errc::invalid_probability, "prior must be a pmf");
  }
}

int ModelSpec::type_order(std::size_t cls_index) const {
  const SensorClass& c = cls(cls_index);
  switch (discipline) {
    case Discipline::arbitrary: return 1;
    case Discipline::contiguous1d: return c.range;
    case Discipline::contiguous2d: return static_cast<int>(c.stencil.size());
  }
  return 1;
}

// ---------------------------------------------------------------------------
// induced distributions

namespace {

void check_type_order(const ModelSpec& m, int order, int alphabet, std::size_t cls_index) {
  require(alphabet == m.alphabet, errc::alphabet_violation, "type alphabet mismatch");
  require(order == m.type_order(cls_index), errc::order_mismatch,
          "type order incompatible with discipline");
}

}  // namespace

std::vector<double> output_dist(const ModelSpec& m, const TypeHistogram& gamma,
                                std::size_t cls_index) {
  check_type_order(m, gamma.order, gamma.alphabet, cls_index);
  const SensorClass& c = m.cls(cls_index);
  std::vector<double> out(c.psi.num_outputs(), 0.0);
  const std::size_t patterns = c.psi.pattern_output.size();
  if (m.discipline == Discipline::arbitrary) {
    // connections land i.i.d. on positions, so a window is c i.i.d. symbols
    for (std::size_t p = 0; p < patterns; ++p) {
      double prob = 1.0;
      std::size_t rest = p;
      for (int u = 0; u < c.psi.range; ++u) {
        prob *= gamma.probs[rest % m.alphabet];
        rest /= m.alphabet;
      }
      out[c.psi.output_index(p)] += prob;
    }
  } else {
    for (std::size_t p = 0; p < patterns; ++p) out[c.psi.output_index(p)] += gamma.probs[p];
  }
  return out;
}

Matrix joint_output_dist(const ModelSpec& m, const JointType& lambda, std::size_t cls_index) {
  check_type_order(m, lambda.order, lambda.alphabet, cls_index);
  const SensorClass& c = m.cls(cls_index);
  const int nx = c.psi.num_outputs();
  Matrix out(nx, nx);
  const std::size_t patterns = c.psi.pattern_output.size();
  if (m.discipline == Discipline::arbitrary) {
    for (std::size_t pa = 0; pa < patterns; ++pa) {
      for (std::size_t pb = 0; pb < patterns; ++pb) {
        double prob = 1.0;
        std::size_t ra = pa, rb = pb;
        for (int u = 0; u < c.psi.range; ++u) {
          prob *= lambda.at(ra % m.alphabet, rb % m.alphabet);
          ra /= m.alphabet;
          rb /= m.alphabet;
        }
        out.at(c.psi.output_index(pa), c.psi.output_index(pb)) += prob;
      }
    }
  } else {
    for (std::size_t pa = 0; pa < patterns; ++pa)
      for (std::size_t pb = 0; pb < patterns; ++pb)
        out.at(c.psi.output_index(pa), c.psi.output_index(pb)) += lambda.at(pa, pb);
  }
  return out;
}

Matrix pxy(const ModelSpec& m, const TypeHistogram& gamma, std::size_t cls_index) {
  const SensorClass& c = m.cls(cls_index);
  const std::vector<double> px = output_dist(m, gamma, cls_index);
  const int nx = c.psi.num_outputs();
  Matrix out(nx, nx);
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < nx; ++y) out.at(x, y) = px[x] * c.noise.at(x, y);
  return out;
}

Matrix qxy(const ModelSpec& m, const JointType& lambda, std::size_t cls_index) {
  const SensorClass& c = m.cls(cls_index);
  const Matrix pj = joint_output_dist(m, lambda, cls_index);
  const int nx = c.psi.num_outputs();
  Matrix out(nx, nx);
  for (int xi = 0; xi < nx; ++xi)
    for (int a = 0; a < nx; ++a) {
      const double w = pj.at(xi, a);
      if (w == 0.0) continue;
      for (int y = 0; y < nx; ++y) out.at(xi, y) += w * c.noise.at(a, y);
    }
  return out;
}

double mixture_divergence(const ModelSpec& m, const TypeHistogram& gamma, const JointType& lambda) {
  require(!m.classes.empty(), errc::no_mixture, "model has no sensor classes");
  double d = 0.0;
  for (std::size_t l = 0; l < m.classes.size(); ++l) {
    const Matrix p = pxy(m, gamma, l);
    const Matrix q = qxy(m, lambda, l);
    d += m.classes[l].alpha * kl_bits(p.flat(), q.flat());
  }
  return d;
}

}  // namespace senscap
