#include "senscap/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace senscap {

namespace {

// seed streams, split per trial
constexpr std::uint64_t kStreamNetwork = 1;
constexpr std::uint64_t kStreamTargets = 2;
constexpr std::uint64_t kStreamNoise = 3;
constexpr std::uint64_t kStreamClass = 4;

double logsumexp(std::span<const double> v) {
  double mx = -kInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

int pick_class(const ModelSpec& m, Rng& rng) {
  if (!m.has_mixture()) return 0;
  const double u = rng.unit();
  double acc = 0.0;
  for (std::size_t l = 0; l < m.classes.size(); ++l) {
    acc += m.classes[l].alpha;
    if (u < acc) return static_cast<int>(l);
  }
  return static_cast<int>(m.classes.size()) - 1;
}

}  // namespace

SensorNetwork generate_network(const ModelSpec& m, int k, int n, std::uint64_t seed) {
  m.validate();
  require(n >= 1, errc::invalid_argument, "need at least one sensor");
  require(k >= 1, errc::invalid_argument, "need at least one target position");

  SensorNetwork net;
  net.seed = seed;
  net.sensors = n;
  if (m.discipline == Discipline::contiguous2d) {
    net.side = k;
    net.targets = k * k;
  } else {
    net.targets = k;
  }
  net.rate = static_cast<double>(net.targets) / n;

  Rng class_rng(derive_seed(seed, kStreamClass, 0));
  Rng rng(derive_seed(seed, kStreamNetwork, 0));
  net.sensor_class.resize(n);
  net.connections.resize(n);
  for (int s = 0; s < n; ++s) {
    const int cl = pick_class(m, class_rng);
    net.sensor_class[s] = cl;
    const SensorClass& cls = m.classes[static_cast<std::size_t>(cl)];
    std::vector<int>& conn = net.connections[s];
    switch (m.discipline) {
      case Discipline::arbitrary: {
        conn.resize(cls.range);
        for (int u = 0; u < cls.range; ++u)
          conn[u] = static_cast<int>(rng.below(static_cast<std::uint32_t>(net.targets)));
        break;
      }
      case Discipline::contiguous1d: {
        require(k >= cls.range, errc::range_exceeds_field, "window longer than the field");
        const int start = static_cast<int>(rng.below(static_cast<std::uint32_t>(k)));
        conn.resize(cls.range);
        for (int u = 0; u < cls.range; ++u) conn[u] = (start + u) % k;
        break;
      }
      case Discipline::contiguous2d: {
        const int cells = static_cast<int>(cls.stencil.size());
        require(k >= 2 * static_cast<int>(cls.radius) + 1, errc::range_exceeds_field,
                "stencil larger than the field");
        const int center = static_cast<int>(rng.below(static_cast<std::uint32_t>(net.targets)));
        const int r0 = center / k, c0 = center % k;
        conn.resize(cells);
        for (int u = 0; u < cells; ++u) {
          const auto [dr, dc] = cls.stencil[static_cast<std::size_t>(u)];
          conn[u] = (((r0 + dr) % k + k) % k) * k + ((c0 + dc) % k + k) % k;
        }
        break;
      }
    }
  }
  return net;
}

std::vector<int> encode(const ModelSpec& m, const SensorNetwork& net, std::span<const int> v) {
  require(static_cast<int>(v.size()) == net.targets, errc::length_mismatch,
          "target vector length mismatch");
  for (int s : v)
    require(s >= 0 && s < m.alphabet, errc::alphabet_violation, "target symbol out of range");
  std::vector<int> x(net.sensors);
  for (int s = 0; s < net.sensors; ++s) {
    const SensorClass& cls = m.classes[static_cast<std::size_t>(net.sensor_class[s])];
    std::size_t pattern = 0;
    for (int t : net.connections[s]) pattern = pattern * m.alphabet + static_cast<std::size_t>(v[t]);
    x[s] = cls.psi.output_index(pattern);
  }
  return x;
}

std::vector<int> observe(const ModelSpec& m, const SensorNetwork& net, std::span<const int> x,
                         std::uint64_t seed) {
  require(x.size() == static_cast<std::size_t>(net.sensors), errc::length_mismatch,
          "codeword length mismatch");
  Rng rng(derive_seed(seed, kStreamNoise, 0));
  std::vector<int> y(net.sensors);
  for (int s = 0; s < net.sensors; ++s) {
    const SensorClass& cls = m.classes[static_cast<std::size_t>(net.sensor_class[s])];
    y[s] = rng.categorical(cls.noise.row(x[s]));
  }
  return y;
}

namespace {

double candidate_score(const ModelSpec& m, const SensorNetwork& net, std::span<const int> y,
                       std::span<const int> v) {
  double score = 0.0;
  for (int s = 0; s < net.sensors; ++s) {
    const SensorClass& cls = m.classes[static_cast<std::size_t>(net.sensor_class[s])];
    std::size_t pattern = 0;
    for (int t : net.connections[s]) pattern = pattern * m.alphabet + static_cast<std::size_t>(v[t]);
    const double w = cls.noise.at(cls.psi.output_index(pattern), y[s]);
    if (w <= 0.0) return -kInf;
    score += std::log(w);
  }
  if (m.prior) {
    for (int t = 0; t < net.targets; ++t) {
      const double pv = (*m.prior)[static_cast<std::size_t>(v[t])];
      if (pv <= 0.0) return -kInf;
      score += std::log(pv);
    }
  }
  return score;
}

void check_enumerable(const ModelSpec& m, const SensorNetwork& net) {
  const double bits = net.targets * std::log2(static_cast<double>(m.alphabet));
  require(bits <= 24.0, errc::instance_too_large, "exhaustive decoding beyond 2^24 candidates");
}

}  // namespace

std::vector<int> decode_ml(const ModelSpec& m, const SensorNetwork& net, std::span<const int> y) {
  check_enumerable(m, net);
  const std::size_t total = ipow(m.alphabet, net.targets);
  std::vector<int> v(net.targets, 0), best(net.targets, 0);
  double best_score = -kInf;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (int pos = net.targets; pos-- > 0;) {
      v[static_cast<std::size_t>(pos)] = static_cast<int>(rest % m.alphabet);
      rest /= m.alphabet;
    }
    const double s = candidate_score(m, net, y, v);
    if (s > best_score) {  // strict: first (lexicographically smallest) argmax wins
      best_score = s;
      best = v;
    }
  }
  return best;
}

Matrix exact_posterior_marginals(const ModelSpec& m, const SensorNetwork& net,
                                 std::span<const int> y) {
  check_enumerable(m, net);
  const std::size_t total = ipow(m.alphabet, net.targets);
  std::vector<double> scores(total);
  std::vector<int> v(net.targets, 0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (int pos = net.targets; pos-- > 0;) {
      v[static_cast<std::size_t>(pos)] = static_cast<int>(rest % m.alphabet);
      rest /= m.alphabet;
    }
    scores[code] = candidate_score(m, net, y, v);
  }
  const double lz = logsumexp(scores);
  Matrix marg(net.targets, m.alphabet);
  for (std::size_t code = 0; code < total; ++code) {
    const double w = std::exp(scores[code] - lz);
    std::size_t rest = code;
    for (int pos = net.targets; pos-- > 0;) {
      marg.at(pos, static_cast<int>(rest % m.alphabet)) += w;
      rest /= m.alphabet;
    }
  }
  return marg;
}

// ---------------------------------------------------------------------------
// belief propagation

FactorGraph build_factor_graph(const ModelSpec& m, const SensorNetwork& net,
                               std::span<const int> y) {
  FactorGraph g;
  g.variables = net.targets;
  g.alphabet = m.alphabet;
  g.log_prior.assign(static_cast<std::size_t>(net.targets) * m.alphabet, 0.0);
  if (m.prior) {
    for (int t = 0; t < net.targets; ++t)
      for (int a = 0; a < m.alphabet; ++a)
        g.log_prior[static_cast<std::size_t>(t) * m.alphabet + a] =
            (*m.prior)[static_cast<std::size_t>(a)] > 0.0
                ? std::log((*m.prior)[static_cast<std::size_t>(a)])
                : -kInf;
  }
  g.factor_vars.resize(net.sensors);
  g.factor_logpot.resize(net.sensors);
  for (int s = 0; s < net.sensors; ++s) {
    const SensorClass& cls = m.classes[static_cast<std::size_t>(net.sensor_class[s])];
    g.factor_vars[s] = net.connections[s];
    const std::size_t patterns = cls.psi.pattern_output.size();
    g.factor_logpot[s].resize(patterns);
    for (std::size_t pat = 0; pat < patterns; ++pat) {
      const double w = cls.noise.at(cls.psi.output_index(pat), y[s]);
      g.factor_logpot[s][pat] = w > 0.0 ? std::log(w) : -1e30;
    }
  }
  return g;
}

BpResult decode_bp(const FactorGraph& g, int max_iters, double damping) {
  require(max_iters >= 1, errc::invalid_argument, "max_iters must be >= 1");
  require(damping >= 0.0 && damping < 1.0, errc::invalid_argument, "damping must lie in [0, 1)");
  const int V = g.alphabet;
  const int nf = static_cast<int>(g.factor_vars.size());

  // one message per factor slot, log domain, normalized to logsumexp 0
  struct Slot {
    int factor, pos, var;
  };
  std::vector<Slot> slots;
  std::vector<std::vector<int>> var_slots(g.variables);
  for (int f = 0; f < nf; ++f) {
    for (std::size_t u = 0; u < g.factor_vars[f].size(); ++u) {
      var_slots[g.factor_vars[f][u]].push_back(static_cast<int>(slots.size()));
      slots.push_back({f, static_cast<int>(u), g.factor_vars[f][u]});
    }
  }
  const std::size_t ns = slots.size();
  std::vector<double> fac2var(ns * V, -std::log(static_cast<double>(V)));
  std::vector<double> var2fac(ns * V, 0.0);
  std::vector<std::vector<int>> factor_slot_base(nf);
  {
    std::size_t idx = 0;
    for (int f = 0; f < nf; ++f) {
      factor_slot_base[f].resize(g.factor_vars[f].size());
      for (std::size_t u = 0; u < g.factor_vars[f].size(); ++u)
        factor_slot_base[f][u] = static_cast<int>(idx++);
    }
  }

  std::vector<double> belief(static_cast<std::size_t>(g.variables) * V);
  std::vector<double> tmp(V);
  BpResult res;
  double delta = kInf;

  for (int it = 0; it < max_iters; ++it) {
    // variable -> factor: prior plus all incoming messages except own slot
    for (int v = 0; v < g.variables; ++v) {
      for (int a = 0; a < V; ++a)
        belief[static_cast<std::size_t>(v) * V + a] = g.log_prior[static_cast<std::size_t>(v) * V + a];
      for (int s : var_slots[v])
        for (int a = 0; a < V; ++a)
          belief[static_cast<std::size_t>(v) * V + a] += fac2var[static_cast<std::size_t>(s) * V + a];
    }
    for (std::size_t s = 0; s < ns; ++s) {
      const int v = slots[s].var;
      for (int a = 0; a < V; ++a)
        tmp[a] = belief[static_cast<std::size_t>(v) * V + a] - fac2var[s * V + a];
      const double z = logsumexp(tmp);
      for (int a = 0; a < V; ++a)
        var2fac[s * V + a] = std::isfinite(z) ? tmp[a] - z : -std::log(static_cast<double>(V));
    }

    // factor -> variable, via the full-pattern score table
    delta = 0.0;
    for (int f = 0; f < nf; ++f) {
      const auto& vars = g.factor_vars[f];
      const int arity = static_cast<int>(vars.size());
      const std::size_t patterns = g.factor_logpot[f].size();
      // total score of each pattern under all incoming messages
      static thread_local std::vector<double> score;
      score.assign(patterns, 0.0);
      for (std::size_t pat = 0; pat < patterns; ++pat) {
        double t = g.factor_logpot[f][pat];
        std::size_t rest = pat;
        for (int u = arity; u-- > 0;) {
          const int a = static_cast<int>(rest % V);
          rest /= V;
          t += var2fac[static_cast<std::size_t>(factor_slot_base[f][u]) * V + a];
        }
        score[pat] = t;
      }
      // per slot: remove own incoming, marginalize the rest
      static thread_local std::vector<double> acc;
      acc.assign(static_cast<std::size_t>(arity) * V, -kInf);
      for (std::size_t pat = 0; pat < patterns; ++pat) {
        std::size_t rest = pat;
        for (int u = arity; u-- > 0;) {
          const int a = static_cast<int>(rest % V);
          rest /= V;
          const double contrib =
              score[pat] - var2fac[static_cast<std::size_t>(factor_slot_base[f][u]) * V + a];
          double& cell = acc[static_cast<std::size_t>(u) * V + a];
          // streaming logsumexp
          if (contrib > cell) {
            cell = contrib + std::log1p(std::exp(cell - contrib));
          } else if (std::isfinite(cell)) {
            cell = cell + std::log1p(std::exp(contrib - cell));
          }
        }
      }
      for (int u = 0; u < arity; ++u) {
        const std::size_t s = static_cast<std::size_t>(factor_slot_base[f][u]);
        for (int a = 0; a < V; ++a) tmp[a] = acc[static_cast<std::size_t>(u) * V + a];
        const double z = logsumexp(tmp);
        for (int a = 0; a < V; ++a) {
          double fresh = std::isfinite(z) ? tmp[a] - z : -std::log(static_cast<double>(V));
          if (damping > 0.0) fresh = (1.0 - damping) * fresh + damping * fac2var[s * V + a];
          const double old_p = std::exp(fac2var[s * V + a]);
          const double new_p = std::exp(fresh);
          delta = std::max(delta, std::abs(new_p - old_p));
          fac2var[s * V + a] = fresh;
        }
      }
    }
    res.iters = it + 1;
    if (delta < 1e-6) {
      res.converged = true;
      break;
    }
  }

  // final beliefs
  res.marginals = Matrix(g.variables, V);
  res.decoded.resize(g.variables);
  for (int v = 0; v < g.variables; ++v) {
    for (int a = 0; a < V; ++a)
      tmp[a] = g.log_prior[static_cast<std::size_t>(v) * V + a];
    for (int s : var_slots[v])
      for (int a = 0; a < V; ++a) tmp[a] += fac2var[static_cast<std::size_t>(s) * V + a];
    const double z = logsumexp(tmp);
    if (!std::isfinite(z)) fail(errc::numerical_underflow, "belief normalization vanished");
    for (int a = 0; a < V; ++a) {
      const double p = std::exp(tmp[a] - z);
      if (std::isnan(p)) fail(errc::numerical_underflow, "NaN belief");
      res.marginals.at(v, a) = p;
    }
    // argmax with smallest-symbol tie-break
    int arg = 0;
    for (int a = 1; a < V; ++a)
      if (res.marginals.at(v, a) > res.marginals.at(v, arg)) arg = a;
    res.decoded[v] = arg;
  }
  return res;
}

// ---------------------------------------------------------------------------
// trials

void wilson_interval(int successes, int trials, double& lo, double& hi) {
  if (trials == 0) {
    lo = 0.0;
    hi = 1.0;
    return;
  }
  const double z = 1.959963984540054;
  const double n = trials;
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = phat + z2 / (2.0 * n);
  const double spread = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  lo = std::max(0.0, (center - spread) / denom);
  hi = std::min(1.0, (center + spread) / denom);
}

namespace {

TrialRecord run_one_trial(const ModelSpec& m, int k, int n, double distortion,
                          std::uint64_t trial_seed, const SimOptions& opts) {
  TrialRecord rec;
  rec.seed = trial_seed;
  const SensorNetwork net = generate_network(m, k, n, derive_seed(trial_seed, kStreamNetwork, 1));

  Rng vrng(derive_seed(trial_seed, kStreamTargets, 1));
  rec.truth.resize(net.targets);
  for (int t = 0; t < net.targets; ++t) {
    rec.truth[t] = m.prior ? vrng.categorical(*m.prior)
                           : static_cast<int>(vrng.below(static_cast<std::uint32_t>(m.alphabet)));
  }
  rec.codeword = encode(m, net, rec.truth);
  rec.observation = observe(m, net, rec.codeword, derive_seed(trial_seed, kStreamNoise, 1));

  if (opts.decoder == DecoderKind::ml) {
    rec.decoded = decode_ml(m, net, rec.observation);
  } else {
    const FactorGraph g = build_factor_graph(m, net, rec.observation);
    const BpResult bp = decode_bp(g, opts.bp_iters, opts.damping);
    rec.decoded = bp.decoded;
    rec.bp_iters = bp.iters;
    rec.bp_converged = bp.converged;
  }

  int hamming = 0;
  for (int t = 0; t < net.targets; ++t) hamming += rec.truth[t] != rec.decoded[t];
  rec.distortion = static_cast<double>(hamming) / net.targets;
  rec.error = rec.distortion >= distortion;
  return rec;
}

}  // namespace

TrialSummary run_trials(const ModelSpec& m, int k, int n, double distortion, int trials,
                        std::uint64_t seed, const SimOptions& opts) {
  require(trials >= 1, errc::invalid_argument, "need at least one trial");
  m.validate();
  TrialSummary sum;
  sum.trials = trials;
  std::vector<TrialRecord> records(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    if (interrupt_flag().load()) return;
    records[t] = run_one_trial(m, k, n, distortion, derive_seed(seed, 0, t), opts);
  }, opts.threads);
  for (const TrialRecord& r : records) sum.errors += r.error ? 1 : 0;
  sum.error_rate = static_cast<double>(sum.errors) / trials;
  wilson_interval(sum.errors, trials, sum.ci_lo, sum.ci_hi);
  if (opts.keep_records) sum.records = std::move(records);
  return sum;
}

std::vector<RateCurveRow> sweep_rate(const ModelSpec& m, std::span<const int> ks,
                                     std::span<const double> rates, double distortion, int trials,
                                     std::uint64_t seed, const SimOptions& opts) {
  require(!ks.empty() && !rates.empty(), errc::invalid_argument, "empty rate sweep");
  std::vector<RateCurveRow> rows;
  SimOptions inner = opts;
  inner.keep_records = false;
  for (int k : ks) {
    const int targets = m.discipline == Discipline::contiguous2d ? k * k : k;
    for (double r : rates) {
      require(r > 0.0, errc::invalid_argument, "rate must be positive");
      const int n = std::max(1, static_cast<int>(std::llround(targets / r)));
      // one seed stream per (k, rate) cell so curves are individually stable
      const std::uint64_t cell_seed = derive_seed(seed, 7, (static_cast<std::uint64_t>(k) << 20) ^ rows.size());
      const TrialSummary s = run_trials(m, k, n, distortion, trials, cell_seed, inner);
      rows.push_back({k, n, static_cast<double>(targets) / n, s.error_rate, s.ci_lo, s.ci_hi,
                      s.trials});
      if (interrupt_flag().load()) return rows;
    }
  }
  return rows;
}

// pool-adjacent-violators: best nondecreasing fit under squared loss
static std::vector<double> pava_nondecreasing(std::span<const double> y) {
  std::vector<double> level;
  std::vector<int> weight;
  for (double v : y) {
    level.push_back(v);
    weight.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double merged = (level[level.size() - 2] * weight[weight.size() - 2] +
                             level.back() * weight.back()) /
                            (weight[weight.size() - 2] + weight.back());
      weight[weight.size() - 2] += weight.back();
      level[level.size() - 2] = merged;
      level.pop_back();
      weight.pop_back();
    }
  }
  std::vector<double> fit;
  for (std::size_t i = 0; i < level.size(); ++i)
    fit.insert(fit.end(), static_cast<std::size_t>(weight[i]), level[i]);
  return fit;
}

namespace {

std::vector<RateCurveRow> sorted_by_rate(std::span<const RateCurveRow> curve) {
  std::vector<RateCurveRow> rows(curve.begin(), curve.end());
  std::sort(rows.begin(), rows.end(),
            [](const RateCurveRow& a, const RateCurveRow& b) { return a.rate < b.rate; });
  return rows;
}

}  // namespace

double isotonic_residual(std::span<const RateCurveRow> curve) {
  const std::vector<RateCurveRow> rows = sorted_by_rate(curve);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(r.error_rate);
  const std::vector<double> fit = pava_nondecreasing(y);
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - fit[i]) * (y[i] - fit[i]);
  return std::sqrt(ss / y.size());
}

double transition_width(std::span<const RateCurveRow> curve, double lo_level, double hi_level) {
  const std::vector<RateCurveRow> rows = sorted_by_rate(curve);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(r.error_rate);
  const std::vector<double> fit = pava_nondecreasing(y);

  auto crossing = [&](double level) -> double {
    for (std::size_t i = 1; i < fit.size(); ++i) {
      if (fit[i - 1] <= level && fit[i] >= level) {
        if (fit[i] == fit[i - 1]) return rows[i - 1].rate;
        const double t = (level - fit[i - 1]) / (fit[i] - fit[i - 1]);
        return rows[i - 1].rate + t * (rows[i].rate - rows[i - 1].rate);
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  return crossing(hi_level) - crossing(lo_level);
}

}  // namespace senscap
