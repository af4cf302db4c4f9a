#include <doctest.h>

#include <random>

#include "senscap/model.hpp"

using namespace senscap;

namespace {

ModelSpec arbitrary_sum_model(int c, double p, double decay = 2.0, int alphabet = 2) {
  ModelSpec m;
  m.discipline = Discipline::arbitrary;
  m.alphabet = alphabet;
  SensorClass cls;
  cls.range = c;
  cls.psi = SensingFunction::sum(c, alphabet);
  cls.noise_spec = {NoiseSpec::Kind::exponential, p, decay, {}};
  cls.noise = build_noise(cls.noise_spec, cls.psi.num_outputs());
  m.classes.push_back(std::move(cls));
  m.validate();
  return m;
}

ModelSpec contiguous_sum_model(int c, double p, double decay = 2.0) {
  ModelSpec m = arbitrary_sum_model(c, p, decay);
  m.discipline = Discipline::contiguous1d;
  return m;
}

TypeHistogram order1(std::vector<double> probs) {
  return TypeHistogram{1, static_cast<int>(probs.size()), true, std::move(probs), std::nullopt};
}

JointType product_joint(const TypeHistogram& g) {
  const int V = g.alphabet;
  JointType l{1, V, true, std::vector<double>(static_cast<std::size_t>(V) * V), std::nullopt};
  for (int a = 0; a < V; ++a)
    for (int b = 0; b < V; ++b) l.at(a, b) = g.probs[a] * g.probs[b];
  return l;
}

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> unif(0.02, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = unif(gen);
    s += x;
  }
  for (auto& x : v) x /= s;
  return v;
}

// independent oracle: recursive enumeration of all V^c symbol tuples with
// long-double products, no pattern-table reuse
void oracle_tuples(int c, int V, std::vector<int>& tuple,
                   const std::function<void(const std::vector<int>&)>& visit) {
  if (static_cast<int>(tuple.size()) == c) {
    visit(tuple);
    return;
  }
  for (int s = 0; s < V; ++s) {
    tuple.push_back(s);
    oracle_tuples(c, V, tuple, visit);
    tuple.pop_back();
  }
}

// oracle: mutual information of channel W under input px
double mi_oracle(std::span<const double> px, const NoiseChannel& w) {
  const int n = w.size;
  std::vector<double> py(n, 0.0);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) py[y] += px[x] * w.at(x, y);
  long double mi = 0.0;
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      const double joint = px[x] * w.at(x, y);
      if (joint > 0.0) mi += joint * std::log2(joint / (px[x] * py[y]));
    }
  }
  return static_cast<double>(mi);
}

}  // namespace

TEST_CASE("output distribution closed forms at c = 2") {
  const ModelSpec m = arbitrary_sum_model(2, 0.0);
  std::mt19937_64 gen(17);
  for (int t = 0; t < 20; ++t) {
    const TypeHistogram g = order1(random_simplex(gen, 2));
    const std::vector<double> out = output_dist(m, g);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == doctest::Approx(g.probs[0] * g.probs[0]).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(2 * g.probs[0] * g.probs[1]).epsilon(1e-14));
    CHECK(out[2] == doctest::Approx(g.probs[1] * g.probs[1]).epsilon(1e-14));
  }
  // no targets anywhere: count is 0 with certainty
  const std::vector<double> empty = output_dist(m, order1({1.0, 0.0}));
  CHECK(empty[0] == 1.0);
  CHECK(empty[1] == 0.0);
  CHECK(empty[2] == 0.0);
}

TEST_CASE("joint output distribution closed forms at c = 2") {
  const ModelSpec m = arbitrary_sum_model(2, 0.0);
  std::mt19937_64 gen(19);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> lp = random_simplex(gen, 4);
    JointType l{1, 2, true, lp, std::nullopt};
    const double l00 = l.at(0, 0), l01 = l.at(0, 1), l10 = l.at(1, 0), l11 = l.at(1, 1);
    const Matrix j = joint_output_dist(m, l);
    CHECK(j.at(0, 0) == doctest::Approx(l00 * l00).epsilon(1e-13));
    CHECK(j.at(0, 1) == doctest::Approx(2 * l00 * l01).epsilon(1e-13));
    CHECK(j.at(0, 2) == doctest::Approx(l01 * l01).epsilon(1e-13));
    CHECK(j.at(1, 0) == doctest::Approx(2 * l00 * l10).epsilon(1e-13));
    CHECK(j.at(1, 1) == doctest::Approx(2 * (l10 * l01 + l00 * l11)).epsilon(1e-13));
    CHECK(j.at(1, 2) == doctest::Approx(2 * l01 * l11).epsilon(1e-13));
    CHECK(j.at(2, 0) == doctest::Approx(l10 * l10).epsilon(1e-13));
    CHECK(j.at(2, 1) == doctest::Approx(2 * l10 * l11).epsilon(1e-13));
    CHECK(j.at(2, 2) == doctest::Approx(l11 * l11).epsilon(1e-13));
  }
}

TEST_CASE("contiguous output distributions match the window-count forms") {
  const ModelSpec m = contiguous_sum_model(2, 0.0);
  TypeHistogram g{2, 2, true, {3.0 / 8, 2.0 / 8, 2.0 / 8, 1.0 / 8}, 8};
  const std::vector<double> out = output_dist(m, g);
  CHECK(out[0] == doctest::Approx(3.0 / 8));
  CHECK(out[1] == doctest::Approx(4.0 / 8));
  CHECK(out[2] == doctest::Approx(1.0 / 8));

  // joint form, pairs indexed (a, b) over {00,01,10,11}
  JointType l{2, 2, true, std::vector<double>(16, 0.0), std::nullopt};
  std::mt19937_64 gen(23);
  auto lp = random_simplex(gen, 16);
  l.probs = lp;
  const Matrix j = joint_output_dist(m, l);
  CHECK(j.at(0, 0) == doctest::Approx(l.at(0, 0)).epsilon(1e-13));
  CHECK(j.at(1, 2) == doctest::Approx(l.at(2, 3) + l.at(1, 3)).epsilon(1e-13));
  CHECK(j.at(2, 0) == doctest::Approx(l.at(3, 0)).epsilon(1e-13));
  CHECK(j.at(1, 1) ==
        doctest::Approx(l.at(1, 1) + l.at(1, 2) + l.at(2, 1) + l.at(2, 2)).epsilon(1e-13));
}

TEST_CASE("brute-force tuple oracle confirms the arbitrary-model distributions") {
  std::mt19937_64 gen(29);
  for (int c : {2, 3, 4}) {
    const ModelSpec m = arbitrary_sum_model(c, 0.0);
    for (int t = 0; t < 10; ++t) {
      const TypeHistogram g = order1(random_simplex(gen, 2));
      const std::vector<double> got = output_dist(m, g);

      std::vector<long double> want(static_cast<std::size_t>(c) + 1, 0.0L);
      std::vector<int> tuple;
      oracle_tuples(c, 2, tuple, [&](const std::vector<int>& tu) {
        long double prob = 1.0L;
        int sum = 0;
        for (int s : tu) {
          prob *= g.probs[static_cast<std::size_t>(s)];
          sum += s;
        }
        want[static_cast<std::size_t>(sum)] += prob;
      });
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(static_cast<double>(want[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("weighted sums with distinct images give a uniform 16-point law") {
  const SensingFunction psi = SensingFunction::weighted_sum({1.0, 0.5, 0.25, 0.1});
  CHECK(psi.num_outputs() == 16);
  ModelSpec m;
  m.discipline = Discipline::arbitrary;
  SensorClass cls;
  cls.range = 4;
  cls.psi = psi;
  cls.noise_spec = {NoiseSpec::Kind::exponential, 0.0, 2.0, {}};
  cls.noise = build_noise(cls.noise_spec, 16);
  m.classes.push_back(cls);
  const std::vector<double> out = output_dist(m, order1({0.5, 0.5}));
  for (double v : out) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-12));
}

TEST_CASE("exponential noise construction") {
  // zero noise: identity channel
  const NoiseChannel id = make_exponential_noise(0.0, 3);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) CHECK(id.at(x, y) == (x == y ? 1.0 : 0.0));

  // hand-normalized first row at p=0.1, decay 2, |X|=3
  const NoiseChannel w = make_exponential_noise(0.1, 3, 2.0);
  CHECK(w.at(0, 0) == doctest::Approx(0.9));
  CHECK(w.at(0, 1) == doctest::Approx(0.1 * 2.0 / 3.0).epsilon(1e-12));
  CHECK(w.at(0, 2) == doctest::Approx(0.1 / 3.0).epsilon(1e-12));

  // off-diagonal mass is exactly p on every row
  for (double p : {0.02, 0.1, 0.4}) {
    for (int n : {2, 3, 5, 9}) {
      const NoiseChannel ch = make_exponential_noise(p, n, 2.0);
      ch.validate();
      for (int x = 0; x < n; ++x) {
        double off = 0.0;
        for (int y = 0; y < n; ++y)
          if (y != x) off += ch.at(x, y);
        CHECK(off == doctest::Approx(p).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS((void)make_exponential_noise(1.0, 3), Error);
  CHECK_THROWS_AS((void)make_exponential_noise(-0.1, 3), Error);
}

TEST_CASE("pxy/qxy marginal consistency and the noiseless degenerate case") {
  const ModelSpec m = arbitrary_sum_model(2, 0.1);
  std::mt19937_64 gen(31);
  for (int t = 0; t < 20; ++t) {
    JointType l{1, 2, true, random_simplex(gen, 4), std::nullopt};
    const Matrix j = joint_output_dist(m, l);
    const std::vector<double> pi = output_dist(m, l.row_type());
    const std::vector<double> pj = output_dist(m, l.col_type());
    for (int x = 0; x < j.rows; ++x) {
      double row = 0.0, col = 0.0;
      for (int y = 0; y < j.cols; ++y) {
        row += j.at(x, y);
        col += j.at(y, x);
      }
      CHECK(row == doctest::Approx(pi[x]).epsilon(1e-10));
      CHECK(col == doctest::Approx(pj[x]).epsilon(1e-10));
    }
  }

  // noiseless identity channel and a diagonal self-joint: qxy equals pxy
  const ModelSpec m0 = arbitrary_sum_model(2, 0.0);
  const TypeHistogram g = order1({0.6, 0.4});
  JointType diag{1, 2, true, {0.6, 0.0, 0.0, 0.4}, std::nullopt};
  const Matrix p = pxy(m0, g);
  const Matrix q = qxy(m0, diag);
  for (std::size_t i = 0; i < p.a.size(); ++i) CHECK(p.a[i] == doctest::Approx(q.a[i]).epsilon(1e-14));
}

TEST_CASE("independent joint types collapse the divergence to mutual information") {
  std::mt19937_64 gen(37);
  for (int t = 0; t < 50; ++t) {
    const int c = 2 + static_cast<int>(gen() % 3);
    const double p = 0.01 + 0.3 * (static_cast<double>(gen() % 1000) / 1000.0);
    const ModelSpec m = arbitrary_sum_model(c, p);
    const TypeHistogram g = order1(random_simplex(gen, 2));
    const JointType l = product_joint(g);
    const double lhs = kl_bits(pxy(m, g).flat(), qxy(m, l).flat());
    const double rhs = mi_oracle(output_dist(m, g), m.cls().noise);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("empirical connection average equals the induced output law") {
  // For a fixed vector, averaging psi over all k^c connection tuples must
  // reproduce output_dist of its type exactly.
  std::mt19937_64 gen(41);
  for (int c : {1, 2, 3}) {
    const ModelSpec m = arbitrary_sum_model(c, 0.0);
    for (int t = 0; t < 5; ++t) {
      const int k = 6 + static_cast<int>(gen() % 5);
      std::vector<int> v(k);
      for (auto& s : v) s = static_cast<int>(gen() % 2);
      const TypeHistogram g = compute_type(v, 1, true);
      const std::vector<double> law = output_dist(m, g);

      std::vector<long double> emp(law.size(), 0.0L);
      std::vector<int> conn(c, 0);
      const long double total = std::pow(static_cast<long double>(k), c);
      for (;;) {
        int sum = 0;
        for (int u = 0; u < c; ++u) sum += v[static_cast<std::size_t>(conn[u])];
        emp[static_cast<std::size_t>(sum)] += 1.0L / total;
        int d = 0;
        while (d < c && ++conn[d] == k) conn[d++] = 0;
        if (d == c) break;
      }
      for (std::size_t i = 0; i < law.size(); ++i)
        CHECK(law[i] == doctest::Approx(static_cast<double>(emp[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("mixture divergence endpoints") {
  const TypeHistogram g = order1({0.5, 0.5});
  JointType l{1, 2, true, {0.3, 0.2, 0.2, 0.3}, std::nullopt};

  // single class: equals the plain divergence
  const ModelSpec single = arbitrary_sum_model(2, 0.1);
  CHECK(mixture_divergence(single, g, l) ==
        doctest::Approx(kl_bits(pxy(single, g).flat(), qxy(single, l).flat())).epsilon(1e-14));

  // two identical classes at alpha = 1/2 each: unchanged
  ModelSpec twin = single;
  twin.classes.push_back(twin.classes[0]);
  twin.classes[0].alpha = twin.classes[1].alpha = 0.5;
  twin.validate();
  CHECK(mixture_divergence(twin, g, l) ==
        doctest::Approx(mixture_divergence(single, g, l)).epsilon(1e-12));

  // distinct classes: strictly between the endpoints
  ModelSpec duo = arbitrary_sum_model(2, 0.01);
  SensorClass second;
  second.range = 4;
  second.psi = SensingFunction::sum(4, 2);
  second.noise_spec = {NoiseSpec::Kind::exponential, 0.10, 2.0, {}};
  second.noise = build_noise(second.noise_spec, second.psi.num_outputs());
  duo.classes.push_back(second);
  duo.classes[0].alpha = duo.classes[1].alpha = 0.5;
  duo.validate();
  const double lo_class = kl_bits(pxy(duo, g, 0).flat(), qxy(duo, l, 0).flat());
  const double hi_class = kl_bits(pxy(duo, g, 1).flat(), qxy(duo, l, 1).flat());
  const double mixed = mixture_divergence(duo, g, l);
  CHECK(mixed >= std::min(lo_class, hi_class) - 1e-12);
  CHECK(mixed <= std::max(lo_class, hi_class) + 1e-12);
}

TEST_CASE("coverage stencils") {
  CHECK(coverage_stencil(1.0).size() == 5);   // plus shape
  CHECK(coverage_stencil(1.5).size() == 9);   // 3x3 block
  CHECK(coverage_stencil(2.0).size() == 13);  // dense cap
  CHECK_THROWS_AS((void)coverage_stencil(3.0), Error);
  const auto plus = coverage_stencil(1.0);
  CHECK(plus.front() == std::pair<int, int>{-1, 0});
  CHECK(plus.back() == std::pair<int, int>{1, 0});
}

TEST_CASE("type order guards") {
  const ModelSpec arb = arbitrary_sum_model(2, 0.1);
  TypeHistogram g2{2, 2, true, {0.25, 0.25, 0.25, 0.25}, std::nullopt};
  CHECK_THROWS_AS((void)output_dist(arb, g2), Error);

  const ModelSpec con = contiguous_sum_model(2, 0.1);
  TypeHistogram g1 = order1({0.5, 0.5});
  CHECK_THROWS_AS((void)output_dist(con, g1), Error);
}
