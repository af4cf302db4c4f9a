#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "senscap/types.hpp"

using namespace senscap;

namespace {

std::vector<int> bits(const std::string& s) {
  std::vector<int> v;
  for (char c : s) v.push_back(c - '0');
  return v;
}

bool counts_equal(const std::vector<double>& probs, long long denom,
                  const std::vector<long long>& want) {
  if (probs.size() != want.size()) return false;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (std::llround(probs[i] * static_cast<double>(denom)) != want[i]) return false;
  }
  return true;
}

// independent oracle: position-wise Hamming distance
int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

}  // namespace

TEST_CASE("plain types of the reference vector family") {
  const auto vi = bits("0010110");
  const TypeHistogram g = compute_type(vi, 1, true);
  CHECK(g.denominator == 7);
  CHECK(counts_equal(g.probs, 7, {4, 3}));
  g.validate();

  // all-same-symbol vector: indicator on the constant pattern
  const std::vector<int> zeros(9, 0);
  for (int c : {1, 2, 3}) {
    const TypeHistogram gz = compute_type(zeros, c, true);
    CHECK(gz.probs[0] == doctest::Approx(1.0));
    for (std::size_t i = 1; i < gz.probs.size(); ++i) CHECK(gz.probs[i] == 0.0);
  }
}

TEST_CASE("joint types vs v_i = 0010110") {
  const auto vi = bits("0010110");

  SUBCASE("self joint type is diagonal") {
    const JointType l = compute_joint_type(vi, vi, 1, true);
    CHECK(counts_equal(l.probs, 7, {4, 0, 0, 3}));
  }
  SUBCASE("0000110") {
    const JointType l = compute_joint_type(vi, bits("0000110"), 1, true);
    CHECK(counts_equal(l.probs, 7, {4, 0, 1, 2}));
    const JointMarginals m = marginalize(l);
    CHECK(counts_equal(m.gamma_i.probs, 7, {4, 3}));
    CHECK(counts_equal(m.gamma_j.probs, 7, {5, 2}));
  }
  SUBCASE("1000011") {
    const JointType l = compute_joint_type(vi, bits("1000011"), 1, true);
    CHECK(counts_equal(l.probs, 7, {2, 2, 2, 1}));
  }
  SUBCASE("all-zero partner") {
    const JointType l = compute_joint_type(vi, bits("0000000"), 1, true);
    CHECK(counts_equal(l.probs, 7, {4, 0, 3, 0}));
  }
}

TEST_CASE("circular second-order types") {
  CHECK(counts_equal(compute_type(bits("00000000"), 2, true).probs, 8, {8, 0, 0, 0}));
  CHECK(counts_equal(compute_type(bits("01101000"), 2, true).probs, 8, {3, 2, 2, 1}));
  CHECK(counts_equal(compute_type(bits("01000111"), 2, true).probs, 8, {2, 2, 2, 2}));
}

TEST_CASE("second-order joint type of 01101000 vs 01000111") {
  const JointType l = compute_joint_type(bits("01101000"), bits("01000111"), 2, true);
  l.validate();
  // pair order (a, b), a and b in {00, 01, 10, 11}
  std::map<std::pair<int, int>, long long> expect = {
      {{0, 2}, 1}, {{0, 3}, 2}, {{1, 0}, 1}, {{1, 1}, 1}, {{2, 0}, 1}, {{2, 1}, 1}, {{3, 2}, 1}};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const auto it = expect.find({a, b});
      const long long want = it == expect.end() ? 0 : it->second;
      CHECK(std::llround(l.at(a, b) * 8) == want);
    }
  }

  // symbol-level off-diagonal mass equals the Hamming distance / k,
  // computed with the independent position-wise oracle (5 differing bits)
  const int dh = hamming(bits("01101000"), bits("01000111"));
  CHECK(dh == 5);
  CHECK(l.offdiag_symbol_mass() == doctest::Approx(dh / 8.0).epsilon(1e-12));
}

TEST_CASE("marginal consistency for random vector pairs") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 5 + static_cast<int>(gen() % 8);
    const int c = 1 + static_cast<int>(gen() % 3);
    std::vector<int> a(k), b(k);
    for (int i = 0; i < k; ++i) {
      a[i] = static_cast<int>(gen() % 2);
      b[i] = static_cast<int>(gen() % 2);
    }
    const JointType l = compute_joint_type(a, b, c, true);
    const TypeHistogram ga = compute_type(a, c, true);
    const TypeHistogram gb = compute_type(b, c, true);
    CHECK(l.row_type().counts() == ga.counts());
    CHECK(l.col_type().counts() == gb.counts());
    l.validate();  // includes joint shift consistency
    // self-joint diagonal support
    const JointType ls = compute_joint_type(a, a, c, true);
    for (std::size_t i = 0; i < ls.side(); ++i)
      for (std::size_t j = 0; j < ls.side(); ++j)
        if (i != j) CHECK(ls.at(i, j) == 0.0);
  }
}

TEST_CASE("non-circular types stay within (c-1)/k total variation of circular") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 6 + static_cast<int>(gen() % 10);
    const int c = 2 + static_cast<int>(gen() % 3);
    std::vector<int> v(k);
    for (int i = 0; i < k; ++i) v[i] = static_cast<int>(gen() % 2);
    const TypeHistogram circ = compute_type(v, c, true);
    const TypeHistogram lin = compute_type(v, c, false);
    double tv = 0.0;
    for (std::size_t i = 0; i < circ.probs.size(); ++i) tv += std::abs(circ.probs[i] - lin.probs[i]);
    CHECK(tv / 2.0 <= static_cast<double>(c - 1) / k + 1e-12);
  }
}

TEST_CASE("entropy and divergence basics") {
  const std::vector<double> half{0.5, 0.5};
  CHECK(entropy_bits(half) == doctest::Approx(1.0));
  CHECK(kl_bits(half, half) == 0.0);

  // support mismatch: tagged infinity, not an exception
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0};
  CHECK(kl_bits(p, q) == kInf);

  // uniform second-order circular type: one fresh bit per step
  TypeHistogram u{2, 2, true, {0.25, 0.25, 0.25, 0.25}, std::nullopt};
  CHECK(conditional_entropy_bits(u) == doctest::Approx(1.0));

  // nonnegativity on random simplex points
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(4), b(4);
    double sa = 0, sb = 0;
    for (int i = 0; i < 4; ++i) {
      a[i] = unif(gen);
      b[i] = unif(gen);
      sa += a[i];
      sb += b[i];
    }
    for (int i = 0; i < 4; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    CHECK(kl_bits(a, b) >= 0.0);
    CHECK(kl_bits(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("conditional entropy gap is invariant under alphabet relabeling") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 8 + static_cast<int>(gen() % 6);
    const int c = 2;
    std::vector<int> a(k), b(k);
    for (int i = 0; i < k; ++i) {
      a[i] = static_cast<int>(gen() % 2);
      b[i] = static_cast<int>(gen() % 2);
    }
    const JointType l = compute_joint_type(a, b, c, true);
    const double gap = conditional_entropy_bits(l) - conditional_entropy_bits(l.row_type());

    std::vector<int> af(k), bf(k);
    for (int i = 0; i < k; ++i) {
      af[i] = 1 - a[i];
      bf[i] = 1 - b[i];
    }
    const JointType lf = compute_joint_type(af, bf, c, true);
    const double gapf = conditional_entropy_bits(lf) - conditional_entropy_bits(lf.row_type());
    CHECK(gap == doctest::Approx(gapf).epsilon(1e-12));
  }
}

TEST_CASE("order-1 partner counting: exact binomial product with brute-force oracle") {
  const auto vi = bits("0010110");
  const JointType l = compute_joint_type(vi, bits("0000110"), 1, true);
  const CountBound cb = count_type_classes(l);

  // oracle: scan all 2^7 partners
  const EnumerationResult scan = enumerate_type_class(vi, l);
  CHECK(scan.count == 3);  // C(4,4) * C(3,2)
  REQUIRE(cb.exact_count.has_value());
  CHECK(*cb.exact_count == scan.count);
  CHECK(std::log2(static_cast<double>(scan.count)) <=
        cb.log2_count_upper + cb.polynomial_factor_log2 + 1e-9);

  // degenerate: diagonal self-joint has exactly one member
  const JointType ld = compute_joint_type(vi, vi, 1, true);
  CHECK(*count_type_classes(ld).exact_count == 1);
  CHECK(enumerate_type_class(vi, ld).count == 1);

  // the all-zero partner class
  const JointType lz = compute_joint_type(vi, bits("0000000"), 1, true);
  const EnumerationResult ez = enumerate_type_class(vi, lz, true);
  CHECK(ez.count == 1);
  CHECK(ez.members.at(0) == bits("0000000"));
}

TEST_CASE("higher-order class counting against exhaustive scans") {
  const auto vi = bits("01101000");
  const JointType l = compute_joint_type(vi, bits("01000111"), 2, true);
  const EnumerationResult scan = enumerate_type_class(vi, l);
  CHECK(scan.count >= 1);  // 01000111 itself is a member
  const CountBound cb = count_type_classes(l);
  CHECK(std::log2(static_cast<double>(scan.count)) <=
        cb.log2_count_upper + cb.polynomial_factor_log2 + 1e-9);

  // order-1 type class count: exact multinomial
  const TypeHistogram g = compute_type(vi, 1, true);
  const CountBound cg = count_type_classes(g);
  REQUIRE(cg.exact_count.has_value());
  CHECK(*cg.exact_count == 56);  // C(8,3)
  CHECK(std::log2(56.0) <= cg.log2_count_upper + 1e-9);
}

TEST_CASE("error paths") {
  CHECK_THROWS_AS((void)compute_type(std::vector<int>{}, 1, true), Error);
  CHECK_THROWS_AS((void)compute_type(bits("0101"), 5, false), Error);
  CHECK_THROWS_AS((void)compute_type(bits("0101"), 5, true), Error);
  CHECK_THROWS_AS((void)compute_joint_type(bits("010"), bits("0101"), 1, true), Error);
  CHECK_THROWS_AS((void)compute_type(std::vector<int>{0, 2, 1}, 1, true), Error);

  // relaxed type cannot be counted
  TypeHistogram relaxed{1, 2, true, {0.3, 0.7}, std::nullopt};
  CHECK_THROWS_AS((void)count_type_classes(relaxed), Error);

  // enumeration guard
  std::vector<int> big(30, 0);
  const JointType l{1, 2, true, {1.0, 0.0, 0.0, 0.0}, 30};
  CHECK_THROWS_AS((void)enumerate_type_class(big, l), Error);

  try {
    compute_type(std::vector<int>{}, 1, true);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_vector);
  }
}

TEST_CASE("field pattern types on the torus") {
  // 3x3 field, single-cell stencil reduces to the plain symbol type
  const std::vector<int> field{0, 1, 0, 1, 1, 0, 0, 0, 1};
  const std::vector<std::pair<int, int>> self{{0, 0}};
  const TypeHistogram g1 = compute_field_type(field, 3, self);
  CHECK(counts_equal(g1.probs, 9, {5, 4}));

  // plus-shaped stencil: windows wrap and total mass is 1
  const std::vector<std::pair<int, int>> plus{{-1, 0}, {0, -1}, {0, 0}, {0, 1}, {1, 0}};
  const TypeHistogram g5 = compute_field_type(field, 3, plus);
  CHECK(g5.denominator == 9);
  double total = 0.0;
  for (double p : g5.probs) total += p;
  CHECK(total == doctest::Approx(1.0));

  // cell-averaged symbol marginal equals the field's symbol frequency exactly
  const std::vector<double> sym = g5.cell_averaged_symbol_marginal();
  CHECK(sym[1] == doctest::Approx(4.0 / 9.0).epsilon(1e-12));

  const JointType lj = compute_joint_field_type(field, field, 3, plus);
  CHECK(lj.offdiag_symbol_mass(true) == doctest::Approx(0.0));
}
