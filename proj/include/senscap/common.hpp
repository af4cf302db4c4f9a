// Shared utilities: error codes, deterministic RNG, small numeric helpers,
// and a minimal parallel-for used by the solvers and the simulator.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace senscap {

enum class errc {
  empty_vector,
  order_exceeds_length,
  length_mismatch,
  instance_too_large,
  non_exact_type,
  support_mismatch,
  order_mismatch,
  invalid_probability,
  no_mixture,
  dimension_too_large,
  empty_feasible_set,
  inner_solver_diverged,
  conditional_undefined,
  range_exceeds_field,
  alphabet_violation,
  even_replication,
  numerical_underflow,
  infeasible_lambda,
  invalid_argument,
  io_error,
};

const char* errc_name(errc c);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Default master seed for every CLI command and test harness (documented in README).
constexpr std::uint64_t kDefaultSeed = 0x53454e53ull;

// ---------------------------------------------------------------------------
// numerics

// x*log2(x) with the 0*log0 = 0 convention.
inline double xlog2x(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= xlog2x(v);
  return h;
}

inline double binary_entropy_bits(double s) { return -xlog2x(s) - xlog2x(1.0 - s); }

// KL divergence in bits. A support mismatch (p>0 where q=0) yields +infinity
// rather than an error: boundary points are legitimate solver probes.
inline double kl_bits(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(errc::support_mismatch, "kl: dimension mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    d += p[i] * std::log2(p[i] / q[i]);
  }
  return d < 0.0 && d > -1e-12 ? 0.0 : d;
}

// Exact binomial coefficient; n up to 62 stays inside unsigned 64-bit.
inline unsigned long long binomial_exact(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned long long r = 1;
  for (long long i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned long long>(n - k + i) / static_cast<unsigned long long>(i);
  }
  return r;
}

inline double log2_factorial(long long n) { return std::lgamma(static_cast<double>(n) + 1.0) / std::log(2.0); }

inline bool is_simplex(std::span<const double> p, double tol = 1e-12) {
  double s = 0.0;
  for (double v : p) {
    if (v < -tol) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol * std::max<double>(1, p.size());
}

// Dense row-major matrix; small enough that anything fancier would be noise.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const { return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> flat() const { return {a.data(), a.size()}; }
};

// ---------------------------------------------------------------------------
// deterministic randomness

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based seed split: stream separates roles (network / targets / noise),
// index separates trials. Parallel schedules therefore cannot change outcomes.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ (0xa0761d6478bd642full * stream)) + index);
}

// mt19937_64 is fully specified by the standard; the bounded draws below avoid
// std::uniform_int_distribution, whose mapping is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint32_t below(std::uint32_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return static_cast<std::uint32_t>(x % n);
  }

  // inverse-CDF draw from a pmf row
  int categorical(std::span<const double> pmf) {
    double u = unit();
    double acc = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      acc += pmf[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(pmf.size()) - 1;
  }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// parallelism

// Worker cap: explicit argument, else SENSCAP_THREADS, else hardware.
unsigned effective_threads(unsigned requested = 0);

// Runs fn(i) for i in [0, n). Work is pulled from an atomic counter; the
// caller must make fn(i) depend only on i so thread count never matters.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

// Cooperative interrupt flag, set by the CLI's signal handler and polled by
// long-running loops so partial outputs can be finalized.
std::atomic<bool>& interrupt_flag();

}  // namespace senscap
