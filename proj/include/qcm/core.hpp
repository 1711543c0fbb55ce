#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace qcm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, std::uint64_t estimate)
      : Error(what + " (estimate " + std::to_string(estimate) + ")"), estimate_(estimate) {}
  std::uint64_t estimate() const { return estimate_; }

 private:
  std::uint64_t estimate_;
};

class IterationLimit : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

// Integer patience or the symbolic infinite value.
class Patience {
 public:
  constexpr Patience() = default;
  static constexpr Patience finite(long n) { return Patience(n); }
  static constexpr Patience infinite() {
    Patience p;
    p.infinite_ = true;
    return p;
  }

  constexpr bool is_infinite() const { return infinite_; }
  long value() const {
    if (infinite_) throw InvalidInput("patience is infinite");
    return limit_;
  }
  // Effective number of allowed queries when at most `bound` are possible anyway.
  constexpr long cap(long bound) const { return infinite_ ? bound : std::min(limit_, bound); }

  friend constexpr bool operator==(const Patience&, const Patience&) = default;

  std::string to_string() const { return infinite_ ? "inf" : std::to_string(limit_); }

 private:
  constexpr explicit Patience(long n) : limit_(n) {}
  long limit_ = 1;
  bool infinite_ = false;
};

struct Violation {
  std::string path;
  std::string message;
};

// QCL_BUDGET, when set to a positive integer, replaces every enumeration budget default.
inline std::uint64_t enumeration_budget(std::uint64_t fallback) {
  if (const char* env = std::getenv("QCL_BUDGET")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::uint64_t>(v);
  }
  return fallback;
}

// ---------------------------------------------------------------------------
// Counter-based random streams keyed by (seed, stream name, trial index).

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Stream {
 public:
  Stream() = default;
  Stream(std::uint64_t seed, std::string_view name, std::uint64_t trial = 0)
      : key_(mix64(mix64(seed ^ 0x6a09e667f3bcc909ULL) ^ fnv1a(name)) ^ mix64(trial + 0x3c6ef372fe94f82bULL)) {}

  std::uint64_t next_u64() { return at_u64(counter_++); }
  double uniform() { return to_unit(next_u64()); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

  // Value at a fixed position, independent of how many values were consumed.
  std::uint64_t at_u64(std::uint64_t i) const { return mix64(key_ + (i + 1) * 0x9e3779b97f4a7c15ULL); }
  double uniform_at(std::uint64_t i) const { return to_unit(at_u64(i)); }
  bool bernoulli_at(std::uint64_t i, double p) const { return uniform_at(i) < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  static double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

namespace streams {
inline constexpr std::string_view kInstanceGen = "instance-gen";
inline constexpr std::string_view kConfigSampling = "config-sampling";
inline constexpr std::string_view kPermutation = "permutation";
inline constexpr std::string_view kQBits = "q-bits";
inline constexpr std::string_view kQTildeBits = "qtilde-bits";
inline constexpr std::string_view kAttenuationBits = "attenuation-bits";
inline constexpr std::string_view kSuggestions = "suggestions";
inline constexpr std::string_view kCoupler = "coupler";
}  // namespace streams

// ---------------------------------------------------------------------------
// Welford accumulator with deterministic merge.

class RunningStats {
 public:
  void add(double x) {
    ++n_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const RunningStats& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    std::uint64_t n = n_ + o.n_;
    double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / static_cast<double>(n);
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / static_cast<double>(n);
    n_ = n;
  }
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct SimReport {
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t trials = 0;
  double half_width = 0.0;
  std::optional<double> lp_value;
  std::optional<double> opt_value;
  std::optional<double> ratio_vs_lp;
  std::optional<double> ratio_vs_opt;

  double std_error() const { return trials ? std::sqrt(variance / static_cast<double>(trials)) : 0.0; }

  static SimReport from(const RunningStats& s) {
    SimReport r;
    r.mean = s.mean();
    r.variance = s.variance();
    r.trials = s.count();
    r.half_width = 1.96 * r.std_error();
    return r;
  }
  void set_comparators(std::optional<double> lp, std::optional<double> opt) {
    lp_value = lp;
    opt_value = opt;
    ratio_vs_lp.reset();
    ratio_vs_opt.reset();
    if (lp && *lp > 0) ratio_vs_lp = mean / *lp;
    if (opt && *opt > 0) ratio_vs_opt = mean / *opt;
  }
};

// Runs fn(chunk) for chunk in [0, n_chunks) on up to `workers` threads.
template <class F>
void parallel_chunks(std::size_t n_chunks, unsigned workers, F&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_chunks)));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < n_chunks; c += workers) fn(c);
    });
  for (auto& t : pool) t.join();
}

inline constexpr std::size_t kTrialChunk = 4096;

// Splits [0, trials) into fixed chunks, accumulates per chunk, merges in chunk order.
template <class Acc, class Body>
Acc chunked_trials(std::uint64_t trials, unsigned workers, const Acc& init, Body&& body) {
  std::size_t n_chunks = static_cast<std::size_t>((trials + kTrialChunk - 1) / kTrialChunk);
  std::vector<Acc> parts(n_chunks, init);
  parallel_chunks(n_chunks, workers, [&](std::size_t c) {
    std::uint64_t lo = c * kTrialChunk, hi = std::min<std::uint64_t>(trials, lo + kTrialChunk);
    for (std::uint64_t t = lo; t < hi; ++t) body(parts[c], t);
  });
  Acc out = init;
  for (auto& p : parts) out.merge(p);
  return out;
}

}  // namespace qcm
