#pragma once

// Shared plumbing: error taxonomy, FNV hashing, deterministic RNG and a
// small thread helper. Everything downstream assumes equal seeds give
// equal results on every platform, so the random draws are derived from
// mt19937_64 (whose output sequence the standard fixes) by hand instead
// of going through std:: distributions (whose output it does not).

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace trialrisk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data violates a schema or an operation precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Structurally malformed input (CSV framing, JSON syntax, artifact layout).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Bad configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// A split plan failed its disjointness/exhaustiveness gate.
class LeakageError : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t state = 14695981039346656037ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state ^= bytes[i];
    state *= 1099511628211ull;
  }
  return state;
}

inline std::uint64_t fnv1a64(std::string_view text,
                             std::uint64_t state = 14695981039346656037ull) {
  return fnv1a64(text.data(), text.size(), state);
}

inline std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // (0, 1]
  double uniform_pos() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Box-Muller; two engine draws per variate.
  double normal() {
    const double u = uniform_pos();
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * 3.14159265358979323846 * v);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer in [0, n). Lemire-style rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::below: n must be positive");
    const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next();
      if (x >= threshold) return x % n;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Runs fn(i) for i in [0, n) across up to n_threads workers. Each index is
// handled by exactly one worker, so results must be written to disjoint
// slots; with that discipline the outcome is independent of worker count.
inline void parallel_for_index(std::size_t n, int n_threads,
                               const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(n, n_threads > 1 ? static_cast<std::size_t>(n_threads) : 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace trialrisk
