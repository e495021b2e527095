#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>

namespace pointview {

/// Seeded generator shared by every stochastic operation.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard. The
/// conversions to real and integer ranges are done here rather than through
/// <random> distributions, whose algorithms are implementation-defined, so a
/// seed yields the same draws on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal (Box-Muller, second value cached).
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace pointview
