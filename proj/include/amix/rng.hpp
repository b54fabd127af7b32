#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace amix {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// Seeded random source. Every distribution is implemented here on top of
/// the raw engine output so streams are reproducible across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Child stream derived from a root seed and a stream name.
  static Rng stream(std::uint64_t root_seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal (Box-Muller, no cached second variate).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  /// Beta(a, b) from two Gamma variates.
  double beta(double a, double b);

  /// Engine state as text; restore() accepts exactly what state() produced.
  std::string state() const;
  void restore(const std::string& state);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace amix
