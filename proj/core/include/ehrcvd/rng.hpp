#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ehrcvd {

/// splitmix64 finalizer. Used to derive independent child seeds from a
/// parent seed and a stream label, e.g. derive_seed(seed, patient_index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Project-wide random generator: std::mt19937_64 underneath, with the
/// distributions implemented here so sampled values are identical across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer on [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double sd = 1.0);
  /// Knuth's multiplication method; fine for the small means used here.
  std::int64_t poisson(double mean);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ehrcvd
