#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace zdiff {

// Seeded random stream. Independent consumers (weight init, noise, dropout,
// shuffling) each take a stream derived from a root seed by purpose name, so
// adding a consumer never perturbs the draws seen by the others:
//
//   derived_seed = splitmix64(seed ^ fnv1a64(purpose))
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  Rng derive(std::string_view purpose) const;

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p);
  std::size_t uniform_index(std::size_t n);  // [0, n)

  std::vector<std::size_t> permutation(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace zdiff
