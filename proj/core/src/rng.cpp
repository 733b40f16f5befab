#include "zerodiff/rng.hpp"

#include <numeric>

namespace zdiff {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::derive(std::string_view purpose) const {
  return Rng(splitmix64(seed_ ^ fnv1a64(purpose)));
}

double Rng::uniform() {
  // 53 random bits -> [0, 1); avoids the implementation latitude of
  // std::uniform_real_distribution.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal_(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::size_t Rng::uniform_index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with our own index draws; std::shuffle's algorithm is
  // implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[uniform_index(i)]);
  }
  return idx;
}

}  // namespace zdiff
