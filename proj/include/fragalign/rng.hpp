#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "fragalign/types.hpp"

namespace fragalign {

// Deterministic RNG with hand-rolled draw algorithms on top of mt19937_64.
// std::*_distribution is implementation-defined, so we avoid it: identical
// seeds must reproduce identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // [0, 1) with 53 random bits
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only
  double normal();

  // unbiased draw from [0, bound), bound > 0
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// FNV-1a of the word mixed with a base seed; gives every word its own
// reproducible stream independent of corpus iteration order.
std::uint64_t word_seed(std::string_view word, std::uint64_t base_seed);

Vec random_unit_vector(Rng& rng, int dim);

}  // namespace fragalign
