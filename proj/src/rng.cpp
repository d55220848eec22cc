#include "fragalign/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fragalign {

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("rng bound must be positive");
  // rejection sampling over the largest multiple of bound
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % bound;
}

std::uint64_t word_seed(std::string_view word, std::uint64_t base_seed) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
  for (unsigned char c : word) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h ^ (base_seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
}

Vec random_unit_vector(Rng& rng, int dim) {
  if (dim <= 0) throw std::invalid_argument("vector dimension must be positive");
  Vec v(dim);
  double norm = 0;
  do {
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    norm = v.norm();
  } while (norm == 0);
  return v / norm;
}

}  // namespace fragalign
