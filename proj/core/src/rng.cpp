#include "vat/rng.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace vat {

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer to spread low-entropy tags
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

double sample_beta(std::mt19937_64& rng, double alpha) {
  if (alpha <= 0.0) {
    throw std::invalid_argument("sample_beta: alpha must be > 0");
  }
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace vat
