#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vat {

// FNV-1a over a tag string, folded into a master seed. Gives every consumer
// of randomness its own deterministic stream.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view tag) {
  return std::mt19937_64(mix_seed(seed, tag));
}

// Beta(alpha, alpha) draw via two gamma variates.
double sample_beta(std::mt19937_64& rng, double alpha);

// 0..n-1 shuffled with the given stream; the batch-order primitive for
// deterministic training.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

}  // namespace vat
