#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace icfit {

using Rng = std::mt19937_64;

// Mixes a master seed with a list of stream coordinates (chain, iteration,
// row, ...) into an independent 64-bit seed. Used everywhere a substream is
// needed so results do not depend on thread scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0);

// Gamma with the given shape and unit scale.
double draw_gamma(Rng& rng, double shape);

}  // namespace icfit
