#pragma once

#include <cstdint>
#include <random>

#include "lhz/diffcore/tensor.hpp"

namespace lhz {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream) pairs.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline diff::Tensor standard_normal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  diff::Tensor t(diff::Shape{n});
  for (std::size_t i = 0; i < n; ++i) t[i] = normal(rng);
  return t;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace lhz
