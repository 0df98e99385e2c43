#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace darkhash {

using Rng = std::mt19937_64;

// Derives an independent seed for a named substream ("data", "init",
// "attack", "eval", ...) from a root seed, so that changing one stage's
// consumption of randomness never perturbs another stage.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

}  // namespace darkhash
