#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "f2scil/tensor.hpp"

namespace f2scil {

using Rng = std::mt19937_64;

/// Components that draw randomness. Values are part of the seed derivation
/// and must not be renumbered.
enum class SeedTag : std::uint64_t {
  dataset = 1,
  schedule = 2,
  partition = 3,
  base_model = 4,
  base_training = 5,
  generator = 6,
  client = 7,
  head_expansion = 8,
  replay_noise = 9,
  student = 10,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for one component of a run: splitmix64 folded over
/// (master, tag, path...). Session and client indices go in the path, so
/// e.g. derive_seed(s, SeedTag::client, {t, m}) replays client m of
/// session t in isolation.
std::uint64_t derive_seed(std::uint64_t master, SeedTag tag, std::initializer_list<std::uint64_t> path = {});

Tensor normal_tensor(Tensor::Shape shape, Rng& rng, double stddev = 1.0);
Tensor uniform_tensor(Tensor::Shape shape, Rng& rng, double lo, double hi);

}  // namespace f2scil
