#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace maepde::numkit {

using Rng = std::mt19937_64;

/// SplitMix64 mixing of (master, index) into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Random permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace maepde::numkit
