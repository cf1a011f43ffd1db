#pragma once

// Deterministic random primitives.
//
// Everything random in the library flows through these helpers so that runs
// are bitwise reproducible from a seed. std::mt19937_64 is fully specified by
// the standard; the uniform and categorical transforms below are written out
// by hand because the standard library's distributions are
// implementation-defined and would break replay tests across toolchains.

#include <cstdint>
#include <random>
#include <span>

#include "delaylab/common.hpp"

namespace delaylab {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) using the top 53 bits of one generator draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Inverse-CDF draw from a vector of nonnegative weights (need not be
// normalized). Consumes exactly one generator draw. Floating-point roundoff
// at the top of the CDF falls back to the last positive-weight index.
inline int sample_weighted(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "sample_weighted: negative weight");
    total += w;
  }
  require(total > 0.0, "sample_weighted: weights sum to zero");
  const double x = uniform01(rng) * total;
  double cum = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
    if (weights[i] > 0.0) {
      cum += weights[i];
      last_positive = i;
      if (x < cum) return i;
    }
  }
  return last_positive;
}

// Independent, reproducible substream: one master seed fans out into
// per-purpose generators (environment, cost generation, schedules, ...) so
// adding draws to one consumer never perturbs another.
inline Rng substream(std::uint64_t master_seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32)};
  return Rng(seq);
}

}  // namespace delaylab
