#pragma once

#include <span>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/eval/protocol.hpp"
#include "arec/nn/rng.hpp"

namespace arec::baselines {

/// Uniform random permutation of the candidates; same seed, same order.
inline std::vector<data::VehicleId> random_ranker(std::span<const data::VehicleId> candidates, std::uint64_t seed) {
  std::vector<data::VehicleId> out(candidates.begin(), candidates.end());
  nn::Rng rng(seed, 0x72616e64);
  nn::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// i.i.d. uniform scores keyed by (seed, case index, candidate slot). Ties
/// have probability 2^-53 per pair, so the induced ranking is a uniform
/// permutation for all practical purposes.
inline eval::Scorer random_scorer(std::uint64_t seed) {
  return [seed](const eval::EvalCase& c) {
    const auto key = nn::derive_seed(seed, 0x72616e64, c.index);
    std::vector<double> s(c.candidates.size());
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = nn::bits_to_unit(nn::counter_bits(key, j));
    return s;
  };
}

}  // namespace arec::baselines
