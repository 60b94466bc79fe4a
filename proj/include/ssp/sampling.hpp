#pragma once

#include <cstdint>

#include "ssp/rng.hpp"
#include "ssp/stylegen.hpp"

namespace ssp {

// Sample i of a dataset is a pure function of (master seed, i).
inline LatentVector sample_latent(int d_z, std::uint64_t master_seed, std::uint64_t index) {
  Rng rng(mix_seed(master_seed, index));
  LatentVector z;
  z.values.resize(d_z);
  for (double& v : z.values) v = rng.next_normal();
  return z;
}

}  // namespace ssp
