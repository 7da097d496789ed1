#pragma once

#include <cstdint>

#include "equiflow/rng.hpp"
#include "equiflow/targets.hpp"

namespace equiflow {

struct HmcConfig {
  int leapfrog_steps = 30;
  double initial_step = 0.05;
  double target_accept = 0.65;
  double adapt_rate = 0.02;     // Robbins-Monro rate on log step size
  int burn_in = 2000;           // iterations discarded; adaptation runs in the first half
  int thin = 20;                // iterations between kept samples
  double init_scale = 1.0;      // stddev of the Gaussian chain start
};

struct McmcStats {
  double acceptance_rate = 0.0;
  double final_step_size = 0.0;
  std::int64_t iterations = 0;
};

// Single Hamiltonian Monte Carlo chain targeting exp(-U); returns `count`
// thinned samples (count, n, d), centered to zero CoM. Throws if the adapted
// chain still accepts fewer than 10% of proposals.
Tensor run_hmc_chain(const TargetSpec& spec, const HmcConfig& cfg, std::int64_t count, Rng& rng,
                     McmcStats* stats = nullptr);

}  // namespace equiflow
