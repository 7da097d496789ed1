#include "equiflow/hmc.hpp"

#include <cmath>
#include <stdexcept>

namespace equiflow {

namespace {

double kinetic(const Tensor& p) {
  double acc = 0;
  for (std::int64_t i = 0; i < p.size(); ++i) acc += p[i] * p[i];
  return 0.5 * acc;
}

}  // namespace

Tensor run_hmc_chain(const TargetSpec& spec, const HmcConfig& cfg, std::int64_t count, Rng& rng,
                     McmcStats* stats) {
  spec.validate();
  const std::int64_t n = spec.n;
  const int d = spec.d;
  const Shape state_shape{1, n, d};

  Tensor x = rng.normal_tensor(state_shape, cfg.init_scale);
  double u = batch_energy(x, spec).item();
  double log_step = std::log(cfg.initial_step);

  const std::int64_t total = cfg.burn_in + count * static_cast<std::int64_t>(cfg.thin);
  const std::int64_t adapt_until = cfg.burn_in / 2;
  std::int64_t accepted = 0, attempted = 0;

  Tensor samples(Shape{count, n, d});
  std::int64_t kept = 0;

  for (std::int64_t it = 0; it < total; ++it) {
    const double step = std::exp(log_step);
    Tensor p = rng.normal_tensor(state_shape);
    const double h0 = u + kinetic(p);

    Tensor xp = x;
    Tensor grad = batch_energy_gradient(xp, spec);
    // leapfrog
    for (std::int64_t i = 0; i < p.size(); ++i) p[i] -= 0.5 * step * grad[i];
    for (int leap = 0; leap < cfg.leapfrog_steps; ++leap) {
      for (std::int64_t i = 0; i < xp.size(); ++i) xp[i] += step * p[i];
      grad = batch_energy_gradient(xp, spec);
      const double half = (leap + 1 == cfg.leapfrog_steps) ? 0.5 : 1.0;
      for (std::int64_t i = 0; i < p.size(); ++i) p[i] -= half * step * grad[i];
    }
    const double u_new = batch_energy(xp, spec).item();
    const double h1 = u_new + kinetic(p);
    const double log_accept = h0 - h1;
    const double accept_prob = std::isfinite(log_accept) ? std::min(1.0, std::exp(log_accept)) : 0.0;
    ++attempted;
    if (std::log(rng.uniform() + 1e-300) < log_accept) {
      x = xp;
      u = u_new;
      ++accepted;
    }
    if (it < adapt_until) log_step += cfg.adapt_rate * (accept_prob - cfg.target_accept);

    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == cfg.thin - 1 && kept < count) {
      // center the stored configuration
      double com[3] = {0, 0, 0};
      for (std::int64_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) com[c] += x[i * d + c];
      for (int c = 0; c < d; ++c) com[c] /= static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) samples[(kept * n + i) * d + c] = x[i * d + c] - com[c];
      ++kept;
    }
  }

  const double rate = static_cast<double>(accepted) / static_cast<double>(attempted);
  if (stats) {
    stats->acceptance_rate = rate;
    stats->final_step_size = std::exp(log_step);
    stats->iterations = attempted;
  }
  if (rate < 0.10)
    throw std::runtime_error(
        "hmc: acceptance rate " + std::to_string(rate) +
        " after adaptation; reduce initial_step or leapfrog_steps in the sampler config");
  if (kept != count) throw std::logic_error("hmc: sample bookkeeping failure");
  return samples;
}

}  // namespace equiflow
