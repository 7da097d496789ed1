#pragma once

#include <string>
#include <vector>

#include "equiflow/autodiff.hpp"
#include "equiflow/rng.hpp"

namespace equiflow {

enum class TargetKind { DW4, LJ13, IsotropicGaussian };

const char* to_string(TargetKind kind);
TargetKind target_kind_from_string(const std::string& name);

// Boltzmann targets p(x) ~ exp(-U(x)). Constants default to the reference
// parameterizations of the DW4 / LJ13 particle systems and stay overridable.
struct TargetSpec {
  TargetKind kind = TargetKind::DW4;
  int n = 4;
  int d = 2;
  double temperature = 1.0;  // tau

  double dw_a = 0.0, dw_b = -4.0, dw_c = 0.9, dw_d0 = 4.0;
  double lj_eps = 1.0, lj_rm = 1.0, lj_osc = 0.5;
  double lj_grad_floor = 1e-4;  // distance floor used in gradients only
  double gauss_sigma = 1.0;

  static TargetSpec dw4();
  static TargetSpec lj13();
  static TargetSpec gaussian(int n, int d, double sigma);
  void validate() const;
};

// batched energies over (B, n, d); coincident LJ atoms give +inf, never NaN
Tensor batch_energy(const Tensor& x, const TargetSpec& spec);
Tensor batch_energy_gradient(const Tensor& x, const TargetSpec& spec);
double energy(const Tensor& x, const TargetSpec& spec);           // (n, d)
Tensor energy_gradient(const Tensor& x, const TargetSpec& spec);  // (n, d)

// tape node: value uses the raw energy, backward the floored gradient
Var energy_op(Var x, const TargetSpec& spec);

// log pi(a | x) = sum_i log N(a_i; x, eta^2 I), batched -> (B)
Tensor augmented_log_density_values(const std::vector<Tensor>& aug, const Tensor& x, double eta);
Var augmented_log_density(const std::vector<Var>& aug, Var x, double eta);

}  // namespace equiflow
