#pragma once

#include "equiflow/flow.hpp"
#include "equiflow/targets.hpp"

namespace equiflow {

struct TrainLossConfig {
  double aux_weight = 10.0;       // collinearity barrier weight (Cartesian/Spherical)
  double mask_threshold = -1e4;   // samples with smaller joint log density are masked
};

struct LossResult {
  double loss = 0.0;
  std::vector<Tensor> grads;  // parameter order of the model store
  double aux = 0.0;
  double mean_log_q = 0.0;    // over unmasked samples
  int masked = 0;
  CouplingDiagnostics diag;
};

// -mean log q(x, a) with a ~ pi(.|x), plus the weighted collinearity barrier.
LossResult ml_loss(FlowModel& model, const Tensor& x_batch, const TrainLossConfig& cfg, Rng& rng);
// deterministic-noise variant; aug entries are the actual augmented positions
LossResult ml_loss_with_aug(FlowModel& model, const Tensor& x_batch,
                            const std::vector<Tensor>& aug, const TrainLossConfig& cfg);

// E_q[log q(x,a) + U(x) - log pi(a|x)] with reparameterized samples.
LossResult reverse_kl_loss(FlowModel& model, const TargetSpec& target, int batch,
                           const TrainLossConfig& cfg, Rng& rng);

}  // namespace equiflow
