#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "equiflow/params.hpp"

namespace equiflow {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int window_size = 100;     // gradient-norm history length
  double skip_factor = 20.0;  // skip the update beyond this multiple of the median
  double clip_factor = 5.0;   // rescale to this multiple of the median
};

// Adam behind a gradient-norm gate: a window of the last `window_size` raw
// norms defines a running median; once the window is full, steps with a norm
// above skip_factor * median are skipped entirely and norms above
// clip_factor * median are rescaled to exactly that value before Adam.
class WindowedAdam {
 public:
  WindowedAdam(OptimizerConfig cfg, const ParamStore& store);

  struct StepInfo {
    bool skipped = false;
    bool clipped = false;
    double raw_norm = 0.0;
    double used_norm = 0.0;
    double median = 0.0;
  };

  StepInfo step(ParamStore& store, const std::vector<Tensor>& grads, double lr);

  std::int64_t adam_steps() const { return adam_steps_; }
  std::int64_t skips() const { return skips_; }
  std::int64_t clips() const { return clips_; }
  double window_median() const;
  bool window_full() const { return static_cast<int>(window_.size()) >= cfg_.window_size; }

  // checkpoint plumbing
  std::vector<std::pair<std::string, Tensor>> state_tensors() const;
  void load_state_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::vector<double> window_;  // ring buffer of raw norms
  std::size_t window_pos_ = 0;
  std::int64_t adam_steps_ = 0, skips_ = 0, clips_ = 0;
};

struct LrSchedule {
  double initial = 2e-5;
  double peak = 2e-4;
  double final_value = 2e-5;
  std::int64_t warmup_steps = 1;
  std::int64_t total_steps = 1;
};

// linear warmup to the peak, cosine decay back to the final value
double lr_at(const LrSchedule& schedule, std::int64_t step);

}  // namespace equiflow
