#include "equiflow/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace equiflow {

WindowedAdam::WindowedAdam(OptimizerConfig cfg, const ParamStore& store) : cfg_(cfg) {
  for (int i = 0; i < store.count(); ++i) {
    m_.push_back(Tensor::zeros(store.value(i).shape()));
    v_.push_back(Tensor::zeros(store.value(i).shape()));
  }
  window_.reserve(cfg_.window_size);
}

double WindowedAdam::window_median() const {
  if (window_.empty()) return 0.0;
  std::vector<double> sorted = window_;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return sorted[half];
  return 0.5 * (sorted[half - 1] + sorted[half]);
}

WindowedAdam::StepInfo WindowedAdam::step(ParamStore& store, const std::vector<Tensor>& grads,
                                          double lr) {
  if (static_cast<int>(grads.size()) != store.count())
    throw std::invalid_argument("optimizer: gradient count mismatch");

  StepInfo info;
  double norm_sq = 0.0;
  for (const Tensor& g : grads)
    for (std::int64_t i = 0; i < g.size(); ++i) norm_sq += g[i] * g[i];
  info.raw_norm = std::sqrt(norm_sq);
  info.used_norm = info.raw_norm;

  const bool gate_active = window_full();
  info.median = gate_active ? window_median() : 0.0;

  auto push_norm = [&] {
    if (static_cast<int>(window_.size()) < cfg_.window_size) {
      window_.push_back(info.raw_norm);
    } else {
      window_[window_pos_] = info.raw_norm;
      window_pos_ = (window_pos_ + 1) % window_.size();
    }
  };

  if (gate_active && info.raw_norm > cfg_.skip_factor * info.median) {
    info.skipped = true;
    ++skips_;
    push_norm();
    return info;
  }

  double scale = 1.0;
  if (gate_active && info.raw_norm > cfg_.clip_factor * info.median) {
    scale = cfg_.clip_factor * info.median / info.raw_norm;
    info.clipped = true;
    info.used_norm = cfg_.clip_factor * info.median;
    ++clips_;
  }

  ++adam_steps_;
  const double t = static_cast<double>(adam_steps_);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t p = 0; p < grads.size(); ++p) {
    Tensor& value = store.value(static_cast<int>(p));
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    const Tensor& g = grads[p];
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }
  push_norm();
  return info;
}

std::vector<std::pair<std::string, Tensor>> WindowedAdam::state_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t p = 0; p < m_.size(); ++p) {
    out.emplace_back("opt.m." + std::to_string(p), m_[p]);
    out.emplace_back("opt.v." + std::to_string(p), v_[p]);
  }
  Tensor window(Shape{static_cast<std::int64_t>(window_.size()) + 1});
  window[0] = static_cast<double>(window_pos_);
  for (std::size_t i = 0; i < window_.size(); ++i) window[i + 1] = window_[i];
  out.emplace_back("opt.window", window);
  Tensor counters = Tensor::from(Shape{3}, {static_cast<double>(adam_steps_),
                                            static_cast<double>(skips_),
                                            static_cast<double>(clips_)});
  out.emplace_back("opt.counters", counters);
  return out;
}

void WindowedAdam::load_state_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  };
  for (std::size_t p = 0; p < m_.size(); ++p) {
    const Tensor* m = find("opt.m." + std::to_string(p));
    const Tensor* v = find("opt.v." + std::to_string(p));
    if (!m || !v) throw std::runtime_error("optimizer: missing moment tensors in checkpoint");
    m_[p] = *m;
    v_[p] = *v;
  }
  const Tensor* window = find("opt.window");
  const Tensor* counters = find("opt.counters");
  if (!window || !counters) throw std::runtime_error("optimizer: missing state in checkpoint");
  window_pos_ = static_cast<std::size_t>((*window)[0]);
  window_.clear();
  for (std::int64_t i = 1; i < window->size(); ++i) window_.push_back((*window)[i]);
  adam_steps_ = static_cast<std::int64_t>((*counters)[0]);
  skips_ = static_cast<std::int64_t>((*counters)[1]);
  clips_ = static_cast<std::int64_t>((*counters)[2]);
}

double lr_at(const LrSchedule& s, std::int64_t step) {
  if (step <= 0) return s.initial;
  if (step < s.warmup_steps) {
    const double t = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    return s.initial + (s.peak - s.initial) * t;
  }
  if (step >= s.total_steps) return s.final_value;
  const double t = static_cast<double>(step - s.warmup_steps) /
                   static_cast<double>(s.total_steps - s.warmup_steps);
  return s.final_value + (s.peak - s.final_value) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

}  // namespace equiflow
