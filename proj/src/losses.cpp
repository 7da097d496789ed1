#include "equiflow/losses.hpp"

#include <cmath>

namespace equiflow {

namespace {

// 1 for usable samples, 0 for masked; non-finite entries are reported
// separately because they must be removed from the graph, not just weighted
struct MaskInfo {
  Tensor mask;
  int masked = 0;
  bool any_nonfinite = false;
  std::int64_t live = 0;
};

MaskInfo build_mask(const Tensor& per_sample, double threshold) {
  MaskInfo info;
  info.mask = Tensor(per_sample.shape());
  for (std::int64_t i = 0; i < per_sample.size(); ++i) {
    const double v = per_sample[i];
    const bool finite = std::isfinite(v);
    info.any_nonfinite = info.any_nonfinite || !finite;
    const bool keep = finite && v >= threshold;
    info.mask[i] = keep ? 1.0 : 0.0;
    if (keep) ++info.live;
    else ++info.masked;
  }
  return info;
}

Tensor filter_rows(const Tensor& t, const Tensor& mask) {
  const std::int64_t rows = t.shape()[0];
  const std::int64_t inner = t.size() / rows;
  std::int64_t keep = 0;
  for (std::int64_t r = 0; r < rows; ++r) keep += mask[r] > 0.5 ? 1 : 0;
  Tensor out(t.shape().replaced(0, keep));
  std::int64_t w = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (mask[r] <= 0.5) continue;
    std::memcpy(out.data() + w * inner, t.data() + r * inner,
                static_cast<std::size_t>(inner) * sizeof(double));
    ++w;
  }
  return out;
}

LossResult finish(FlowModel& model, Tape& tape, ParamBinding& bind, Var per_sample, Var aux,
                  const MaskInfo& info, const TrainLossConfig& cfg, int extra_masked) {
  LossResult out;
  out.masked = info.masked + extra_masked;
  Var weighted = mul(per_sample, tape.constant(info.mask));
  Var mean_term = scale(sum_all(weighted), 1.0 / static_cast<double>(std::max<std::int64_t>(1, info.live)));
  Var loss = model.config().kind == ProjectionKind::Vector
                 ? mean_term
                 : add(mean_term, scale(aux, cfg.aux_weight));
  tape.keep(mean_term);
  tape.keep(aux);
  tape.backward(loss);
  out.loss = loss.val().item();
  out.aux = aux.val().item();
  out.grads = bind.grads();
  return out;
}

}  // namespace

LossResult ml_loss_with_aug(FlowModel& model, const Tensor& x_batch,
                            const std::vector<Tensor>& aug, const TrainLossConfig& cfg) {
  int extra_masked = 0;
  Tensor x = x_batch;
  std::vector<Tensor> a = aug;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Tape tape;
    ParamBinding bind(tape, model.params(), true);
    LossResult out;
    std::vector<Var> avars;
    for (const Tensor& t : a) avars.push_back(tape.constant(t));
    auto dens = model.joint_log_density(tape, bind, tape.constant(x), avars, &out.diag,
                                        /*strict=*/false);
    tape.keep(dens.log_density);
    MaskInfo info = build_mask(dens.log_density.val(), cfg.mask_threshold);
    if (info.any_nonfinite && attempt == 0 && info.live > 0) {
      // non-finite rows poison gradients; rebuild the graph without them
      extra_masked = info.masked;
      Tensor keep_mask = info.mask;
      x = filter_rows(x, keep_mask);
      for (Tensor& t : a) t = filter_rows(t, keep_mask);
      continue;
    }
    Var per_sample = neg(dens.log_density);
    LossResult res = finish(model, tape, bind, per_sample, dens.aux, info, cfg, extra_masked);
    res.diag = out.diag;
    double acc = 0;
    for (std::int64_t i = 0; i < info.mask.size(); ++i)
      if (info.mask[i] > 0.5) acc += dens.log_density.val()[i];
    res.mean_log_q = info.live ? acc / info.live : 0.0;
    return res;
  }
  throw std::runtime_error("ml_loss: batch produced no finite joint densities");
}

LossResult ml_loss(FlowModel& model, const Tensor& x_batch, const TrainLossConfig& cfg, Rng& rng) {
  const double eta = model.config().aug_scale;
  std::vector<Tensor> aug;
  for (int i = 0; i < model.config().num_aug_sets; ++i)
    aug.push_back(t_add(x_batch, rng.normal_tensor(x_batch.shape(), eta)));
  return ml_loss_with_aug(model, x_batch, aug, cfg);
}

LossResult reverse_kl_loss(FlowModel& model, const TargetSpec& target, int batch,
                           const TrainLossConfig& cfg, Rng& rng) {
  target.validate();
  JointSample base = model.base_sample(rng, batch);
  int extra_masked = 0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Tape tape;
    ParamBinding bind(tape, model.params(), true);
    LossResult out;
    FlowModel::FlowSample fs = model.sample_from_base(tape, bind, base, &out.diag);
    Var energy = energy_op(fs.state.x, target);
    Var log_pi = augmented_log_density(fs.state.aug, fs.state.x, model.config().aug_scale);
    Var per_sample = sub(add(fs.log_density, energy), log_pi);
    tape.keep(per_sample);
    tape.keep(fs.log_density);
    MaskInfo info = build_mask(per_sample.val(), -std::fabs(cfg.mask_threshold));
    // the reverse KL masks on extreme |term| in either direction
    for (std::int64_t i = 0; i < info.mask.size(); ++i)
      if (info.mask[i] > 0.5 && per_sample.val()[i] > std::fabs(cfg.mask_threshold)) {
        info.mask[i] = 0.0;
        --info.live;
        ++info.masked;
      }
    if (info.any_nonfinite && attempt == 0 && info.live > 0) {
      extra_masked = info.masked;
      Tensor keep = info.mask;
      base.x = filter_rows(base.x, keep);
      for (Tensor& t : base.aug) t = filter_rows(t, keep);
      continue;
    }
    LossResult res = finish(model, tape, bind, per_sample, fs.aux, info, cfg, extra_masked);
    res.diag = out.diag;
    double acc = 0;
    for (std::int64_t i = 0; i < info.mask.size(); ++i)
      if (info.mask[i] > 0.5) acc += fs.log_density.val()[i];
    res.mean_log_q = info.live ? acc / info.live : 0.0;
    return res;
  }
  throw std::runtime_error("reverse_kl_loss: no finite sample terms");
}

}  // namespace equiflow
