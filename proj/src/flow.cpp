#include "equiflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace equiflow {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Var batch_com(Var v) { return mean_axis(v, 1, true); }  // (B,1,d)

void shift_all(JointVars& s, Var delta, bool subtract) {
  if (subtract) {
    s.x = sub(s.x, delta);
    for (Var& a : s.aug) a = sub(a, delta);
  } else {
    s.x = add(s.x, delta);
    for (Var& a : s.aug) a = add(a, delta);
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double FlowConfig::com_tolerance() const {
  return 1e-8 * std::sqrt(static_cast<double>(particle_count));
}

void FlowConfig::validate() const {
  if (num_blocks < 1 || transforms_per_block < 1)
    throw std::invalid_argument("flow: blocks and transforms per block must be >= 1");
  if (num_aug_sets < 1 || num_aug_sets % 2 == 0)
    throw std::invalid_argument("flow: the coupling split requires an odd number of augmented sets");
  if (!(aug_scale > 0)) throw std::invalid_argument("flow: aug_scale must be > 0");
  if (particle_count < 2) throw std::invalid_argument("flow: need at least two particles");
  if (dim != 2 && dim != 3) throw std::invalid_argument("flow: dim must be 2 or 3");
  if (spline_bins < 2) throw std::invalid_argument("flow: spline_bins must be >= 2");
}

std::map<std::string, std::string> FlowConfig::to_manifest() const {
  std::map<std::string, std::string> kv;
  kv["flow.blocks"] = std::to_string(num_blocks);
  kv["flow.transforms_per_block"] = std::to_string(transforms_per_block);
  kv["flow.aug_sets"] = std::to_string(num_aug_sets);
  kv["flow.aug_scale"] = fmt_double(aug_scale);
  kv["flow.projection"] = to_string(kind);
  kv["flow.inner"] = to_string(inner);
  kv["flow.spline_bins"] = std::to_string(spline_bins);
  kv["flow.cart_limit"] = fmt_double(cart_limit);
  kv["flow.radial_limit"] = fmt_double(radial_limit);
  kv["flow.parity_correction"] = parity_correction ? "1" : "0";
  kv["flow.aux_epsilon"] = fmt_double(aux_epsilon);
  kv["flow.pole_threshold"] = fmt_double(pole_threshold);
  kv["flow.particles"] = std::to_string(particle_count);
  kv["flow.dim"] = std::to_string(dim);
  kv["egnn.layers"] = std::to_string(egnn_layers);
  kv["egnn.hidden"] = std::to_string(egnn_hidden);
  kv["egnn.mlp_depth"] = std::to_string(egnn_mlp_depth);
  return kv;
}

FlowConfig FlowConfig::from_manifest(const std::map<std::string, std::string>& kv) {
  FlowConfig cfg;
  auto want = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("manifest: missing key " + key);
    return it->second;
  };
  cfg.num_blocks = std::stoi(want("flow.blocks"));
  cfg.transforms_per_block = std::stoi(want("flow.transforms_per_block"));
  cfg.num_aug_sets = std::stoi(want("flow.aug_sets"));
  cfg.aug_scale = std::stod(want("flow.aug_scale"));
  const std::string kind = want("flow.projection");
  if (kind == "vector") cfg.kind = ProjectionKind::Vector;
  else if (kind == "cartesian") cfg.kind = ProjectionKind::Cartesian;
  else if (kind == "spherical") cfg.kind = ProjectionKind::Spherical;
  else throw std::runtime_error("manifest: unknown projection " + kind);
  cfg.inner = want("flow.inner") == "affine" ? InnerBijector::Affine : InnerBijector::Spline;
  cfg.spline_bins = std::stoi(want("flow.spline_bins"));
  cfg.cart_limit = std::stod(want("flow.cart_limit"));
  cfg.radial_limit = std::stod(want("flow.radial_limit"));
  cfg.parity_correction = want("flow.parity_correction") == "1";
  cfg.aux_epsilon = std::stod(want("flow.aux_epsilon"));
  cfg.pole_threshold = std::stod(want("flow.pole_threshold"));
  cfg.particle_count = std::stoi(want("flow.particles"));
  cfg.dim = std::stoi(want("flow.dim"));
  cfg.egnn_layers = std::stoi(want("egnn.layers"));
  cfg.egnn_hidden = std::stoi(want("egnn.hidden"));
  cfg.egnn_mlp_depth = std::stoi(want("egnn.mlp_depth"));
  return cfg;
}

FlowModel::FlowModel(FlowConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  group_split_ = (cfg_.num_aug_sets - 1) / 2;
  const int group_size = group_split_ + 1;  // both coupling groups have this size
  Rng init_rng(init_seed);

  CouplingConfig ccfg;
  ccfg.kind = cfg_.kind;
  ccfg.inner = cfg_.inner;
  ccfg.spline_bins = cfg_.spline_bins;
  ccfg.cart_limit = cfg_.cart_limit;
  ccfg.radial_limit = cfg_.radial_limit;
  ccfg.parity_correction = cfg_.parity_correction;
  ccfg.aux_epsilon = cfg_.aux_epsilon;
  ccfg.pole_threshold = cfg_.pole_threshold;

  EgnnConfig egnn;
  egnn.num_layers = cfg_.egnn_layers;
  egnn.hidden_width = cfg_.egnn_hidden;
  egnn.mlp_depth = cfg_.egnn_mlp_depth;
  egnn.num_output_sets = 1;  // independent conditioner per core transform
  egnn.num_out_channels = group_size;
  egnn.refs_per_set = refs_per_set(cfg_.kind, cfg_.dim);
  egnn.num_position_channels = group_size;
  egnn.params_per_atom = coupling_params_per_atom(ccfg, cfg_.dim);

  couplings_.resize(cfg_.num_blocks);
  for (int l = 0; l < cfg_.num_blocks; ++l) {
    couplings_[l].resize(2);
    for (int half = 0; half < 2; ++half) {
      for (int m = 0; m < cfg_.transforms_per_block; ++m) {
        CouplingUnit unit;
        const std::string prefix = "b" + std::to_string(l) + ".h" + std::to_string(half) +
                                   ".m" + std::to_string(m);
        unit.egnn = std::make_unique<Egnn>(egnn, store_, prefix, init_rng);
        unit.coupling = ccfg;
        couplings_[l][half].push_back(std::move(unit));
      }
    }
  }
}

TransformResult FlowModel::block(Tape& tape, ParamBinding& bind, JointVars state, int l,
                                 Direction dir, CouplingDiagnostics* diag, bool strict) const {
  const int k = cfg_.num_aug_sets;
  const int js = group_split_;  // pivot augmented set
  const int u = refs_per_set(cfg_.kind, cfg_.dim);
  const int p = couplings_[0][0][0].egnn->config().params_per_atom;
  Var logdet{}, aux{};
  int aux_terms = 0;

  // members of each coupling group; x is entry 0 of group A
  auto group_a = [&](JointVars& s) {
    std::vector<Var*> g{&s.x};
    for (int i = 0; i < js; ++i) g.push_back(&s.aug[i]);
    return g;
  };
  auto group_b = [&](JointVars& s) {
    std::vector<Var*> g;
    for (int i = js; i < k; ++i) g.push_back(&s.aug[i]);
    return g;
  };

  auto run_couplings = [&](int half, std::vector<Var*> moving, std::vector<Var*> held,
                           bool inverse) {
    std::vector<int> order;
    for (int m = 0; m < cfg_.transforms_per_block; ++m) order.push_back(m);
    if (inverse) std::reverse(order.begin(), order.end());
    for (int m : order) {
      const CouplingUnit& unit = couplings_[l][half][m];
      CouplingConfig ccfg = unit.coupling;
      ccfg.strict = strict;
      std::vector<Var> channels;
      for (Var* h : held) channels.push_back(*h);
      ConditionerOutput cond = unit.egnn->forward(tape, bind, channels);
      for (std::size_t t = 0; t < moving.size(); ++t) {
        Var refs = slice(cond.references, 2, static_cast<std::int64_t>(t) * u, u);
        Var raw = slice(cond.params, 2, static_cast<std::int64_t>(t) * p, p);
        CoreResult r = core_coupling(*moving[t], refs, raw, ccfg, inverse, diag);
        *moving[t] = r.out;
        logdet = logdet.valid() ? add(logdet, r.logdet) : r.logdet;
        aux = aux.valid() ? add(aux, r.aux) : r.aux;
        ++aux_terms;
      }
    }
  };

  if (dir == Direction::Normalizing) {
    shift_all(state, batch_com(state.aug[js]), true);  // lift x off the CoM plane
    run_couplings(0, group_a(state), group_b(state), false);
    shift_all(state, batch_com(state.x), true);        // return x to the plane
    run_couplings(1, group_b(state), group_a(state), false);
  } else {
    // each shift stage is inverted by shifting on the variable that was
    // zero-CoM before the stage ran (its CoM now holds minus the old pivot)
    run_couplings(1, group_b(state), group_a(state), true);
    shift_all(state, batch_com(state.aug[js]), true);
    run_couplings(0, group_a(state), group_b(state), true);
    shift_all(state, batch_com(state.x), true);
  }

  // cancel accumulated floating-point drift on the constrained variable
  state.x = sub(state.x, batch_com(state.x));

  TransformResult out;
  out.state = std::move(state);
  out.logdet = logdet;
  out.aux = aux_terms ? scale(aux, 1.0 / aux_terms) : tape.constant_scalar(0.0);
  return out;
}

TransformResult FlowModel::transform(Tape& tape, ParamBinding& bind, JointVars state,
                                     Direction dir, CouplingDiagnostics* diag, bool strict) const {
  Var logdet{}, aux{};
  const int blocks = cfg_.num_blocks;
  for (int i = 0; i < blocks; ++i) {
    const int l = dir == Direction::Normalizing ? i : blocks - 1 - i;
    TransformResult r = block(tape, bind, std::move(state), l, dir, diag, strict);
    state = std::move(r.state);
    logdet = logdet.valid() ? add(logdet, r.logdet) : r.logdet;
    aux = aux.valid() ? add(aux, r.aux) : r.aux;
  }
  TransformResult out;
  out.state = std::move(state);
  out.logdet = logdet;
  out.aux = scale(aux, 1.0 / blocks);
  return out;
}

Var FlowModel::base_log_density(Tape& tape, const JointVars& state) const {
  (void)tape;
  const std::int64_t n = cfg_.particle_count;
  const int d = cfg_.dim;
  const double eta2 = cfg_.aug_scale * cfg_.aug_scale;

  const Tensor com = t_sum_axis(state.x.val(), 1, false);  // (B,d) of sums
  const double tol = cfg_.com_tolerance() * static_cast<double>(n);
  for (std::int64_t i = 0; i < com.size(); ++i)
    if (std::fabs(com[i]) > tol)
      throw std::invalid_argument("base_log_density: observation is off the zero-CoM plane");

  const double dof_x = static_cast<double>(d) * (n - 1);
  Var sq_x = sum_axis(sum_axis(square(state.x), -1, false), -1, false);  // (B)
  Var log_nx = add_scalar(scale(sq_x, -0.5), -0.5 * dof_x * kLog2Pi);

  const double aug_norm = -0.5 * static_cast<double>(n) * d *
                          (kLog2Pi + 2.0 * std::log(cfg_.aug_scale));
  Var total = log_nx;
  for (const Var& a : state.aug) {
    Var diff = sub(a, state.x);
    Var sq = sum_axis(sum_axis(square(diff), -1, false), -1, false);
    total = add(total, add_scalar(scale(sq, -0.5 / eta2), aug_norm));
  }
  return total;
}

JointSample FlowModel::base_sample(Rng& rng, int batch) const {
  const std::int64_t n = cfg_.particle_count;
  const int d = cfg_.dim;
  JointSample s;
  s.x = rng.normal_tensor(Shape{batch, n, d});
  // exact zero CoM per sample
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < d; ++c) {
      double mean = 0.0;
      for (std::int64_t i = 0; i < n; ++i) mean += s.x[(b * n + i) * d + c];
      mean /= static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i) s.x[(b * n + i) * d + c] -= mean;
    }
  for (int i = 0; i < cfg_.num_aug_sets; ++i)
    s.aug.push_back(t_add(s.x, rng.normal_tensor(Shape{batch, n, d}, cfg_.aug_scale)));
  return s;
}

FlowModel::DensityResult FlowModel::joint_log_density(Tape& tape, ParamBinding& bind, Var x_raw,
                                                      const std::vector<Var>& aug,
                                                      CouplingDiagnostics* diag,
                                                      bool strict) const {
  if (static_cast<int>(aug.size()) != cfg_.num_aug_sets)
    throw std::invalid_argument("joint_log_density: wrong number of augmented sets");
  JointVars state;
  Var xbar = batch_com(x_raw);
  state.x = sub(x_raw, xbar);
  for (Var a : aug) state.aug.push_back(sub(a, xbar));
  TransformResult r = transform(tape, bind, std::move(state), Direction::Normalizing, diag, strict);
  DensityResult out;
  out.log_density = add(base_log_density(tape, r.state), r.logdet);
  out.aux = r.aux;
  out.base_state = std::move(r.state);
  return out;
}

FlowModel::FlowSample FlowModel::sample(Tape& tape, ParamBinding& bind, Rng& rng, int batch,
                                        CouplingDiagnostics* diag) const {
  return sample_from_base(tape, bind, base_sample(rng, batch), diag);
}

FlowModel::FlowSample FlowModel::sample_from_base(Tape& tape, ParamBinding& bind,
                                                  const JointSample& base,
                                                  CouplingDiagnostics* diag) const {
  JointVars state;
  state.x = tape.constant(base.x);
  for (const Tensor& a : base.aug) state.aug.push_back(tape.constant(a));
  Var base_ld = base_log_density(tape, state);
  TransformResult r = transform(tape, bind, std::move(state), Direction::Generating, diag,
                                /*strict=*/false);
  FlowSample out;
  out.state = std::move(r.state);
  out.log_density = sub(base_ld, r.logdet);
  out.aux = r.aux;
  return out;
}

JointSample FlowModel::sample_values(Rng& rng, int batch, Tensor* log_density,
                                     CouplingDiagnostics* diag) const {
  Tape tape;
  ParamBinding bind(tape, store_, false);
  FlowSample s = sample(tape, bind, rng, batch, diag);
  JointSample out;
  out.x = s.state.x.val();
  for (const Var& a : s.state.aug) out.aug.push_back(a.val());
  if (log_density) *log_density = s.log_density.val();
  return out;
}

Tensor FlowModel::joint_log_density_values(const JointSample& s,
                                           CouplingDiagnostics* diag) const {
  Tape tape;
  ParamBinding bind(tape, store_, false);
  std::vector<Var> aug;
  for (const Tensor& a : s.aug) aug.push_back(tape.constant(a));
  DensityResult r = joint_log_density(tape, bind, tape.constant(s.x), aug, diag,
                                      /*strict=*/false);
  return r.log_density.val();
}

}  // namespace equiflow
