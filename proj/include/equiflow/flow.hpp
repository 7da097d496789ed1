#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "equiflow/coupling.hpp"
#include "equiflow/egnn.hpp"

namespace equiflow {

struct FlowConfig {
  int num_blocks = 12;           // L
  int transforms_per_block = 1;  // M core transforms per coupling layer
  int num_aug_sets = 1;          // k (odd); the coupling split needs (k+1)/2 groups
  double aug_scale = 0.1;        // eta of the base / augmented target
  ProjectionKind kind = ProjectionKind::Spherical;
  InnerBijector inner = InnerBijector::Spline;
  int spline_bins = 8;
  double cart_limit = 10.0;
  double radial_limit = 10.0;
  bool parity_correction = false;
  double aux_epsilon = 1e-6;
  double pole_threshold = 1e-7;
  int particle_count = 4;  // n
  int dim = 2;             // d

  // conditioner size knobs; structural fields are derived internally
  int egnn_layers = 3;
  int egnn_hidden = 64;
  int egnn_mlp_depth = 2;

  double com_tolerance() const;
  void validate() const;

  std::map<std::string, std::string> to_manifest() const;
  static FlowConfig from_manifest(const std::map<std::string, std::string>& kv);
};

struct JointVars {
  Var x;                 // (B, n, d), zero-CoM at model boundaries
  std::vector<Var> aug;  // k entries, each (B, n, d), unconstrained
};

struct JointSample {
  Tensor x;
  std::vector<Tensor> aug;
  std::int64_t batch() const { return x.shape()[0]; }
};

enum class Direction { Normalizing, Generating };

struct TransformResult {
  JointVars state;
  Var logdet;  // (B)
  Var aux;     // scalar collinearity barrier averaged over couplings
};

class FlowModel {
 public:
  FlowModel(FlowConfig cfg, std::uint64_t init_seed);

  const FlowConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Applies all blocks. Normalizing: data space -> base space (density
  // direction); Generating: base -> data (sampling direction).
  TransformResult transform(Tape& tape, ParamBinding& bind, JointVars state, Direction dir,
                            CouplingDiagnostics* diag = nullptr, bool strict = true) const;

  // One block, exposed for unit tests.
  TransformResult block(Tape& tape, ParamBinding& bind, JointVars state, int block_index,
                        Direction dir, CouplingDiagnostics* diag = nullptr,
                        bool strict = true) const;

  Var base_log_density(Tape& tape, const JointVars& state) const;
  JointSample base_sample(Rng& rng, int batch) const;

  struct DensityResult {
    Var log_density;  // (B)
    Var aux;          // scalar
    JointVars base_state;
  };
  // Centers on the observation CoM, then runs normalizing blocks (joint
  // density w.r.t. the zero-CoM hyperplane times ambient augmented space).
  DensityResult joint_log_density(Tape& tape, ParamBinding& bind, Var x_raw,
                                  const std::vector<Var>& aug,
                                  CouplingDiagnostics* diag = nullptr, bool strict = true) const;

  struct FlowSample {
    JointVars state;
    Var log_density;  // (B)
    Var aux;
  };
  FlowSample sample(Tape& tape, ParamBinding& bind, Rng& rng, int batch,
                    CouplingDiagnostics* diag = nullptr) const;
  FlowSample sample_from_base(Tape& tape, ParamBinding& bind, const JointSample& base,
                              CouplingDiagnostics* diag = nullptr) const;

  // Value-level conveniences.
  JointSample sample_values(Rng& rng, int batch, Tensor* log_density = nullptr,
                            CouplingDiagnostics* diag = nullptr) const;
  Tensor joint_log_density_values(const JointSample& s, CouplingDiagnostics* diag = nullptr) const;

 private:
  struct CouplingUnit {
    std::unique_ptr<Egnn> egnn;
    CouplingConfig coupling;
  };

  // couplings_[block][half][m]
  std::vector<std::vector<std::vector<CouplingUnit>>> couplings_;
  FlowConfig cfg_;
  ParamStore store_;
  int group_split_ = 0;  // (k-1)/2: aug sets 0..split-1 transform with x
};

}  // namespace equiflow
