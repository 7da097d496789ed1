#pragma once

#include <string>
#include <vector>

#include "equiflow/params.hpp"

namespace equiflow {

struct EgnnConfig {
  int num_layers = 3;
  int hidden_width = 64;
  int mlp_depth = 2;
  int num_output_sets = 1;        // M: coupling transforms served per forward pass
  int num_out_channels = 1;       // T: variables transformed by each coupling
  int refs_per_set = 3;           // u: reference points per (set, channel, atom)
  int num_position_channels = 1;  // C: conditioning position channels
  int params_per_atom = 0;        // P: inner-bijector parameters per (set, channel, atom)
  double distance_epsilon = 1e-8;

  void validate() const;
};

// references: (B, n, M*T*u, d) equivariant points;
// params:     (B, n, M*T*P) rotation/translation-invariant scalars.
struct ConditionerOutput {
  Var references;
  Var params;
};

// E(n)-GNN over the fully connected graph of n particles with multi-channel
// positions. Invariant node features start at zero and interact through
// squared distances of every ordered channel pair; position channels are
// updated with normalized radial directions. Parameter heads read the final
// invariant features through a softmax stabilizer; reference heads combine
// radial directions with zero-initialized learned weights plus fixed distance
// kernels so frames are well-conditioned at initialization while inner
// transforms start at the identity.
class Egnn {
 public:
  Egnn(const EgnnConfig& cfg, ParamStore& store, const std::string& prefix, Rng& init_rng);

  // channels: C vars, each (B, n, d)
  ConditionerOutput forward(Tape& tape, ParamBinding& bind,
                            const std::vector<Var>& channels) const;

  const EgnnConfig& config() const { return cfg_; }

 private:
  struct Mlp {
    std::vector<int> w, b;
  };
  struct Layer {
    Mlp edge, node;
    int pos_w = -1, pos_b = -1;
  };

  Mlp make_mlp(ParamStore& store, const std::string& prefix, int in, int hidden, int out,
               Rng& rng, bool zero_last);

  EgnnConfig cfg_;
  std::vector<Layer> layers_;
  int ref_w_ = -1, ref_b_ = -1;
  int par_w_ = -1, par_b_ = -1;
};

}  // namespace equiflow
