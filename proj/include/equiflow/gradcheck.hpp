#pragma once

#include <functional>
#include <string>
#include <vector>

#include "equiflow/params.hpp"

namespace equiflow {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
};

// Central-difference check of the tape gradient of a scalar loss with respect
// to trainable parameters: max over scalars of
// |analytic - fd| / (|fd| + 1e-8), fd with step h.
// `build` must construct the same loss from any (tape, binding) pair.
// Empty `ids` checks every parameter in the store.
GradCheckReport grad_check(ParamStore& store, std::vector<int> ids,
                           const std::function<Var(Tape&, ParamBinding&)>& build,
                           double h = 1e-5);

}  // namespace equiflow
