#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "equiflow/tensor.hpp"

namespace equiflow {

// Deterministic RNG with an explicit normal-variate algorithm (Box-Muller) so
// streams are reproducible independent of the standard library, and state can
// be checkpointed exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal();
  std::int64_t uniform_int(std::int64_t n);  // [0, n)

  Tensor normal_tensor(const Shape& shape, double stddev = 1.0);
  Tensor uniform_tensor(const Shape& shape);

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace equiflow
