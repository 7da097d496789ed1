#pragma once

#include <utility>
#include <vector>

#include "equiflow/rng.hpp"
#include "equiflow/tensor.hpp"

namespace equiflow {

// An n-particle configuration in d dimensions (d in {2,3}), positions (n, d).
// `zero_com` records that the value is constrained to the zero center-of-mass
// hyperplane; couplings refuse to transform constrained values directly.
struct ParticleConfiguration {
  Tensor positions;
  bool zero_com = false;

  std::int64_t n() const { return positions.shape()[0]; }
  int dim() const { return static_cast<int>(positions.shape()[1]); }

  static ParticleConfiguration create(Tensor positions);    // validates
  static ParticleConfiguration centered(Tensor positions);  // subtracts CoM, sets flag
};

struct RigidMotion {
  Tensor rotation;     // (d, d), orthogonal, det +1
  Tensor translation;  // (d)

  static RigidMotion identity(int d);
  void validate() const;  // throws on non-orthogonal / det != +1
};

struct Permutation {
  std::vector<int> mapping;  // image of each index; a bijection of 0..n-1

  static Permutation identity(int n);
  void validate() const;
};

Tensor center_of_mass(const Tensor& positions);  // (n, d) -> (d)

// (x - mean(a), a - mean(a)); the second output is zero-CoM. Unit Jacobian.
std::pair<ParticleConfiguration, ParticleConfiguration> shift_com(
    const ParticleConfiguration& x, const ParticleConfiguration& a);

ParticleConfiguration apply_motion(const RigidMotion& g, const ParticleConfiguration& x);
Tensor apply_motion(const RigidMotion& g, const Tensor& positions);
Tensor rotate_only(const RigidMotion& g, const Tensor& positions);

ParticleConfiguration apply_permutation(const Permutation& sigma, const ParticleConfiguration& x);
Tensor apply_permutation(const Permutation& sigma, const Tensor& positions);

// Uniform over SO(d): d=2 by angle, d=3 by unit quaternion. Translation zero.
RigidMotion random_rotation(Rng& rng, int d);
RigidMotion random_motion(Rng& rng, int d, double translation_scale);
Permutation random_permutation(Rng& rng, int n);

}  // namespace equiflow
