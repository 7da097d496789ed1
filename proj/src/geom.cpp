#include "equiflow/geom.hpp"

#include <cmath>
#include <stdexcept>

namespace equiflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("geom: " + msg); }

void check_positions(const Tensor& positions) {
  if (positions.rank() != 2) fail("positions must be (n, d)");
  const std::int64_t n = positions.shape()[0], d = positions.shape()[1];
  if (n < 2) fail("need n >= 2 particles");
  if (d != 2 && d != 3) fail("spatial dimension must be 2 or 3");
  if (!positions.all_finite()) fail("positions must be finite");
}

}  // namespace

ParticleConfiguration ParticleConfiguration::create(Tensor positions) {
  check_positions(positions);
  return ParticleConfiguration{std::move(positions), false};
}

ParticleConfiguration ParticleConfiguration::centered(Tensor positions) {
  check_positions(positions);
  const Tensor com = center_of_mass(positions);
  Tensor centered = t_sub(positions, com);  // (n,d) - (d) broadcasts over rows
  return ParticleConfiguration{std::move(centered), true};
}

RigidMotion RigidMotion::identity(int d) {
  Tensor rot(Shape{d, d});
  for (int i = 0; i < d; ++i) rot.at({i, i}) = 1.0;
  return RigidMotion{std::move(rot), Tensor(Shape{d})};
}

void RigidMotion::validate() const {
  const int d = static_cast<int>(rotation.shape()[0]);
  if (rotation.shape() != Shape{d, d} || translation.shape() != Shape{d})
    fail("rigid motion shapes");
  // R^T R = I
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += rotation.at({k, i}) * rotation.at({k, j});
      if (std::fabs(acc - (i == j ? 1.0 : 0.0)) > 1e-10) fail("rotation not orthogonal");
    }
  double det;
  if (d == 2) {
    det = rotation.at({0, 0}) * rotation.at({1, 1}) - rotation.at({0, 1}) * rotation.at({1, 0});
  } else {
    det = rotation.at({0, 0}) * (rotation.at({1, 1}) * rotation.at({2, 2}) - rotation.at({1, 2}) * rotation.at({2, 1})) -
          rotation.at({0, 1}) * (rotation.at({1, 0}) * rotation.at({2, 2}) - rotation.at({1, 2}) * rotation.at({2, 0})) +
          rotation.at({0, 2}) * (rotation.at({1, 0}) * rotation.at({2, 1}) - rotation.at({1, 1}) * rotation.at({2, 0}));
  }
  if (std::fabs(det - 1.0) > 1e-10) fail("rotation determinant != +1");
}

Permutation Permutation::identity(int n) {
  Permutation p;
  p.mapping.resize(n);
  for (int i = 0; i < n; ++i) p.mapping[i] = i;
  return p;
}

void Permutation::validate() const {
  const int n = static_cast<int>(mapping.size());
  std::vector<bool> seen(n, false);
  for (int v : mapping) {
    if (v < 0 || v >= n || seen[v]) fail("mapping is not a bijection");
    seen[v] = true;
  }
}

Tensor center_of_mass(const Tensor& positions) {
  return t_scale(t_sum_axis(positions, 0, false), 1.0 / static_cast<double>(positions.shape()[0]));
}

std::pair<ParticleConfiguration, ParticleConfiguration> shift_com(
    const ParticleConfiguration& x, const ParticleConfiguration& a) {
  if (x.positions.shape() != a.positions.shape()) fail("shift_com: shape mismatch");
  const Tensor abar = center_of_mass(a.positions);
  ParticleConfiguration out_x{t_sub(x.positions, abar), false};
  ParticleConfiguration out_a{t_sub(a.positions, abar), true};
  return {std::move(out_x), std::move(out_a)};
}

Tensor rotate_only(const RigidMotion& g, const Tensor& positions) {
  const int d = static_cast<int>(positions.shape().back());
  Tensor rot_t(Shape{d, d});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) rot_t.at({i, j}) = g.rotation.at({j, i});
  return t_matmul(positions, rot_t);  // rows become R * row
}

Tensor apply_motion(const RigidMotion& g, const Tensor& positions) {
  return t_add(rotate_only(g, positions), g.translation);
}

ParticleConfiguration apply_motion(const RigidMotion& g, const ParticleConfiguration& x) {
  Tensor moved = apply_motion(g, x.positions);
  bool still_zero = x.zero_com;
  for (std::int64_t i = 0; i < g.translation.size(); ++i)
    if (g.translation[i] != 0.0) still_zero = false;
  return ParticleConfiguration{std::move(moved), still_zero};
}

Tensor apply_permutation(const Permutation& sigma, const Tensor& positions) {
  const std::int64_t n = positions.shape()[0], d = positions.shape().back();
  Tensor out(positions.shape());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c) out[i * d + c] = positions[sigma.mapping[i] * d + c];
  return out;
}

ParticleConfiguration apply_permutation(const Permutation& sigma, const ParticleConfiguration& x) {
  return ParticleConfiguration{apply_permutation(sigma, x.positions), x.zero_com};
}

RigidMotion random_rotation(Rng& rng, int d) {
  Tensor rot(Shape{d, d});
  if (d == 2) {
    const double theta = (2.0 * rng.uniform() - 1.0) * 3.14159265358979323846;
    rot.at({0, 0}) = std::cos(theta);
    rot.at({0, 1}) = -std::sin(theta);
    rot.at({1, 0}) = std::sin(theta);
    rot.at({1, 1}) = std::cos(theta);
  } else if (d == 3) {
    // uniform unit quaternion
    double q[4];
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& v : q) {
        v = rng.normal();
        norm2 += v * v;
      }
    } while (norm2 < 1e-12);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : q) v *= inv;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    rot.at({0, 0}) = 1 - 2 * (y * y + z * z);
    rot.at({0, 1}) = 2 * (x * y - w * z);
    rot.at({0, 2}) = 2 * (x * z + w * y);
    rot.at({1, 0}) = 2 * (x * y + w * z);
    rot.at({1, 1}) = 1 - 2 * (x * x + z * z);
    rot.at({1, 2}) = 2 * (y * z - w * x);
    rot.at({2, 0}) = 2 * (x * z - w * y);
    rot.at({2, 1}) = 2 * (y * z + w * x);
    rot.at({2, 2}) = 1 - 2 * (x * x + y * y);
  } else {
    fail("rotation dimension must be 2 or 3");
  }
  return RigidMotion{std::move(rot), Tensor(Shape{d})};
}

RigidMotion random_motion(Rng& rng, int d, double translation_scale) {
  RigidMotion g = random_rotation(rng, d);
  g.translation = rng.normal_tensor(Shape{d}, translation_scale);
  return g;
}

Permutation random_permutation(Rng& rng, int n) {
  Permutation p = Permutation::identity(n);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(i + 1));
    std::swap(p.mapping[i], p.mapping[j]);
  }
  return p;
}

}  // namespace equiflow
