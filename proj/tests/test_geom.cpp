#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "equiflow/geom.hpp"
#include "support/test_util.hpp"

using namespace equiflow;
using testutil::max_abs_diff;

namespace {

Tensor pairwise_distances(const Tensor& pos) {
  const std::int64_t n = pos.shape()[0], d = pos.shape()[1];
  Tensor out(Shape{n, n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < d; ++c) {
        const double diff = pos[i * d + c] - pos[j * d + c];
        acc += diff * diff;
      }
      out.at({i, j}) = std::sqrt(acc);
    }
  return out;
}

}  // namespace

TEST_CASE("center_of_mass basics") {
  Tensor pos = Tensor::from(Shape{2, 3}, {1, 1, 1, 3, 3, 3});
  Tensor com = center_of_mass(pos);
  for (int c = 0; c < 3; ++c) CHECK(com[c] == 2.0);

  auto centered = ParticleConfiguration::centered(pos);
  Tensor com2 = center_of_mass(centered.positions);
  for (int c = 0; c < 3; ++c) CHECK(std::fabs(com2[c]) < 1e-12);
  CHECK(centered.zero_com);
}

TEST_CASE("center_of_mass against independent per-coordinate summation") {
  Rng rng(42);
  Tensor pos = rng.normal_tensor(Shape{5, 3});
  Tensor com = center_of_mass(pos);
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) acc += pos.at({i, c});
    CHECK(com[c] == doctest::Approx(acc / 5.0).epsilon(1e-14));
  }
}

TEST_CASE("shift_com examples and round trip") {
  // a already zero-CoM leaves values unchanged
  Rng rng(1);
  auto x = ParticleConfiguration::centered(rng.normal_tensor(Shape{4, 2}));
  auto a0 = ParticleConfiguration::centered(rng.normal_tensor(Shape{4, 2}));
  auto [x1, a1] = shift_com(x, a0);
  CHECK(max_abs_diff(x1.positions, x.positions) < 1e-14);
  CHECK(max_abs_diff(a1.positions, a0.positions) < 1e-14);

  // worked 2x2 example
  auto xs = ParticleConfiguration::create(Tensor::from(Shape{2, 2}, {1, 0, -1, 0}));
  auto as = ParticleConfiguration::create(Tensor::from(Shape{2, 2}, {2, 2, 2, 2}));
  auto [xo, ao] = shift_com(xs, as);
  CHECK(max_abs_diff(xo.positions, Tensor::from(Shape{2, 2}, {-1, -2, -3, -2})) == 0.0);
  CHECK(max_abs_diff(ao.positions, Tensor::from(Shape{2, 2}, {0, 0, 0, 0})) == 0.0);

  // round trip: shift_com(shift_com(x, a).swapped) recovers (x, a)
  auto a = ParticleConfiguration::create(rng.normal_tensor(Shape{4, 2}));
  auto [lx, la] = shift_com(x, a);
  auto [ra, rx] = shift_com(la, lx);
  CHECK(max_abs_diff(rx.positions, x.positions) < 1e-12);
  CHECK(max_abs_diff(ra.positions, a.positions) < 1e-12);

  // shape mismatch rejected
  auto small = ParticleConfiguration::create(rng.normal_tensor(Shape{3, 2}));
  CHECK_THROWS(shift_com(x, small));
}

TEST_CASE("apply_motion identity, translation, rotation") {
  Rng rng(2);
  auto x = ParticleConfiguration::create(rng.normal_tensor(Shape{5, 3}));

  auto id = RigidMotion::identity(3);
  CHECK(max_abs_diff(apply_motion(id, x).positions, x.positions) == 0.0);

  RigidMotion trans = RigidMotion::identity(3);
  trans.translation = Tensor::from(Shape{3}, {0.3, -1.0, 2.0});
  Tensor d0 = pairwise_distances(x.positions);
  Tensor d1 = pairwise_distances(apply_motion(trans, x).positions);
  CHECK(max_abs_diff(d0, d1) < 1e-12);

  RigidMotion rot = random_rotation(rng, 3);
  rot.validate();
  Tensor d2 = pairwise_distances(apply_motion(rot, x).positions);
  CHECK(max_abs_diff(d0, d2) < 1e-10);
}

TEST_CASE("rotation preserves the zero-CoM hyperplane") {
  Rng rng(3);
  auto x = ParticleConfiguration::centered(rng.normal_tensor(Shape{6, 3}));
  RigidMotion rot = random_rotation(rng, 3);
  Tensor com = center_of_mass(apply_motion(rot, x).positions);
  for (int c = 0; c < 3; ++c) CHECK(std::fabs(com[c]) < 1e-12);
}

TEST_CASE("permutations commute with center_of_mass") {
  Rng rng(4);
  Tensor pos = rng.normal_tensor(Shape{7, 2});
  Permutation sigma = random_permutation(rng, 7);
  sigma.validate();
  Tensor a = center_of_mass(apply_permutation(sigma, pos));
  Tensor b = center_of_mass(pos);
  CHECK(max_abs_diff(a, b) < 1e-13);
}

TEST_CASE("random rotations: determinism, invariants, uniformity") {
  // equal seeds, equal draws
  Rng r1(99), r2(99);
  RigidMotion g1 = random_rotation(r1, 3);
  RigidMotion g2 = random_rotation(r2, 3);
  CHECK(max_abs_diff(g1.rotation, g2.rotation) == 0.0);
  Permutation p1 = random_permutation(r1, 6);
  Permutation p2 = random_permutation(r2, 6);
  CHECK(p1.mapping == p2.mapping);

  // every draw satisfies the invariants; mean of R[0][0] near 0 over SO(3)
  Rng rng(5);
  double mean_r00 = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    RigidMotion g = random_rotation(rng, 3);
    if (i < 50) g.validate();
    mean_r00 += g.rotation.at({0, 0});
  }
  mean_r00 /= draws;
  CHECK(std::fabs(mean_r00) < 0.05);

  for (int i = 0; i < 50; ++i) random_rotation(rng, 2).validate();
}

TEST_CASE("particle configuration validation") {
  CHECK_THROWS(ParticleConfiguration::create(Tensor::zeros(Shape{1, 3})));
  CHECK_THROWS(ParticleConfiguration::create(Tensor::zeros(Shape{4})));
  Tensor bad = Tensor::zeros(Shape{2, 2});
  bad[0] = std::nan("");
  CHECK_THROWS(ParticleConfiguration::create(bad));
}
