#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "equiflow/rng.hpp"
#include "equiflow/tensor.hpp"
#include "support/test_util.hpp"

using namespace equiflow;

TEST_CASE("broadcast shapes") {
  CHECK(broadcast_shapes(Shape{3, 1, 5}, Shape{4, 5}) == Shape{3, 4, 5});
  CHECK(broadcast_shapes(Shape{1}, Shape{2, 3}) == Shape{2, 3});
  CHECK_THROWS(broadcast_shapes(Shape{3, 2}, Shape{4, 2}));
}

TEST_CASE("broadcast add/mul against explicit loops") {
  Rng rng(1);
  Tensor a = rng.normal_tensor(Shape{2, 3, 1, 4});
  Tensor b = rng.normal_tensor(Shape{3, 5, 1});
  Tensor out = t_add(a, b);
  REQUIRE(out.shape() == Shape{2, 3, 5, 4});
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 3; ++j)
      for (std::int64_t k = 0; k < 5; ++k)
        for (std::int64_t l = 0; l < 4; ++l)
          CHECK(out.at({i, j, k, l}) == a.at({i, j, std::int64_t(0), l}) + b.at({j, k, std::int64_t(0)}));

  Tensor prod = t_mul(b, a);
  REQUIRE(prod.shape() == Shape{2, 3, 5, 4});
  CHECK(prod.at({1, 2, 3, 2}) == b.at({2, 3, std::int64_t(0)}) * a.at({1, 2, std::int64_t(0), 2}));
}

TEST_CASE("reduce_into inverts broadcasting") {
  Rng rng(2);
  Tensor g = rng.normal_tensor(Shape{2, 3, 4});
  Tensor acc = Tensor::zeros(Shape{3, 1});
  t_reduce_into(g, acc);
  for (std::int64_t j = 0; j < 3; ++j) {
    double want = 0.0;
    for (std::int64_t i = 0; i < 2; ++i)
      for (std::int64_t k = 0; k < 4; ++k) want += g.at({i, j, k});
    CHECK(acc.at({j, std::int64_t(0)}) == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("sum over axes and cumsum") {
  Tensor a = Tensor::from(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t_sum_all(a) == 21.0);
  Tensor s0 = t_sum_axis(a, 0, false);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0[0] == 5.0);
  CHECK(s0[2] == 9.0);
  Tensor s1 = t_sum_axis(a, 1, true);
  CHECK(s1.shape() == Shape{2, 1});
  CHECK(s1[1] == 15.0);
  Tensor cs = t_cumsum_last(a);
  CHECK(cs.at({1, 2}) == 15.0);
  CHECK(cs.at({0, 1}) == 3.0);
}

TEST_CASE("matmul flattens leading dims") {
  Rng rng(3);
  Tensor a = rng.normal_tensor(Shape{2, 3, 4});
  Tensor w = rng.normal_tensor(Shape{4, 5});
  Tensor out = t_matmul(a, w);
  REQUIRE(out.shape() == Shape{2, 3, 5});
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t i = 0; i < 3; ++i)
      for (std::int64_t j = 0; j < 5; ++j) {
        double want = 0.0;
        for (std::int64_t k = 0; k < 4; ++k) want += a.at({b, i, k}) * w.at({k, j});
        CHECK(out.at({b, i, j}) == doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("apply_basis both modes") {
  Rng rng(4);
  Tensor q = rng.normal_tensor(Shape{2, 3, 3});
  Tensor p = rng.normal_tensor(Shape{2, 3});
  Tensor y = t_apply_basis(q, p, false);
  Tensor yt = t_apply_basis(q, p, true);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t i = 0; i < 3; ++i) {
      double want = 0.0, want_t = 0.0;
      for (std::int64_t j = 0; j < 3; ++j) {
        want += q.at({b, i, j}) * p.at({b, j});
        want_t += q.at({b, j, i}) * p.at({b, j});
      }
      CHECK(y.at({b, i}) == doctest::Approx(want).epsilon(1e-13));
      CHECK(yt.at({b, i}) == doctest::Approx(want_t).epsilon(1e-13));
    }
}

TEST_CASE("concat slice gather") {
  Tensor a = Tensor::from(Shape{2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from(Shape{2, 3}, {5, 6, 7, 8, 9, 10});
  Tensor c = t_concat({&a, &b}, 1);
  REQUIRE(c.shape() == Shape{2, 5});
  CHECK(c.at({0, 2}) == 5.0);
  CHECK(c.at({1, 4}) == 10.0);
  Tensor s = t_slice(c, 1, 2, 3);
  CHECK(testutil::max_abs_diff(s, b) == 0.0);
  Tensor idx = Tensor::from(Shape{2}, {2, 0});
  Tensor g = t_gather_last(b, idx);
  CHECK(g[0] == 7.0);
  CHECK(g[1] == 8.0);
}

TEST_CASE("max_last and logsumexp building blocks") {
  Tensor a = Tensor::from(Shape{2, 3}, {1, 9, 2, -5, -7, -6});
  Tensor m = t_max_last(a, true);
  CHECK(m.shape() == Shape{2, 1});
  CHECK(m[0] == 9.0);
  CHECK(m[1] == -5.0);
}
