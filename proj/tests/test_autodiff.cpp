#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "equiflow/autodiff.hpp"
#include "equiflow/rng.hpp"
#include "support/test_util.hpp"

using namespace equiflow;
using testutil::input_grad_max_rel_err;

namespace {
Tensor randn(std::uint64_t seed, const Shape& shape) {
  Rng rng(seed);
  return rng.normal_tensor(shape);
}
}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  Tensor x0 = randn(1, Shape{3, 4});
  auto check = [&](const std::function<Var(Tape&, Var)>& fn, double tol = 1e-6) {
    CHECK(input_grad_max_rel_err(fn, x0) < tol);
  };
  check([](Tape&, Var x) { return sum_all(exp(x)); });
  check([](Tape&, Var x) { return sum_all(log(add_scalar(square(x), 1.0))); });
  check([](Tape&, Var x) { return sum_all(sqrt(add_scalar(square(x), 0.5))); });
  check([](Tape&, Var x) { return sum_all(sin(x) * cos(x)); });
  check([](Tape&, Var x) { return sum_all(silu(x)); });
  check([](Tape&, Var x) { return sum_all(sigmoid(x) + softplus(x)); });
  check([](Tape&, Var x) { return mean_all(div(x, add_scalar(square(x), 2.0))); });
}

TEST_CASE("broadcasting binary op gradients") {
  Tensor a0 = randn(2, Shape{2, 1, 3});
  Tensor b0 = randn(3, Shape{4, 1});
  // grad wrt a with b constant
  auto fa = [&](Tape& t, Var a) {
    Var b = t.constant(b0);
    return sum_all(mul(a, b) + div(b, add_scalar(square(a), 1.0)));
  };
  CHECK(input_grad_max_rel_err(fa, a0) < 1e-6);
  // grad wrt b with a constant
  auto fb = [&](Tape& t, Var b) {
    Var a = t.constant(a0);
    return sum_all(mul(a, b) + square(sub(a, b)));
  };
  CHECK(input_grad_max_rel_err(fb, b0) < 1e-6);
}

TEST_CASE("matmul/linear gradients") {
  Tensor x0 = randn(4, Shape{3, 4});
  Tensor w0 = randn(5, Shape{4, 2});
  Tensor b0 = randn(6, Shape{2});
  auto fx = [&](Tape& t, Var x) {
    return sum_all(silu(linear(x, t.constant(w0), t.constant(b0))));
  };
  CHECK(input_grad_max_rel_err(fx, x0) < 1e-6);
  auto fw = [&](Tape& t, Var w) {
    return sum_all(silu(linear(t.constant(x0), w, t.constant(b0))));
  };
  CHECK(input_grad_max_rel_err(fw, w0) < 1e-6);
  auto fb = [&](Tape& t, Var b) {
    return sum_all(square(linear(t.constant(x0), t.constant(w0), b)));
  };
  CHECK(input_grad_max_rel_err(fb, b0) < 1e-6);
}

TEST_CASE("reductions, softmax, logsumexp gradients") {
  Tensor x0 = randn(7, Shape{2, 5});
  CHECK(input_grad_max_rel_err([](Tape&, Var x) { return sum_all(square(sum_axis(x, -1, false))); }, x0) < 1e-6);
  CHECK(input_grad_max_rel_err([](Tape&, Var x) { return sum_all(square(softmax_last(x))); }, x0) < 1e-6);
  CHECK(input_grad_max_rel_err([](Tape&, Var x) { return sum_all(logsumexp_last(x, false)); }, x0) < 1e-6);
  CHECK(input_grad_max_rel_err([](Tape&, Var x) { return sum_all(square(cumsum_last(x))); }, x0) < 1e-6);
  CHECK(input_grad_max_rel_err([](Tape&, Var x) { return sum_all(mean_axis(square(x), 0, true)); }, x0) < 1e-6);
}

TEST_CASE("structure op gradients: concat/slice/reshape/broadcast/gather") {
  Tensor x0 = randn(8, Shape{2, 6});
  auto fn = [](Tape&, Var x) {
    Var a = slice(x, 1, 0, 2);
    Var b = slice(x, 1, 2, 4);
    Var c = concat({square(a), b}, 1);
    Var d = reshape(c, Shape{2, 6});
    Var e = broadcast_to(reshape(d, Shape{2, 1, 6}), Shape{2, 3, 6});
    return sum_all(square(e));
  };
  CHECK(input_grad_max_rel_err(fn, x0) < 1e-6);

  Tensor idx = Tensor::from(Shape{2}, {4, 1});
  auto fg = [&](Tape&, Var x) { return sum_all(square(gather_last(x, idx))); };
  CHECK(input_grad_max_rel_err(fg, x0) < 1e-6);
}

TEST_CASE("atan2 and apply_basis gradients") {
  Tensor y0 = randn(9, Shape{5});
  Tensor x0 = t_add_scalar(t_abs(randn(10, Shape{5})), 0.5);
  auto fy = [&](Tape& t, Var y) { return sum_all(square(atan2(y, t.constant(x0)))); };
  CHECK(input_grad_max_rel_err(fy, y0) < 1e-6);
  auto fx = [&](Tape& t, Var x) { return sum_all(square(atan2(t.constant(y0), x))); };
  CHECK(input_grad_max_rel_err(fx, x0) < 5e-6);

  Tensor q0 = randn(11, Shape{3, 2, 2});
  Tensor p0 = randn(12, Shape{3, 2});
  for (bool transpose : {false, true}) {
    auto fq = [&](Tape& t, Var q) {
      return sum_all(square(apply_basis(q, t.constant(p0), transpose)));
    };
    CHECK(input_grad_max_rel_err(fq, q0) < 1e-6);
    auto fp = [&](Tape& t, Var p) {
      return sum_all(square(apply_basis(t.constant(q0), p, transpose)));
    };
    CHECK(input_grad_max_rel_err(fp, p0) < 1e-6);
  }
}

TEST_CASE("clamp passes gradient only inside the interval") {
  Tensor x0 = Tensor::from(Shape{3}, {-2.0, 0.25, 2.0});
  Tape t;
  Var x = t.leaf(x0, true);
  Var loss = sum_all(clamp(x, -1.0, 1.0));
  t.backward(loss);
  const Tensor& g = t.grad(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.0);
}

TEST_CASE("wrap_angle wraps into [-pi, pi) with unit derivative") {
  Tape t;
  Tensor x0 = Tensor::from(Shape{3}, {3.5 * M_PI, -1.25 * M_PI, 0.5});
  Var x = t.leaf(x0, true);
  Var w = wrap_angle(x);
  CHECK(w.val()[0] == doctest::Approx(-0.5 * M_PI));
  CHECK(w.val()[1] == doctest::Approx(0.75 * M_PI));
  CHECK(w.val()[2] == doctest::Approx(0.5));
  t.backward(sum_all(w));
  for (int i = 0; i < 3; ++i) CHECK(t.grad(x)[i] == 1.0);
}

TEST_CASE("custom op with analytic backward") {
  Tensor x0 = randn(13, Shape{4});
  auto fn = [](Tape& t, Var x) {
    // custom cube: value x^3, grad 3x^2
    Tensor v(x.val().shape());
    for (std::int64_t i = 0; i < v.size(); ++i) v[i] = std::pow(x.val()[i], 3);
    Var c = custom(t, std::move(v), {x},
                   [](const Tensor& up, const std::vector<Tensor>& parents) {
                     Tensor g(parents[0].shape());
                     for (std::int64_t i = 0; i < g.size(); ++i)
                       g[i] = up[i] * 3.0 * parents[0][i] * parents[0][i];
                     return std::vector<Tensor>{g};
                   });
    return sum_all(c);
  };
  CHECK(input_grad_max_rel_err(fn, x0) < 1e-6);
}

TEST_CASE("grad accumulates across reuse and detach blocks flow") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0), true);
  Var y = add(mul(x, x), mul(detach(x), x));  // x^2 + c*x with c = 3
  t.backward(sum_all(y));
  CHECK(t.grad(x).item() == doctest::Approx(2 * 3.0 + 3.0));
}

TEST_CASE("release_buffers keeps leaves and pinned nodes") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(2.0), true);
  Var y = square(x);
  t.keep(y);
  Var loss = sum_all(square(y));
  t.backward(loss, true);
  CHECK(y.val().item() == 4.0);
  CHECK(loss.val().item() == 16.0);
  CHECK(t.grad(x).item() == doctest::Approx(32.0));  // d x^4 / dx = 4 x^3
}
