#include "equiflow/bijectors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace equiflow {

namespace {

constexpr double kFloorFrac = 1e-4;   // minimum bin fraction
constexpr double kFloorDeriv = 1e-4;  // minimum knot derivative
constexpr double kPi = 3.14159265358979323846;

// softplus offset such that a raw value of 0 maps to derivative exactly 1
double deriv_raw_offset() {
  static const double c0 = std::log(std::expm1(1.0 - kFloorDeriv));
  return c0;
}

Shape lead_shape(const Shape& s) {  // drop last axis
  return s.dropped(s.rank() - 1);
}

Var const_like(Var ref, const Shape& shape, double value) {
  return ref.tape->constant(Tensor::full(shape, value));
}

// per-element bin index from knot values; clamped into [0, B-1]
Tensor bin_indices(const Tensor& xs, const Tensor& z) {
  const std::int64_t kp1 = xs.shape().back();
  Tensor idx(z.shape());
  for (std::int64_t r = 0; r < z.size(); ++r) {
    const double* row = xs.data() + r * kp1;
    std::int64_t k = 0;
    while (k + 1 < kp1 - 1 && z[r] >= row[k + 1]) ++k;
    idx[r] = static_cast<double>(k);
  }
  return idx;
}

Tensor shift_indices(const Tensor& idx, double delta) {
  Tensor out(idx.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = idx[i] + delta;
  return out;
}

}  // namespace

SplineKnots constrain_spline(Var raw, int bins, SplineDomain domain, double limit) {
  const Shape lead = lead_shape(raw.shape());
  double left, right;
  switch (domain) {
    case SplineDomain::Interval: left = -limit; right = limit; break;
    case SplineDomain::Positive: left = 0.0; right = limit; break;
    case SplineDomain::Angle: left = 0.0; right = kPi; break;
    case SplineDomain::Circular: left = -kPi; right = kPi; break;
  }
  const double total = right - left;

  Var raw_w = slice(raw, -1, 0, bins);
  Var raw_h = slice(raw, -1, bins, bins);
  Var raw_d = slice(raw, -1, 2 * bins, bins + 1);

  auto fractions = [&](Var r) {
    Var sm = softmax_last(r);
    return add_scalar(scale(sm, 1.0 - bins * kFloorFrac), kFloorFrac);
  };
  Var widths = scale(fractions(raw_w), total);
  Var heights = scale(fractions(raw_h), total);

  Shape one = lead.with_axis(lead.rank(), 1);
  Var left_col = const_like(raw, one, left);
  Var xs = concat({left_col, add_scalar(cumsum_last(widths), left)}, -1);
  Var ys = concat({left_col, add_scalar(cumsum_last(heights), left)}, -1);

  auto constrain_d = [&](Var r) {
    return add_scalar(softplus(add_scalar(r, deriv_raw_offset())), kFloorDeriv);
  };
  Var ones_col = const_like(raw, one, 1.0);
  Var derivs{};
  switch (domain) {
    case SplineDomain::Interval:
    case SplineDomain::Angle: {
      // boundary derivatives pinned to 1 (C1 with identity tails / pole ends)
      Var inner = constrain_d(slice(raw_d, -1, 1, bins - 1));
      derivs = concat({ones_col, inner, ones_col}, -1);
      break;
    }
    case SplineDomain::Positive: {
      Var inner = constrain_d(slice(raw_d, -1, 0, bins));
      derivs = concat({inner, ones_col}, -1);  // right end pinned for the identity tail
      break;
    }
    case SplineDomain::Circular: {
      Var d0 = constrain_d(slice(raw_d, -1, 0, 1));
      Var inner = constrain_d(slice(raw_d, -1, 1, bins - 1));
      derivs = concat({d0, inner, d0}, -1);  // seam derivatives tied
      break;
    }
  }

  SplineKnots knots;
  knots.xs = xs;
  knots.ys = ys;
  knots.widths = widths;
  knots.heights = heights;
  knots.derivs = derivs;
  knots.left = left;
  knots.right = right;
  knots.identity_tails = domain == SplineDomain::Interval || domain == SplineDomain::Positive;
  return knots;
}

SplineKnots knots_from_params(Tape& tape, const SplineParams& p, bool identity_tails) {
  const int bins = static_cast<int>(p.bin_widths.size());
  Tensor w(Shape{bins}), h(Shape{bins}), d(Shape{bins + 1});
  Tensor xs(Shape{bins + 1}), ys(Shape{bins + 1});
  xs[0] = p.left;
  ys[0] = p.left;
  for (int i = 0; i < bins; ++i) {
    w[i] = p.bin_widths[i];
    h[i] = p.bin_heights[i];
    xs[i + 1] = xs[i] + w[i];
    ys[i + 1] = ys[i] + h[i];
  }
  for (int i = 0; i <= bins; ++i) d[i] = p.knot_derivatives[i];
  SplineKnots knots;
  knots.xs = tape.constant(xs);
  knots.ys = tape.constant(ys);
  knots.widths = tape.constant(w);
  knots.heights = tape.constant(h);
  knots.derivs = tape.constant(d);
  knots.left = p.left;
  knots.right = p.right;
  knots.identity_tails = identity_tails;
  return knots;
}

BijResult rq_spline_apply(Var z, const SplineKnots& knots, bool inverse) {
  Tape& tape = *z.tape;
  const Shape shape = z.shape();

  Tensor inside_mask(shape);
  const Tensor& zval = z.val();
  bool all_inside = true;
  for (std::int64_t i = 0; i < zval.size(); ++i) {
    const bool in = zval[i] >= knots.left && zval[i] <= knots.right;
    inside_mask[i] = in ? 1.0 : 0.0;
    all_inside = all_inside && in;
  }
  if (!knots.identity_tails && !all_inside)
    throw std::domain_error("rq_spline: input outside the spline interval");

  Var zc = knots.identity_tails ? clamp(z, knots.left, knots.right) : z;

  const Tensor idx = bin_indices(inverse ? knots.ys.val() : knots.xs.val(), zc.val());
  Var xk = gather_last(knots.xs, idx);
  Var yk = gather_last(knots.ys, idx);
  Var wk = gather_last(knots.widths, idx);
  Var hk = gather_last(knots.heights, idx);
  Var d0 = gather_last(knots.derivs, idx);
  Var d1 = gather_last(knots.derivs, shift_indices(idx, 1.0));

  Var s = div(hk, wk);
  Var dsum = sub(add(d1, d0), scale(s, 2.0));  // delta_{k+1} + delta_k - 2 s

  Var xi{};
  if (!inverse) {
    xi = div(sub(zc, xk), wk);
  } else {
    // quadratic solve from the forward rational form
    Var yr = sub(zc, yk);
    Var a = add(mul(hk, sub(s, d0)), mul(yr, dsum));
    Var b = sub(mul(hk, d0), mul(yr, dsum));
    Var c = neg(mul(s, yr));
    Var disc = clamp(sub(square(b), scale(mul(a, c), 4.0)), 0.0, 1e300);
    xi = div(scale(c, 2.0), neg(add(b, sqrt(disc))));
  }
  Var ximxi = mul(xi, add_scalar(neg(xi), 1.0));  // xi (1 - xi)
  Var denom = add(s, mul(dsum, ximxi));
  Var deriv_num = add(add(mul(d1, square(xi)), scale(mul(s, ximxi), 2.0)),
                      mul(d0, square(add_scalar(neg(xi), 1.0))));
  Var deriv = div(mul(square(s), deriv_num), square(denom));
  Var logdet_in = log(deriv);

  Var out_in{};
  if (!inverse) {
    Var num = mul(hk, add(mul(s, square(xi)), mul(d0, ximxi)));
    out_in = add(yk, div(num, denom));
  } else {
    out_in = add(xk, mul(xi, wk));
    logdet_in = neg(logdet_in);
  }

  if (knots.identity_tails && !all_inside) {
    Var mask = tape.constant(inside_mask);
    Var inv_mask = add_scalar(neg(mask), 1.0);
    BijResult r;
    r.out = add(mul(mask, out_in), mul(inv_mask, z));
    r.logdet = mul(mask, logdet_in);
    return r;
  }
  return BijResult{out_in, logdet_in};
}

BijResult affine_apply(Var z, Var log_scale, Var shift, bool inverse) {
  Var ls = clamp(log_scale, -10.0, 10.0);
  BijResult r;
  if (!inverse) {
    r.out = add(mul(exp(ls), z), shift);
    r.logdet = ls;
  } else {
    r.out = mul(sub(z, shift), exp(neg(ls)));
    r.logdet = neg(ls);
  }
  return r;
}

// ---- scalar API ----

SplineParams SplineParams::identity(int bins, double left, double right) {
  SplineParams p;
  p.left = left;
  p.right = right;
  p.bin_widths.assign(bins, (right - left) / bins);
  p.bin_heights.assign(bins, (right - left) / bins);
  p.knot_derivatives.assign(bins + 1, 1.0);
  return p;
}

void SplineParams::validate(bool circular) const {
  const std::size_t bins = bin_widths.size();
  if (bins == 0 || bin_heights.size() != bins || knot_derivatives.size() != bins + 1)
    throw std::invalid_argument("spline: inconsistent parameter sizes");
  if (!(right > left)) throw std::invalid_argument("spline: empty interval");
  double sw = 0, sh = 0;
  for (double w : bin_widths) {
    if (!(w > 0)) throw std::invalid_argument("spline: non-positive width");
    sw += w;
  }
  for (double h : bin_heights) {
    if (!(h > 0)) throw std::invalid_argument("spline: non-positive height");
    sh += h;
  }
  const double total = right - left;
  if (std::fabs(sw - total) > 1e-8 * total || std::fabs(sh - total) > 1e-8 * total)
    throw std::invalid_argument("spline: widths/heights must sum to the interval length");
  for (double d : knot_derivatives)
    if (!(d > 0)) throw std::invalid_argument("spline: non-positive derivative");
  if (circular &&
      std::fabs(knot_derivatives.front() - knot_derivatives.back()) > 1e-12)
    throw std::invalid_argument("spline: circular boundary derivatives must match");
}

namespace {

std::pair<double, double> scalar_spline(double z, const SplineParams& p, bool identity_tails,
                                        bool inverse) {
  Tape tape;
  SplineKnots knots = knots_from_params(tape, p, identity_tails);
  BijResult r = rq_spline_apply(tape.constant(Tensor::scalar(z)), knots, inverse);
  return {r.out.item(), r.logdet.item()};
}

void require_finite(double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("spline: non-finite input");
}

}  // namespace

std::pair<double, double> affine_forward(double z, const AffineParams& p) {
  const double ls = std::clamp(p.log_scale, -10.0, 10.0);
  return {std::exp(ls) * z + p.shift, ls};
}

std::pair<double, double> affine_inverse(double y, const AffineParams& p) {
  const double ls = std::clamp(p.log_scale, -10.0, 10.0);
  return {(y - p.shift) * std::exp(-ls), -ls};
}

std::pair<double, double> rq_spline_forward(double z, const SplineParams& p) {
  require_finite(z);
  p.validate();
  return scalar_spline(z, p, true, false);
}

std::pair<double, double> rq_spline_inverse(double y, const SplineParams& p) {
  require_finite(y);
  p.validate();
  return scalar_spline(y, p, true, true);
}

std::pair<double, double> circular_spline_forward(double angle, const SplineParams& p) {
  require_finite(angle);
  p.validate(true);
  if (std::fabs(p.left + kPi) > 1e-12 || std::fabs(p.right - kPi) > 1e-12)
    throw std::invalid_argument("circular spline must live on [-pi, pi)");
  double w = std::remainder(angle, 2.0 * kPi);  // into [-pi, pi]
  if (w >= kPi) w -= 2.0 * kPi;
  auto [y, ld] = scalar_spline(w, p, false, false);
  if (y >= kPi) y -= 2.0 * kPi;
  return {y, ld};
}

std::pair<double, double> circular_spline_inverse(double angle, const SplineParams& p) {
  require_finite(angle);
  p.validate(true);
  double w = std::remainder(angle, 2.0 * kPi);
  if (w >= kPi) w -= 2.0 * kPi;
  auto [z, ld] = scalar_spline(w, p, false, true);
  if (z >= kPi) z -= 2.0 * kPi;
  return {z, ld};
}

std::pair<double, double> positive_spline_forward(double radius, const SplineParams& p) {
  require_finite(radius);
  if (!(radius > 0)) throw std::domain_error("positive spline: radius must be > 0");
  p.validate();
  return scalar_spline(radius, p, true, false);
}

std::pair<double, double> positive_spline_inverse(double radius, const SplineParams& p) {
  require_finite(radius);
  if (!(radius > 0)) throw std::domain_error("positive spline: radius must be > 0");
  p.validate();
  return scalar_spline(radius, p, true, true);
}

}  // namespace equiflow
