#include "equiflow/projection.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace equiflow {

namespace {

constexpr double kNormEps = 1e-24;  // under the square root; keeps norms differentiable at 0

Var norm_last(Var v) { return sqrt(add_scalar(sum_axis(square(v), -1, false), kNormEps)); }

Var lift_last(Var v) {
  const Shape s = v.shape();
  return reshape(v, s.with_axis(s.rank(), 1));
}

Var normalize_last(Var v) { return div(v, lift_last(norm_last(v))); }

Var dot_last(Var a, Var b) { return sum_axis(mul(a, b), -1, false); }

// angle between v1 and v2 folded to [0, pi/2]; the sine comes from the
// perpendicular component so exactly collinear vectors give angle 0, and the
// cosine is clamped so the gradient stays finite there
Var folded_angle(Var v1, Var v2) {
  Var n1 = norm_last(v1), n2 = norm_last(v2);
  Var c = clamp(abs(div(dot_last(v1, v2), mul(n1, n2))), 0.0, 1.0 - 1e-12);
  Var u1 = normalize_last(v1);
  Var perp = sub(v2, mul(lift_last(dot_last(u1, v2)), u1));
  Var s = div(norm_last(perp), n2);
  return atan2(s, c);
}

Var column(Var basis, int j) {
  // basis (B,n,d,d) -> column j as (B,n,d)
  const Shape s = basis.shape();
  Var col = slice(basis, -1, j, 1);
  return reshape(col, Shape{s[0], s[1], s[2]});
}

Var cross3(Var a, Var b) {
  auto comp = [&](Var v, int i) {
    const Shape s = v.shape();
    return reshape(slice(v, -1, i, 1), s.dropped(s.rank() - 1));
  };
  Var ax = comp(a, 0), ay = comp(a, 1), az = comp(a, 2);
  Var bx = comp(b, 0), by = comp(b, 1), bz = comp(b, 2);
  auto lift = [&](Var v) {
    const Shape s = v.shape();
    return reshape(v, s.with_axis(s.rank(), 1));
  };
  return concat({lift(sub(mul(ay, bz), mul(az, by))),
                 lift(sub(mul(az, bx), mul(ax, bz))),
                 lift(sub(mul(ax, by), mul(ay, bx)))},
                -1);
}

}  // namespace

const char* to_string(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::Vector: return "vector";
    case ProjectionKind::Cartesian: return "cartesian";
    case ProjectionKind::Spherical: return "spherical";
  }
  return "?";
}

Var collinearity_barrier(Var v1, Var v2, double eps) {
  return neg(log(add_scalar(folded_angle(v1, v2), eps)));
}

double aux_collinearity_loss(const Tensor& v1, const Tensor& v2, double eps) {
  if (v1.shape() != v2.shape()) throw std::invalid_argument("aux loss: shape mismatch");
  double n1 = 0, n2 = 0;
  for (std::int64_t i = 0; i < v1.size(); ++i) {
    n1 += v1[i] * v1[i];
    n2 += v2[i] * v2[i];
  }
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw std::invalid_argument("aux loss: zero-norm vector");
  Tape tape;
  return collinearity_barrier(tape.constant(v1.reshaped(Shape{1, v1.size()})),
                              tape.constant(v2.reshaped(Shape{1, v2.size()})), eps)
      .item();
}

FrameResult build_frames(Var refs, ProjectionKind kind, const FrameOptions& opts,
                         CouplingDiagnostics* diag) {
  Tape& tape = *refs.tape;
  const Shape rs = refs.shape();  // (B, n, u, d)
  const std::int64_t batch = rs[0], n = rs[1], u = rs[2], d = rs[3];
  if (u < refs_per_set(kind, static_cast<int>(d)))
    throw std::invalid_argument("build_frames: not enough reference points");

  auto ref_point = [&](int j) {
    return reshape(slice(refs, 2, j, 1), Shape{batch, n, d});
  };

  FrameResult out;
  out.origin = ref_point(0);
  out.aux_loss = tape.constant_scalar(0.0);
  if (kind == ProjectionKind::Vector) return out;

  Var v1 = sub(ref_point(1), out.origin);

  // degeneracy masks from values; strict mode throws with the atom index
  auto degenerate_mask = [&](const Tensor& norms, const char* what) {
    Tensor mask(Shape{batch, n, 1});
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t i = 0; i < n; ++i) {
        const bool bad = norms[b * n + i] < opts.degeneracy_threshold;
        if (bad) {
          if (opts.strict)
            throw std::runtime_error(std::string("degenerate frame (") + what + ") at atom " +
                                     std::to_string(i));
          if (diag) ++diag->degenerate_frames;
        }
        mask.at({b, i, 0}) = bad ? 1.0 : 0.0;
      }
    return mask;
  };

  // deterministic completion direction: the coordinate axis least aligned
  // with v (so the fallback is reproducible from the same references)
  auto complement_axis = [&](const Tensor& v) {
    Tensor e(Shape{batch, n, d});
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t i = 0; i < n; ++i) {
        int best = 0;
        double best_abs = 1e300;
        for (int c = 0; c < d; ++c) {
          const double a = std::fabs(v[(b * n + i) * d + c]);
          if (a < best_abs) {
            best_abs = a;
            best = c;
          }
        }
        e.at({b, i, best}) = 1.0;
      }
    return e;
  };

  Tensor m1 = degenerate_mask(norm_last(v1).val(), "v1 ~ 0");
  Var v1_eff = add(v1, mul(tape.constant(m1), tape.constant(complement_axis(v1.val()))));
  Var b1 = normalize_last(v1_eff);

  Var b2{}, b3{};
  if (d == 2) {
    // rotate b1 by +90 degrees
    auto comp = [&](Var v, int i) { return slice(v, -1, i, 1); };
    b2 = concat({neg(comp(b1, 1)), comp(b1, 0)}, -1);
  } else {
    Var v2 = sub(ref_point(2), out.origin);
    out.aux_loss = mean_all(collinearity_barrier(v1, v2, opts.aux_epsilon));
    Var coeff = dot_last(b1, v2);  // (B,n)
    Var v2perp = sub(v2, mul(reshape(coeff, Shape{batch, n, 1}), b1));
    Tensor m2 = degenerate_mask(norm_last(v2perp).val(), "v2 collinear with v1");
    Var fallback = tape.constant(complement_axis(b1.val()));
    Var fb_perp = sub(fallback, mul(reshape(dot_last(b1, fallback), Shape{batch, n, 1}), b1));
    Var v2_eff = add(v2perp, mul(tape.constant(m2), fb_perp));
    b2 = normalize_last(v2_eff);
    b3 = cross3(b1, b2);
    if (opts.parity_correction) {
      // pseudo-scalar sign flip restores parity equivariance; sign(0) -> +1
      const Tensor dots = dot_last(b3, ref_point(1)).val();
      Tensor s(Shape{batch, n, 1});
      for (std::int64_t i = 0; i < dots.size(); ++i) s[i] = dots[i] < 0.0 ? -1.0 : 1.0;
      b3 = mul(b3, tape.constant(s));
    }
  }

  auto lift = [&](Var v) { return reshape(v, Shape{batch, n, d, 1}); };
  out.basis = d == 2 ? concat({lift(b1), lift(b2)}, -1)
                     : concat({lift(b1), lift(b2), lift(b3)}, -1);
  return out;
}

Projected project_points(Var x, const FrameResult& frame, ProjectionKind kind) {
  const Shape xs = x.shape();
  const std::int64_t batch = xs[0], n = xs[1], d = xs[2];
  Var rel = sub(x, frame.origin);
  Projected out;
  if (kind == ProjectionKind::Cartesian) {
    out.coords = apply_basis(frame.basis, rel, true);  // Q^T (x - o)
    out.logdet = x.tape->constant(Tensor::zeros(Shape{batch, n}));
    return out;
  }
  if (kind != ProjectionKind::Spherical)
    throw std::invalid_argument("project_points: vector projection has no full coordinate map");

  Var rho = norm_last(rel);  // (B,n)
  auto lift = [&](Var v) { return reshape(v, Shape{batch, n, 1}); };
  if (d == 3) {
    Var b1 = column(frame.basis, 0), b2 = column(frame.basis, 1), b3 = column(frame.basis, 2);
    Var xpar = dot_last(rel, b1);
    Var xperp = sub(rel, mul(lift(xpar), b1));
    Var pn = norm_last(xperp);
    Var beta = atan2(pn, xpar);  // in (0, pi)
    Var phi = atan2(dot_last(xperp, b3), dot_last(xperp, b2));
    out.coords = concat({lift(rho), lift(beta), lift(phi)}, -1);
    // |d gamma / dx| = 1 / (rho^2 sin beta); sin beta = pn / rho
    out.logdet = neg(add(log(rho), log(pn)));
  } else {
    Var b1 = column(frame.basis, 0), b2 = column(frame.basis, 1);
    Var phi = atan2(dot_last(rel, b2), dot_last(rel, b1));
    out.coords = concat({lift(rho), lift(phi)}, -1);
    out.logdet = neg(log(rho));
  }
  return out;
}

Projected unproject_points(Var coords, const FrameResult& frame, ProjectionKind kind) {
  const Shape cs = coords.shape();
  const std::int64_t batch = cs[0], n = cs[1], d = cs[2];
  Projected out;
  if (kind == ProjectionKind::Cartesian) {
    out.coords = add(apply_basis(frame.basis, coords, false), frame.origin);
    out.logdet = coords.tape->constant(Tensor::zeros(Shape{batch, n}));
    return out;
  }
  if (kind != ProjectionKind::Spherical)
    throw std::invalid_argument("unproject_points: vector projection has no full coordinate map");

  auto pick = [&](int i) { return reshape(slice(coords, -1, i, 1), Shape{batch, n}); };
  auto lift = [&](Var v) { return reshape(v, Shape{batch, n, 1}); };
  Var rho = pick(0);
  if (d == 3) {
    Var beta = pick(1), phi = pick(2);
    Var b1 = column(frame.basis, 0), b2 = column(frame.basis, 1), b3 = column(frame.basis, 2);
    Var in_plane = add(mul(lift(cos(phi)), b2), mul(lift(sin(phi)), b3));
    Var dir = add(mul(lift(cos(beta)), b1), mul(lift(sin(beta)), in_plane));
    out.coords = add(mul(lift(rho), dir), frame.origin);
    out.logdet = add(scale(log(rho), 2.0), log(sin(beta)));
  } else {
    Var phi = pick(1);
    Var b1 = column(frame.basis, 0), b2 = column(frame.basis, 1);
    Var dir = add(mul(lift(cos(phi)), b1), mul(lift(sin(phi)), b2));
    out.coords = add(mul(lift(rho), dir), frame.origin);
    out.logdet = log(rho);
  }
  return out;
}

}  // namespace equiflow
