#include "equiflow/coupling.hpp"

#include <cmath>
#include <stdexcept>

namespace equiflow {

namespace {

constexpr double kRadiusFloor = 1e-10;

Var norm_last(Var v) { return sqrt(add_scalar(sum_axis(square(v), -1, false), 1e-24)); }

Var lift(Var v) {  // (B,n) -> (B,n,1)
  const Shape s = v.shape();
  return reshape(v, s.with_axis(s.rank(), 1));
}

struct ScalarTransform {
  Var out;
  Var logdet;  // elementwise
};

// radius transform: positive spline, or pure scaling in affine mode
ScalarTransform radius_transform(Var rho, Var raw, const CouplingConfig& cfg, bool inverse) {
  if (cfg.inner == InnerBijector::Spline) {
    SplineKnots k = constrain_spline(raw, cfg.spline_bins, SplineDomain::Positive, cfg.radial_limit);
    BijResult r = rq_spline_apply(rho, k, inverse);
    return {r.out, r.logdet};
  }
  Var s = clamp(reshape(raw, rho.shape()), -10.0, 10.0);
  if (inverse) s = neg(s);
  return {mul(exp(s), rho), s};
}

ScalarTransform angle_transform(Var beta, Var raw, const CouplingConfig& cfg, bool inverse) {
  if (cfg.inner == InnerBijector::Spline) {
    SplineKnots k = constrain_spline(raw, cfg.spline_bins, SplineDomain::Angle, 0.0);
    BijResult r = rq_spline_apply(beta, k, inverse);
    return {r.out, r.logdet};
  }
  return {beta, beta.tape->constant(Tensor::zeros(beta.shape()))};
}

// azimuth: phase rotation composed with a circular spline (spline mode)
ScalarTransform azimuth_transform(Var phi, Var raw_spline, Var phase, const CouplingConfig& cfg,
                                  bool inverse) {
  if (cfg.inner == InnerBijector::Spline) {
    SplineKnots k = constrain_spline(raw_spline, cfg.spline_bins, SplineDomain::Circular, 0.0);
    if (!inverse) {
      Var w = wrap_angle(add(phi, phase));
      BijResult r = rq_spline_apply(w, k, false);
      return {wrap_angle(r.out), r.logdet};
    }
    BijResult r = rq_spline_apply(wrap_angle(phi), k, true);
    return {wrap_angle(sub(r.out, phase)), r.logdet};
  }
  Var shifted = inverse ? sub(phi, phase) : add(phi, phase);
  return {wrap_angle(shifted), phi.tape->constant(Tensor::zeros(phi.shape()))};
}

// 0/1 mask over (B,n) from a value predicate; optionally counts hits
Tensor mask_where(const Tensor& values, double threshold, std::int64_t* counter) {
  Tensor mask(values.shape());
  for (std::int64_t i = 0; i < values.size(); ++i) {
    const bool hit = values[i] < threshold;
    mask[i] = hit ? 1.0 : 0.0;
    if (hit && counter) ++*counter;
  }
  return mask;
}

Var mix(Var mask, Var when_true, Var when_false) {
  return add(mul(mask, when_true), mul(add_scalar(neg(mask), 1.0), when_false));
}

CoreResult vector_coupling(Var x, Var refs, Var raw, const CouplingConfig& cfg, bool inverse,
                           CouplingDiagnostics* diag) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  const std::int64_t batch = xs[0], n = xs[1], d = xs[2];

  Var origin = reshape(slice(refs, 2, 0, 1), Shape{batch, n, d});
  Var rel = sub(x, origin);
  Var rho = norm_last(rel);

  std::int64_t degenerate = 0;
  Tensor bad = mask_where(rho.val(), kRadiusFloor, &degenerate);
  if (degenerate && cfg.strict) throw std::runtime_error("vector coupling: zero radius atom");
  if (diag) {
    diag->degenerate_radii += degenerate;
    diag->atom_transforms += batch * n;
  }

  ScalarTransform tr = radius_transform(rho, raw, cfg, inverse);
  Var ratio = div(tr.out, rho);
  Var moved = add(origin, mul(lift(ratio), rel));
  Var ld_el = add(scale(log(ratio), static_cast<double>(d - 1)), tr.logdet);

  if (degenerate) {
    Var m = tape.constant(bad);
    moved = mix(reshape(m, Shape{batch, n, 1}), x, moved);
    ld_el = mul(add_scalar(neg(m), 1.0), ld_el);
  }
  CoreResult res;
  res.out = moved;
  res.logdet = sum_axis(ld_el, -1, false);
  res.aux = tape.constant_scalar(0.0);
  return res;
}

CoreResult cartesian_coupling(Var x, Var refs, Var raw, const CouplingConfig& cfg, bool inverse,
                              CouplingDiagnostics* diag) {
  const Shape xs = x.shape();
  const std::int64_t batch = xs[0], n = xs[1], d = xs[2];
  FrameOptions fopt{cfg.parity_correction, cfg.aux_epsilon, 1e-10, cfg.strict};
  FrameResult frame = build_frames(refs, ProjectionKind::Cartesian, fopt, diag);
  if (diag) diag->atom_transforms += batch * n;

  Projected proj = project_points(x, frame, ProjectionKind::Cartesian);
  Var y = proj.coords;  // (B,n,d)

  Var y_out{}, ld_coord{};
  if (cfg.inner == InnerBijector::Spline) {
    const int pc = raw_params_per_spline(cfg.spline_bins);
    Var praw = reshape(raw, Shape{batch, n, d, pc});
    SplineKnots k = constrain_spline(praw, cfg.spline_bins, SplineDomain::Interval, cfg.cart_limit);
    BijResult r = rq_spline_apply(y, k, inverse);
    y_out = r.out;
    ld_coord = r.logdet;
  } else {
    Var pr = reshape(raw, Shape{batch, n, d, 2});
    Var ls = reshape(slice(pr, -1, 0, 1), Shape{batch, n, d});
    Var sh = reshape(slice(pr, -1, 1, 1), Shape{batch, n, d});
    BijResult r = affine_apply(y, ls, sh, inverse);
    y_out = r.out;
    ld_coord = r.logdet;
  }

  Projected unproj = unproject_points(y_out, frame, ProjectionKind::Cartesian);
  CoreResult res;
  res.out = unproj.coords;
  res.logdet = sum_axis(sum_axis(ld_coord, -1, false), -1, false);
  res.aux = frame.aux_loss;
  return res;
}

CoreResult spherical_coupling(Var x, Var refs, Var raw, const CouplingConfig& cfg, bool inverse,
                              CouplingDiagnostics* diag) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  const std::int64_t batch = xs[0], n = xs[1], d = xs[2];
  FrameOptions fopt{cfg.parity_correction, cfg.aux_epsilon, 1e-10, cfg.strict};
  FrameResult frame = build_frames(refs, ProjectionKind::Spherical, fopt, diag);
  if (diag) diag->atom_transforms += batch * n;

  Projected proj = project_points(x, frame, ProjectionKind::Spherical);
  auto coord = [&](int i) { return reshape(slice(proj.coords, -1, i, 1), Shape{batch, n}); };
  Var rho = coord(0);

  std::int64_t degenerate = 0;
  Tensor bad_radius = mask_where(rho.val(), kRadiusFloor, &degenerate);
  if (degenerate && cfg.strict) throw std::runtime_error("spherical coupling: atom at the frame origin");
  if (diag) diag->degenerate_radii += degenerate;

  const int pc = raw_params_per_spline(cfg.spline_bins);
  CoreResult res;
  Var out_coords{}, ld_el{};
  if (d == 3) {
    Var beta = coord(1), phi = coord(2);
    Var raw_rho{}, raw_beta{}, raw_phi{}, phase{};
    if (cfg.inner == InnerBijector::Spline) {
      raw_rho = slice(raw, -1, 0, pc);
      raw_beta = slice(raw, -1, pc, pc);
      raw_phi = slice(raw, -1, 2 * pc, pc);
      phase = reshape(slice(raw, -1, 3 * pc, 1), Shape{batch, n});
    } else {
      raw_rho = slice(raw, -1, 0, 1);
      phase = reshape(slice(raw, -1, 1, 1), Shape{batch, n});
    }
    ScalarTransform trr = radius_transform(rho, raw_rho, cfg, inverse);
    ScalarTransform trb = angle_transform(beta, raw_beta.valid() ? raw_beta : raw_rho, cfg, inverse);
    ScalarTransform trp = azimuth_transform(phi, raw_phi.valid() ? raw_phi : raw_rho, phase, cfg, inverse);

    // atoms on the polar axis keep their azimuth (measure-zero degeneracy)
    std::int64_t poles = 0;
    Tensor pole = mask_where(t_abs(t_sin(beta.val())), cfg.pole_threshold, &poles);
    if (diag) diag->pole_events += poles;
    Var phi_out = trp.out, ld_phi = trp.logdet;
    if (poles) {
      Var pm = tape.constant(pole);
      phi_out = mix(pm, phi, trp.out);
      ld_phi = mul(add_scalar(neg(pm), 1.0), trp.logdet);
    }

    out_coords = concat({lift(trr.out), lift(trb.out), lift(phi_out)}, -1);
    ld_el = add(add(trr.logdet, trb.logdet), ld_phi);
  } else {
    Var phi = coord(1);
    Var raw_rho{}, raw_phi{}, phase{};
    if (cfg.inner == InnerBijector::Spline) {
      raw_rho = slice(raw, -1, 0, pc);
      raw_phi = slice(raw, -1, pc, pc);
      phase = reshape(slice(raw, -1, 2 * pc, 1), Shape{batch, n});
    } else {
      raw_rho = slice(raw, -1, 0, 1);
      phase = reshape(slice(raw, -1, 1, 1), Shape{batch, n});
    }
    ScalarTransform trr = radius_transform(rho, raw_rho, cfg, inverse);
    ScalarTransform trp = azimuth_transform(phi, raw_phi.valid() ? raw_phi : raw_rho, phase, cfg, inverse);
    out_coords = concat({lift(trr.out), lift(trp.out)}, -1);
    ld_el = add(trr.logdet, trp.logdet);
  }

  Projected unproj = unproject_points(out_coords, frame, ProjectionKind::Spherical);
  Var ld_total = add(add(proj.logdet, ld_el), unproj.logdet);
  Var moved = unproj.coords;

  if (degenerate) {
    Var m = tape.constant(bad_radius);
    moved = mix(reshape(m, Shape{batch, n, 1}), x, moved);
    ld_total = mul(add_scalar(neg(m), 1.0), ld_total);
  }

  res.out = moved;
  res.logdet = sum_axis(ld_total, -1, false);
  res.aux = frame.aux_loss;
  return res;
}

}  // namespace

const char* to_string(InnerBijector inner) {
  return inner == InnerBijector::Affine ? "affine" : "spline";
}

int coupling_params_per_atom(const CouplingConfig& cfg, int d) {
  const int pc = raw_params_per_spline(cfg.spline_bins);
  switch (cfg.kind) {
    case ProjectionKind::Vector:
      return cfg.inner == InnerBijector::Spline ? pc : 1;
    case ProjectionKind::Cartesian:
      return d * (cfg.inner == InnerBijector::Spline ? pc : 2);
    case ProjectionKind::Spherical:
      if (cfg.inner == InnerBijector::Spline) return (d == 3 ? 3 : 2) * pc + 1;
      return 2;
  }
  return 0;
}

CoreResult core_coupling(Var x, Var refs, Var raw_params, const CouplingConfig& cfg, bool inverse,
                         CouplingDiagnostics* diag) {
  const Shape xs = x.shape();
  if (xs.rank() != 3) throw std::invalid_argument("core_coupling: x must be (B,n,d)");
  const int d = static_cast<int>(xs[2]);
  const int want = coupling_params_per_atom(cfg, d);
  if (raw_params.shape().back() != want)
    throw std::invalid_argument("core_coupling: expected " + std::to_string(want) +
                                " raw parameters per atom, got " +
                                std::to_string(raw_params.shape().back()));
  switch (cfg.kind) {
    case ProjectionKind::Vector: return vector_coupling(x, refs, raw_params, cfg, inverse, diag);
    case ProjectionKind::Cartesian:
      return cartesian_coupling(x, refs, raw_params, cfg, inverse, diag);
    case ProjectionKind::Spherical:
      return spherical_coupling(x, refs, raw_params, cfg, inverse, diag);
  }
  throw std::logic_error("unreachable");
}

namespace {

CouplingValueResult run_value_coupling(const ParticleConfiguration& x, const Tensor& refs,
                                       const Tensor& raw_params, const CouplingConfig& cfg,
                                       bool inverse, CouplingDiagnostics* diag) {
  if (x.zero_com)
    throw std::invalid_argument(
        "core_coupling: refusing to transform a zero-CoM-constrained configuration; "
        "lift it with shift_com first");
  Tape tape;
  const std::int64_t n = x.n();
  const std::int64_t d = x.dim();
  Var xv = tape.constant(x.positions.reshaped(Shape{1, n, d}));
  Var rv = tape.constant(refs.reshaped(Shape{1, refs.shape()[0], refs.shape()[1], refs.shape()[2]}));
  Var pv = tape.constant(raw_params.reshaped(Shape{1, n, raw_params.shape().back()}));
  CoreResult r = core_coupling(xv, rv, pv, cfg, inverse, diag);
  CouplingValueResult out;
  out.out = ParticleConfiguration{r.out.val().reshaped(Shape{n, d}), false};
  out.logdet = r.logdet.val().item();
  out.aux = r.aux.item();
  return out;
}

}  // namespace

CouplingValueResult core_coupling_forward(const ParticleConfiguration& x, const Tensor& refs,
                                          const Tensor& raw_params, const CouplingConfig& cfg,
                                          CouplingDiagnostics* diag) {
  return run_value_coupling(x, refs, raw_params, cfg, false, diag);
}

CouplingValueResult core_coupling_inverse(const ParticleConfiguration& x, const Tensor& refs,
                                          const Tensor& raw_params, const CouplingConfig& cfg,
                                          CouplingDiagnostics* diag) {
  return run_value_coupling(x, refs, raw_params, cfg, true, diag);
}

}  // namespace equiflow
