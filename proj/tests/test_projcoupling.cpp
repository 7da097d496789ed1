#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "equiflow/coupling.hpp"
#include "support/test_util.hpp"

using namespace equiflow;
using testutil::max_abs_diff;

namespace {

constexpr double kPi = 3.14159265358979323846;

// refs tensor (B, n, u, d) from per-atom origin and offsets
Tensor make_refs(const Tensor& origin, const std::vector<Tensor>& offsets) {
  const std::int64_t b = origin.shape()[0], n = origin.shape()[1], d = origin.shape()[2];
  const std::int64_t u = 1 + static_cast<std::int64_t>(offsets.size());
  Tensor refs(Shape{b, n, u, d});
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < d; ++c) {
        refs.at({bi, i, 0, c}) = origin.at({bi, i, c});
        for (std::size_t j = 0; j < offsets.size(); ++j)
          refs.at({bi, i, static_cast<std::int64_t>(j + 1), c}) =
              origin.at({bi, i, c}) + offsets[j].at({bi, i, c});
      }
  return refs;
}

FrameResult frames_of(Tape& tape, const Tensor& refs, ProjectionKind kind, bool parity = false,
                      bool strict = true, CouplingDiagnostics* diag = nullptr) {
  FrameOptions opts;
  opts.parity_correction = parity;
  opts.strict = strict;
  return build_frames(tape.constant(refs), kind, opts, diag);
}

Tensor random_refs(Rng& rng, std::int64_t b, std::int64_t n, int u, int d) {
  return rng.normal_tensor(Shape{b, n, u, d});
}

Tensor rotate_pts(const RigidMotion& g, const Tensor& pts) {
  const std::int64_t d = pts.shape().back();
  Tensor out(pts.shape());
  for (std::int64_t r = 0; r < pts.size() / d; ++r)
    for (std::int64_t i = 0; i < d; ++i) {
      double acc = g.translation[i];
      for (std::int64_t j = 0; j < d; ++j) acc += g.rotation.at({i, j}) * pts[r * d + j];
      out[r * d + i] = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("frames: worked Gram-Schmidt examples") {
  Tensor origin = Tensor::zeros(Shape{1, 1, 3});
  {
    Tensor v1 = Tensor::from(Shape{1, 1, 3}, {1, 0, 0});
    Tensor v2 = Tensor::from(Shape{1, 1, 3}, {0, 2, 0});
    Tape t;
    FrameResult f = frames_of(t, make_refs(origin, {v1, v2}), ProjectionKind::Cartesian);
    Tensor eye = Tensor::from(Shape{1, 1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(max_abs_diff(f.basis.val(), eye) < 1e-12);
  }
  {
    Tensor v1 = Tensor::from(Shape{1, 1, 3}, {2, 0, 0});
    Tensor v2 = Tensor::from(Shape{1, 1, 3}, {1, 1, 0});
    Tape t;
    FrameResult f = frames_of(t, make_refs(origin, {v1, v2}), ProjectionKind::Cartesian);
    Tensor eye = Tensor::from(Shape{1, 1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(max_abs_diff(f.basis.val(), eye) < 1e-12);
  }
}

TEST_CASE("frames: orthonormality on random references") {
  Rng rng(1);
  Tape t;
  FrameResult f = frames_of(t, random_refs(rng, 3, 5, 3, 3), ProjectionKind::Spherical);
  const Tensor& q = f.basis.val();
  for (std::int64_t b = 0; b < 3; ++b)
    for (std::int64_t i = 0; i < 5; ++i)
      for (int c1 = 0; c1 < 3; ++c1)
        for (int c2 = 0; c2 < 3; ++c2) {
          double acc = 0.0;
          for (int r = 0; r < 3; ++r) acc += q.at({b, i, r, c1}) * q.at({b, i, r, c2});
          CHECK(std::fabs(acc - (c1 == c2 ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("frames: degenerate references throw with the atom index") {
  Tensor origin = Tensor::zeros(Shape{1, 2, 3});
  Tensor v1 = Tensor::zeros(Shape{1, 2, 3});
  Tensor v2 = Tensor::zeros(Shape{1, 2, 3});
  v1.at({0, 0, 0}) = 1.0;  // atom 0 fine
  v2.at({0, 0, 1}) = 1.0;
  v1.at({0, 1, 0}) = 1.0;  // atom 1 collinear
  v2.at({0, 1, 0}) = 2.0;
  Tape t;
  bool threw = false;
  try {
    frames_of(t, make_refs(origin, {v1, v2}), ProjectionKind::Cartesian);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("atom 1") != std::string::npos);
  }
  CHECK(threw);

  // non-strict mode: counted, basis still orthonormal
  Tape t2;
  CouplingDiagnostics diag;
  FrameResult f = frames_of(t2, make_refs(origin, {v1, v2}), ProjectionKind::Cartesian, false,
                            false, &diag);
  CHECK(diag.degenerate_frames == 1);
  const Tensor& q = f.basis.val();
  for (int c1 = 0; c1 < 3; ++c1)
    for (int c2 = 0; c2 < 3; ++c2) {
      double acc = 0.0;
      for (int r = 0; r < 3; ++r) acc += q.at({0, 1, r, c1}) * q.at({0, 1, r, c2});
      CHECK(std::fabs(acc - (c1 == c2 ? 1.0 : 0.0)) < 1e-10);
    }
}

TEST_CASE("aux collinearity loss values and clamp") {
  Tensor a = Tensor::from(Shape{3}, {1, 0, 0});
  Tensor b = Tensor::from(Shape{3}, {0, 2, 0});
  CHECK(aux_collinearity_loss(a, b, 1e-6) ==
        doctest::Approx(-std::log(1e-6 + kPi / 2)).epsilon(1e-10));

  Tensor c = Tensor::from(Shape{3}, {-3, 0, 0});
  CHECK(aux_collinearity_loss(a, c, 1e-6) == doctest::Approx(-std::log(1e-6)).epsilon(1e-6));
  CHECK(aux_collinearity_loss(a, c, 1e-6) == doctest::Approx(13.8155).epsilon(1e-4));

  CHECK_THROWS(aux_collinearity_loss(a, Tensor::zeros(Shape{3}), 1e-6));

  // finite gradient even at exact collinearity (cosine clamped at 1 - 1e-12)
  auto fn = [&](Tape& t, Var v1) {
    return sum_all(collinearity_barrier(reshape(v1, Shape{1, 3}),
                                        t.constant(c.reshaped(Shape{1, 3})), 1e-6));
  };
  Tape t;
  Var v = t.leaf(a, true);
  Var loss = fn(t, v);
  t.backward(loss);
  CHECK(t.grad(v).all_finite());
}

TEST_CASE("projection: cartesian identity and spherical worked example") {
  Tensor origin = Tensor::zeros(Shape{1, 1, 3});
  Tensor v1 = Tensor::from(Shape{1, 1, 3}, {1, 0, 0});
  Tensor v2 = Tensor::from(Shape{1, 1, 3}, {0, 1, 0});
  Tape t;
  FrameResult f = frames_of(t, make_refs(origin, {v1, v2}), ProjectionKind::Cartesian);

  Tensor pt = Tensor::from(Shape{1, 1, 3}, {0.3, -0.4, 2.0});
  Projected p = project_points(t.constant(pt), f, ProjectionKind::Cartesian);
  CHECK(max_abs_diff(p.coords.val(), pt) < 1e-12);
  CHECK(p.logdet.val().item() == 0.0);

  Tensor on_b2 = Tensor::from(Shape{1, 1, 3}, {0, 2, 0});
  Projected sp = project_points(t.constant(on_b2), f, ProjectionKind::Spherical);
  CHECK(sp.coords.val().at({0, 0, 0}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sp.coords.val().at({0, 0, 1}) == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(std::fabs(sp.coords.val().at({0, 0, 2})) < 1e-12);
  // |J| of the inverse projection is rho^2 sin(beta) = 4
  Projected up = unproject_points(sp.coords, f, ProjectionKind::Spherical);
  CHECK(up.logdet.val().item() == doctest::Approx(std::log(4.0)).epsilon(1e-10));
  CHECK(max_abs_diff(up.coords.val(), on_b2) < 1e-10);
}

TEST_CASE("projection: analytic logdet matches a brute-force jacobian") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor refs = random_refs(rng, 1, 1, 3, 3);
    Tensor pt = rng.normal_tensor(Shape{1, 1, 3}, 2.0);
    for (auto kind : {ProjectionKind::Cartesian, ProjectionKind::Spherical}) {
      auto map = [&](const std::vector<double>& in) {
        Tape t;
        FrameResult f = frames_of(t, refs, kind);
        Tensor x = Tensor::from(Shape{1, 1, 3}, {in[0], in[1], in[2]});
        Projected p = project_points(t.constant(x), f, kind);
        return std::vector<double>{p.coords.val()[0], p.coords.val()[1], p.coords.val()[2]};
      };
      std::vector<double> x0{pt[0], pt[1], pt[2]};
      const double fd = testutil::fd_map_logabsdet(map, x0, 1e-6);
      Tape t;
      FrameResult f = frames_of(t, refs, kind);
      Projected p = project_points(t.constant(pt), f, kind);
      const double a = p.logdet.val().item();
      CHECK(std::fabs(a - fd) < 1e-6 * std::max(1.0, std::fabs(fd)));
    }
  }
}

TEST_CASE("projection round trips in 2-d") {
  Rng rng(3);
  Tensor refs = random_refs(rng, 2, 3, 2, 2);
  Tensor pts = rng.normal_tensor(Shape{2, 3, 2}, 1.5);
  for (auto kind : {ProjectionKind::Cartesian, ProjectionKind::Spherical}) {
    Tape t;
    FrameResult f = frames_of(t, refs, kind);
    Projected p = project_points(t.constant(pts), f, kind);
    Projected back = unproject_points(p.coords, f, kind);
    CHECK(max_abs_diff(back.coords.val(), pts) < 1e-10);
    Tensor ld_sum = t_add(p.logdet.val(), back.logdet.val());
    CHECK(testutil::max_abs_diff(ld_sum, Tensor::zeros(ld_sum.shape())) < 1e-10);
  }
}

namespace {

CouplingConfig coupling_config(ProjectionKind kind, InnerBijector inner) {
  CouplingConfig cfg;
  cfg.kind = kind;
  cfg.inner = inner;
  return cfg;
}

struct CouplingCase {
  Tensor x, refs, raw;
  CouplingConfig cfg;
};

CouplingCase random_case(Rng& rng, ProjectionKind kind, InnerBijector inner, int d,
                         double raw_scale = 0.7) {
  CouplingCase cs;
  cs.cfg = coupling_config(kind, inner);
  const std::int64_t b = 2, n = 4;
  cs.x = rng.normal_tensor(Shape{b, n, d}, 1.2);
  cs.refs = random_refs(rng, b, n, refs_per_set(kind, d), d);
  cs.raw = rng.normal_tensor(Shape{b, n, coupling_params_per_atom(cs.cfg, d)}, raw_scale);
  return cs;
}

}  // namespace

TEST_CASE("core coupling: zero raw parameters give the identity") {
  Rng rng(4);
  for (int d : {2, 3})
    for (auto kind : {ProjectionKind::Vector, ProjectionKind::Cartesian, ProjectionKind::Spherical})
      for (auto inner : {InnerBijector::Affine, InnerBijector::Spline}) {
        CouplingCase cs = random_case(rng, kind, inner, d);
        Tape t;
        Tensor zero_raw = Tensor::zeros(cs.raw.shape());
        CoreResult r = core_coupling(t.constant(cs.x), t.constant(cs.refs),
                                     t.constant(zero_raw), cs.cfg, false, nullptr);
        CHECK(max_abs_diff(r.out.val(), cs.x) < 1e-12);
        CHECK(max_abs_diff(r.logdet.val(), Tensor::zeros(r.logdet.val().shape())) < 1e-12);
      }
}

TEST_CASE("core coupling: forward-inverse round trip for all kinds") {
  Rng rng(5);
  for (int d : {2, 3})
    for (auto kind : {ProjectionKind::Vector, ProjectionKind::Cartesian, ProjectionKind::Spherical})
      for (auto inner : {InnerBijector::Affine, InnerBijector::Spline}) {
        CouplingCase cs = random_case(rng, kind, inner, d);
        Tape t;
        CoreResult fwd = core_coupling(t.constant(cs.x), t.constant(cs.refs), t.constant(cs.raw),
                                       cs.cfg, false, nullptr);
        CoreResult back = core_coupling(fwd.out, t.constant(cs.refs), t.constant(cs.raw), cs.cfg,
                                        true, nullptr);
        CAPTURE(to_string(kind));
        CAPTURE(to_string(inner));
        CAPTURE(d);
        CHECK(max_abs_diff(back.out.val(), cs.x) < 1e-8);
        Tensor lsum = t_add(fwd.logdet.val(), back.logdet.val());
        CHECK(max_abs_diff(lsum, Tensor::zeros(lsum.shape())) < 1e-8);
      }
}

TEST_CASE("core coupling: analytic logdet equals the full jacobian determinant") {
  Rng rng(6);
  const int n = 4, d = 3;
  for (auto kind : {ProjectionKind::Vector, ProjectionKind::Cartesian, ProjectionKind::Spherical})
    for (auto inner : {InnerBijector::Affine, InnerBijector::Spline}) {
      CouplingConfig cfg = coupling_config(kind, inner);
      Tensor refs = random_refs(rng, 1, n, refs_per_set(kind, d), d);
      Tensor raw = rng.normal_tensor(Shape{1, n, coupling_params_per_atom(cfg, d)}, 0.7);
      Tensor x0 = rng.normal_tensor(Shape{1, n, d}, 1.3);

      auto map = [&](const std::vector<double>& in) {
        Tensor x = Tensor::from(Shape{1, n, d}, std::vector<double>(in));
        Tape t;
        CoreResult r = core_coupling(t.constant(x), t.constant(refs), t.constant(raw), cfg, false,
                                     nullptr);
        std::vector<double> out(r.out.val().data(), r.out.val().data() + n * d);
        return out;
      };
      std::vector<double> flat(x0.data(), x0.data() + n * d);
      const double fd = testutil::fd_map_logabsdet(map, flat, 1e-5);
      Tape t;
      CoreResult r = core_coupling(t.constant(x0), t.constant(refs), t.constant(raw), cfg, false,
                                   nullptr);
      CAPTURE(to_string(kind));
      CAPTURE(to_string(inner));
      CHECK(testutil::rel_err(r.logdet.val().item(), fd) < 1e-5);
    }
}

TEST_CASE("core coupling: rotation/translation/permutation equivariance given references") {
  Rng rng(7);
  for (int d : {2, 3})
    for (auto kind : {ProjectionKind::Vector, ProjectionKind::Cartesian, ProjectionKind::Spherical}) {
      CouplingCase cs = random_case(rng, kind, InnerBijector::Spline, d);
      RigidMotion g = random_motion(rng, d, 0.8);

      Tape t1;
      CoreResult base = core_coupling(t1.constant(cs.x), t1.constant(cs.refs), t1.constant(cs.raw),
                                      cs.cfg, false, nullptr);
      Tape t2;
      CoreResult moved = core_coupling(t2.constant(rotate_pts(g, cs.x)),
                                       t2.constant(rotate_pts(g, cs.refs)), t2.constant(cs.raw),
                                       cs.cfg, false, nullptr);
      CAPTURE(to_string(kind));
      CAPTURE(d);
      CHECK(max_abs_diff(moved.out.val(), rotate_pts(g, base.out.val())) < 1e-7);
      CHECK(max_abs_diff(moved.logdet.val(), base.logdet.val()) < 1e-8);
    }
}

TEST_CASE("vector coupling is parity equivariant") {
  Rng rng(8);
  CouplingCase cs = random_case(rng, ProjectionKind::Vector, InnerBijector::Spline, 3);
  Tape t1, t2;
  CoreResult base = core_coupling(t1.constant(cs.x), t1.constant(cs.refs), t1.constant(cs.raw),
                                  cs.cfg, false, nullptr);
  CoreResult flip = core_coupling(t2.constant(t_neg(cs.x)), t2.constant(t_neg(cs.refs)),
                                  t2.constant(cs.raw), cs.cfg, false, nullptr);
  CHECK(max_abs_diff(flip.out.val(), t_neg(base.out.val())) < 1e-8);
  CHECK(max_abs_diff(flip.logdet.val(), base.logdet.val()) < 1e-10);
}

TEST_CASE("parity-corrected frames keep couplings invertible") {
  Rng rng(9);
  CouplingCase cs = random_case(rng, ProjectionKind::Spherical, InnerBijector::Spline, 3);
  cs.cfg.parity_correction = true;
  Tape t;
  CoreResult fwd = core_coupling(t.constant(cs.x), t.constant(cs.refs), t.constant(cs.raw), cs.cfg,
                                 false, nullptr);
  CoreResult back =
      core_coupling(fwd.out, t.constant(cs.refs), t.constant(cs.raw), cs.cfg, true, nullptr);
  CHECK(max_abs_diff(back.out.val(), cs.x) < 1e-8);
}

TEST_CASE("pole atoms keep their azimuth and stay invertible") {
  Rng rng(10);
  CouplingConfig cfg = coupling_config(ProjectionKind::Spherical, InnerBijector::Spline);
  const int n = 3, d = 3;
  Tensor origin = Tensor::zeros(Shape{1, n, d});
  Tensor v1 = Tensor::zeros(Shape{1, n, d}), v2 = Tensor::zeros(Shape{1, n, d});
  for (int i = 0; i < n; ++i) {
    v1.at({0, i, 0}) = 1.0;
    v2.at({0, i, 1}) = 1.0;
  }
  Tensor refs = make_refs(origin, {v1, v2});
  Tensor x = rng.normal_tensor(Shape{1, n, d});
  // atom 0 exactly on the polar (b1) axis
  x.at({0, 0, 0}) = 1.7;
  x.at({0, 0, 1}) = 0.0;
  x.at({0, 0, 2}) = 0.0;
  Tensor raw = rng.normal_tensor(Shape{1, n, coupling_params_per_atom(cfg, d)}, 0.7);

  CouplingDiagnostics diag;
  Tape t;
  CoreResult fwd = core_coupling(t.constant(x), t.constant(refs), t.constant(raw), cfg, false,
                                 &diag);
  CHECK(diag.pole_events == 1);
  CHECK(fwd.out.val().all_finite());
  CoreResult back = core_coupling(fwd.out, t.constant(refs), t.constant(raw), cfg, true, nullptr);
  CHECK(max_abs_diff(back.out.val(), x) < 1e-8);
}

TEST_CASE("gradients through couplings pass finite differences") {
  Rng rng(11);
  for (auto kind : {ProjectionKind::Vector, ProjectionKind::Cartesian, ProjectionKind::Spherical}) {
    CouplingCase cs = random_case(rng, kind, InnerBijector::Spline, 3, 0.5);
    auto loss_of = [&](Tape&, Var x, Var refs, Var raw) {
      CoreResult r = core_coupling(x, refs, raw, cs.cfg, false, nullptr);
      return add(sum_all(square(r.out)), sum_all(r.logdet));
    };
    CAPTURE(to_string(kind));
    CHECK(testutil::input_grad_max_rel_err(
              [&](Tape& t, Var x) { return loss_of(t, x, t.constant(cs.refs), t.constant(cs.raw)); },
              cs.x) < 2e-5);
    CHECK(testutil::input_grad_max_rel_err(
              [&](Tape& t, Var r) { return loss_of(t, t.constant(cs.x), r, t.constant(cs.raw)); },
              cs.refs) < 2e-5);
    CHECK(testutil::input_grad_max_rel_err(
              [&](Tape& t, Var p) { return loss_of(t, t.constant(cs.x), t.constant(cs.refs), p); },
              cs.raw) < 2e-5);
  }
}

TEST_CASE("zero-CoM-constrained configurations are rejected by the public coupling") {
  Rng rng(12);
  CouplingConfig cfg = coupling_config(ProjectionKind::Vector, InnerBijector::Spline);
  auto x = ParticleConfiguration::centered(rng.normal_tensor(Shape{4, 3}));
  Tensor refs = random_refs(rng, 1, 4, 1, 3).reshaped(Shape{4, 1, 3});
  Tensor raw = rng.normal_tensor(Shape{4, coupling_params_per_atom(cfg, 3)});
  CHECK_THROWS_AS(core_coupling_forward(x, refs, raw, cfg), std::invalid_argument);

  // the same value without the constraint flag is accepted
  auto free_x = ParticleConfiguration::create(x.positions);
  auto res = core_coupling_forward(free_x, refs, raw, cfg);
  CHECK(res.out.positions.all_finite());
  auto back = core_coupling_inverse(res.out, refs, raw, cfg);
  CHECK(max_abs_diff(back.out.positions, x.positions) < 1e-8);
}
