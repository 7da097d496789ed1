#pragma once

#include <utility>
#include <vector>

#include "equiflow/autodiff.hpp"

namespace equiflow {

// ---- scalar per-coordinate transforms ----

struct AffineParams {
  double log_scale = 0.0;
  double shift = 0.0;
};

// Constrained spline parameters: widths/heights sum to (right - left), all
// knot derivatives positive. 8 bins by default throughout the flows.
struct SplineParams {
  std::vector<double> bin_widths;
  std::vector<double> bin_heights;
  std::vector<double> knot_derivatives;  // size bins + 1
  double left = -10.0;
  double right = 10.0;

  static SplineParams identity(int bins, double left, double right);
  void validate(bool circular = false) const;
};

// All scalar ops return (output, log |dy/dz|).
std::pair<double, double> affine_forward(double z, const AffineParams& p);
std::pair<double, double> affine_inverse(double y, const AffineParams& p);
// Monotone RQ spline on [left, right] with identity tails outside.
std::pair<double, double> rq_spline_forward(double z, const SplineParams& p);
std::pair<double, double> rq_spline_inverse(double y, const SplineParams& p);
// Circle diffeomorphism on [-pi, pi); requires matched boundary derivatives.
std::pair<double, double> circular_spline_forward(double angle, const SplineParams& p);
std::pair<double, double> circular_spline_inverse(double angle, const SplineParams& p);
// Positive half line: spline on (0, right], identity beyond.
std::pair<double, double> positive_spline_forward(double radius, const SplineParams& p);
std::pair<double, double> positive_spline_inverse(double radius, const SplineParams& p);

// ---- batched tape transforms used inside couplings ----

enum class SplineDomain {
  Interval,  // [-limit, limit], identity tails, boundary derivatives pinned to 1
  Positive,  // [0, limit], identity tail beyond limit, right derivative pinned
  Angle,     // [0, pi], both boundary derivatives pinned to 1, no tails
  Circular,  // [-pi, pi), derivative at -pi tied to derivative at pi
};

inline constexpr int raw_params_per_spline(int bins) { return 3 * bins + 1; }

struct SplineKnots {
  Var xs, ys;            // (..., B+1)
  Var widths, heights;   // (..., B)
  Var derivs;            // (..., B+1)
  double left = 0.0, right = 0.0;
  bool identity_tails = false;
};

// raw: (..., 3B+1) unconstrained; softmax widths/heights with a 1e-4 floor,
// softplus derivatives with a 1e-4 floor, calibrated so raw == 0 gives the
// identity map on uniform knots.
SplineKnots constrain_spline(Var raw, int bins, SplineDomain domain, double limit);
SplineKnots knots_from_params(Tape& tape, const SplineParams& p, bool identity_tails);

struct BijResult {
  Var out;
  Var logdet;  // elementwise, same shape as out
};

BijResult rq_spline_apply(Var z, const SplineKnots& knots, bool inverse);

// y = exp(clamp(log_scale, +-10)) * z + shift
BijResult affine_apply(Var z, Var log_scale, Var shift, bool inverse);

}  // namespace equiflow
