#pragma once

#include "equiflow/bijectors.hpp"
#include "equiflow/geom.hpp"
#include "equiflow/projection.hpp"

namespace equiflow {

enum class InnerBijector { Affine, Spline };

const char* to_string(InnerBijector inner);

struct CouplingConfig {
  ProjectionKind kind = ProjectionKind::Spherical;
  InnerBijector inner = InnerBijector::Spline;
  int spline_bins = 8;
  double cart_limit = 10.0;    // transform interval for frame coordinates
  double radial_limit = 10.0;  // spline interval for radii
  bool parity_correction = false;
  double aux_epsilon = 1e-6;
  double pole_threshold = 1e-7;  // sin(beta) below this skips the azimuth transform
  bool strict = true;            // degenerate geometry throws instead of identity fallback
};

// Inner-bijector parameters expected per atom for one transformed channel.
int coupling_params_per_atom(const CouplingConfig& cfg, int d);

struct CoreResult {
  Var out;     // (B, n, d)
  Var logdet;  // (B)
  Var aux;     // scalar collinearity barrier (zero for Vector / d == 2)
};

// Project into the frame defined by per-atom references, apply the inner
// transform, project back. refs (B, n, u, d); raw_params (B, n, P).
CoreResult core_coupling(Var x, Var refs, Var raw_params, const CouplingConfig& cfg,
                         bool inverse, CouplingDiagnostics* diag);

// Value-level entry points. Transforming a configuration that is constrained
// to the zero-CoM subspace is ill-posed and rejected here.
struct CouplingValueResult {
  ParticleConfiguration out;
  double logdet = 0.0;
  double aux = 0.0;
};

CouplingValueResult core_coupling_forward(const ParticleConfiguration& x, const Tensor& refs,
                                          const Tensor& raw_params, const CouplingConfig& cfg,
                                          CouplingDiagnostics* diag = nullptr);
CouplingValueResult core_coupling_inverse(const ParticleConfiguration& x, const Tensor& refs,
                                          const Tensor& raw_params, const CouplingConfig& cfg,
                                          CouplingDiagnostics* diag = nullptr);

}  // namespace equiflow
