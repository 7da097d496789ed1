#pragma once

#include <cstdint>

#include "equiflow/autodiff.hpp"

namespace equiflow {

enum class ProjectionKind { Vector, Cartesian, Spherical };

const char* to_string(ProjectionKind kind);

// Reference points per atom needed by each projection.
inline int refs_per_set(ProjectionKind kind, int d) {
  if (kind == ProjectionKind::Vector) return 1;
  return d == 3 ? 3 : 2;
}

// Counters for rare numeric events; shared by couplings and surfaced in run
// metrics. Callers may pass nullptr when they do not track them.
struct CouplingDiagnostics {
  std::int64_t atom_transforms = 0;
  std::int64_t degenerate_frames = 0;
  std::int64_t degenerate_radii = 0;
  std::int64_t pole_events = 0;
};

struct FrameOptions {
  bool parity_correction = false;
  double aux_epsilon = 1e-6;
  double degeneracy_threshold = 1e-10;
  // strict: degenerate frames throw; otherwise a deterministic completion is
  // used for the affected atoms and the event is counted.
  bool strict = true;
};

struct FrameResult {
  Var origin;    // (B, n, d)
  Var basis;     // (B, n, d, d), columns are the orthonormal frame; empty for Vector
  Var aux_loss;  // scalar collinearity barrier, zero when no pair of frame vectors exists
};

// refs: (B, n, u, d) equivariant points (origin first).
FrameResult build_frames(Var refs, ProjectionKind kind, const FrameOptions& opts,
                         CouplingDiagnostics* diag);

// Logarithmic barrier -log(eps + angle(v1, v2)); elementwise over (..., d).
Var collinearity_barrier(Var v1, Var v2, double eps);
double aux_collinearity_loss(const Tensor& v1, const Tensor& v2, double eps);

struct Projected {
  Var coords;  // Cartesian: frame coordinates; Spherical d=3: (rho, beta, phi); d=2: (rho, phi)
  Var logdet;  // (B, n) contribution of the projection map
};

Projected project_points(Var x, const FrameResult& frame, ProjectionKind kind);
// Inverse map; logdet is the contribution of the inverse projection.
Projected unproject_points(Var coords, const FrameResult& frame, ProjectionKind kind);

}  // namespace equiflow
