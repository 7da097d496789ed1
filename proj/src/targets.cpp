#include "equiflow/targets.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace equiflow {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double pair_distance(const double* xi, const double* xj, int d) {
  double acc = 0;
  for (int c = 0; c < d; ++c) {
    const double diff = xi[c] - xj[c];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

const char* to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::DW4: return "dw4";
    case TargetKind::LJ13: return "lj13";
    case TargetKind::IsotropicGaussian: return "gaussian";
  }
  return "?";
}

TargetKind target_kind_from_string(const std::string& name) {
  if (name == "dw4") return TargetKind::DW4;
  if (name == "lj13") return TargetKind::LJ13;
  if (name == "gaussian") return TargetKind::IsotropicGaussian;
  throw std::invalid_argument("unknown target kind: " + name);
}

TargetSpec TargetSpec::dw4() {
  TargetSpec s;
  s.kind = TargetKind::DW4;
  s.n = 4;
  s.d = 2;
  return s;
}

TargetSpec TargetSpec::lj13() {
  TargetSpec s;
  s.kind = TargetKind::LJ13;
  s.n = 13;
  s.d = 3;
  return s;
}

TargetSpec TargetSpec::gaussian(int n, int d, double sigma) {
  TargetSpec s;
  s.kind = TargetKind::IsotropicGaussian;
  s.n = n;
  s.d = d;
  s.gauss_sigma = sigma;
  return s;
}

void TargetSpec::validate() const {
  if (kind == TargetKind::DW4 && (n != 4 || d != 2))
    throw std::invalid_argument("dw4 fixes (n, d) = (4, 2)");
  if (kind == TargetKind::LJ13 && (n != 13 || d != 3))
    throw std::invalid_argument("lj13 fixes (n, d) = (13, 3)");
  if (n < 2 || (d != 2 && d != 3)) throw std::invalid_argument("target: bad (n, d)");
  if (!(temperature > 0)) throw std::invalid_argument("target: temperature must be > 0");
}

Tensor batch_energy(const Tensor& x, const TargetSpec& spec) {
  const std::int64_t batch = x.shape()[0], n = x.shape()[1];
  const int d = static_cast<int>(x.shape()[2]);
  Tensor out(Shape{batch});
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * n * d;
    double u = 0;
    switch (spec.kind) {
      case TargetKind::DW4: {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = i + 1; j < n; ++j) {
            const double delta = pair_distance(xb + i * d, xb + j * d, d) - spec.dw_d0;
            const double d2 = delta * delta;
            u += (spec.dw_a * delta + spec.dw_b * d2 + spec.dw_c * d2 * d2) /
                 (2.0 * spec.temperature);
          }
        break;
      }
      case TargetKind::LJ13: {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = i + 1; j < n; ++j) {
            const double dist = pair_distance(xb + i * d, xb + j * d, d);
            if (dist == 0.0) {
              u = std::numeric_limits<double>::infinity();
              break;
            }
            const double r6 = std::pow(spec.lj_rm / dist, 6);
            u += spec.lj_eps / (2.0 * spec.temperature) * (r6 * r6 - 2.0 * r6);
          }
        if (!std::isinf(u)) {
          double com[3] = {0, 0, 0};
          for (std::int64_t i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) com[c] += xb[i * d + c];
          for (int c = 0; c < d; ++c) com[c] /= static_cast<double>(n);
          double osc = 0;
          for (std::int64_t i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) {
              const double diff = xb[i * d + c] - com[c];
              osc += diff * diff;
            }
          u += 0.5 * spec.lj_osc * osc;
        }
        break;
      }
      case TargetKind::IsotropicGaussian: {
        double com[3] = {0, 0, 0};
        for (std::int64_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) com[c] += xb[i * d + c];
        for (int c = 0; c < d; ++c) com[c] /= static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) {
            const double diff = xb[i * d + c] - com[c];
            u += diff * diff;
          }
        u /= 2.0 * spec.gauss_sigma * spec.gauss_sigma;
        break;
      }
    }
    out[b] = u;
  }
  return out;
}

Tensor batch_energy_gradient(const Tensor& x, const TargetSpec& spec) {
  const std::int64_t batch = x.shape()[0], n = x.shape()[1];
  const int d = static_cast<int>(x.shape()[2]);
  Tensor grad(x.shape());
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * n * d;
    double* gb = grad.data() + b * n * d;
    switch (spec.kind) {
      case TargetKind::DW4: {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = i + 1; j < n; ++j) {
            const double dist = std::max(pair_distance(xb + i * d, xb + j * d, d), 1e-12);
            const double delta = dist - spec.dw_d0;
            const double de = (spec.dw_a + 2.0 * spec.dw_b * delta +
                               4.0 * spec.dw_c * delta * delta * delta) /
                              (2.0 * spec.temperature);
            for (int c = 0; c < d; ++c) {
              const double dir = (xb[i * d + c] - xb[j * d + c]) / dist;
              gb[i * d + c] += de * dir;
              gb[j * d + c] -= de * dir;
            }
          }
        break;
      }
      case TargetKind::LJ13: {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = i + 1; j < n; ++j) {
            const double dist =
                std::max(pair_distance(xb + i * d, xb + j * d, d), spec.lj_grad_floor);
            const double r6 = std::pow(spec.lj_rm / dist, 6);
            const double de =
                spec.lj_eps / (2.0 * spec.temperature) * (-12.0 / dist) * (r6 * r6 - r6);
            for (int c = 0; c < d; ++c) {
              const double dir = (xb[i * d + c] - xb[j * d + c]) / dist;
              gb[i * d + c] += de * dir;
              gb[j * d + c] -= de * dir;
            }
          }
        double com[3] = {0, 0, 0};
        for (std::int64_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) com[c] += xb[i * d + c];
        for (int c = 0; c < d; ++c) com[c] /= static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) gb[i * d + c] += spec.lj_osc * (xb[i * d + c] - com[c]);
        break;
      }
      case TargetKind::IsotropicGaussian: {
        double com[3] = {0, 0, 0};
        for (std::int64_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) com[c] += xb[i * d + c];
        for (int c = 0; c < d; ++c) com[c] /= static_cast<double>(n);
        const double inv = 1.0 / (spec.gauss_sigma * spec.gauss_sigma);
        for (std::int64_t i = 0; i < n; ++i)
          for (int c = 0; c < d; ++c) gb[i * d + c] = inv * (xb[i * d + c] - com[c]);
        break;
      }
    }
  }
  return grad;
}

double energy(const Tensor& x, const TargetSpec& spec) {
  return batch_energy(x.reshaped(Shape{1, x.shape()[0], x.shape()[1]}), spec).item();
}

Tensor energy_gradient(const Tensor& x, const TargetSpec& spec) {
  return batch_energy_gradient(x.reshaped(Shape{1, x.shape()[0], x.shape()[1]}), spec)
      .reshaped(x.shape());
}

Var energy_op(Var x, const TargetSpec& spec) {
  Tensor value = batch_energy(x.val(), spec);
  TargetSpec captured = spec;
  return custom(*x.tape, std::move(value), {x},
                [captured](const Tensor& up, const std::vector<Tensor>& parents) {
                  Tensor g = batch_energy_gradient(parents[0], captured);
                  // upstream (B) scales each sample's gradient block
                  const std::int64_t batch = up.size();
                  const std::int64_t block = g.size() / batch;
                  for (std::int64_t b = 0; b < batch; ++b)
                    for (std::int64_t i = 0; i < block; ++i) g[b * block + i] *= up[b];
                  return std::vector<Tensor>{g};
                });
}

Tensor augmented_log_density_values(const std::vector<Tensor>& aug, const Tensor& x, double eta) {
  Tape tape;
  std::vector<Var> avars;
  for (const Tensor& a : aug) avars.push_back(tape.constant(a));
  return augmented_log_density(avars, tape.constant(x), eta).val();
}

Var augmented_log_density(const std::vector<Var>& aug, Var x, double eta) {
  const Shape xs = x.shape();
  const double norm = -0.5 * static_cast<double>(xs[1]) * static_cast<double>(xs[2]) *
                      (kLog2Pi + 2.0 * std::log(eta));
  Var total{};
  for (const Var& a : aug) {
    Var sq = sum_axis(sum_axis(square(sub(a, x)), -1, false), -1, false);  // (B)
    Var term = add_scalar(scale(sq, -0.5 / (eta * eta)), norm);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

}  // namespace equiflow
