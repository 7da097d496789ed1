#include "equiflow/kernels.hpp"

#include <cmath>

// Reference backend. Loop order and summation order here define the
// semantics that vectorized backends approximate (they may reassociate).

namespace equiflow::kernels {
namespace {

void s_add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void s_sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void s_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void s_div(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
void s_add_vs(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + s;
}
void s_sub_vs(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - s;
}
void s_sub_sv(double s, const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s - a[i];
}
void s_mul_vs(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}
void s_div_vs(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / s;
}
void s_div_sv(double s, const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s / a[i];
}
void s_acc(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i];
}
void s_acc_vs(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * s;
}
void s_acc_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}
void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
void s_scal(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}
void s_fill(double value, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = value;
}
double s_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
double s_sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void s_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
            const double* a, const double* b, double* c, double beta) {
  if (beta == 0.0) s_fill(0.0, c, m * n);
  if (!ta && !tb) {
    // C[i,:] += A[i,p] * B[p,:]
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a[i * k + p];
        if (aip == 0.0) continue;
        s_acc_vs(b + p * n, aip, ci, n);
      }
    }
  } else if (!ta && tb) {
    // B stored n x k; C[i,j] += dot(A[i,:], B[j,:])
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += s_dot(a + i * k, b + j * k, k);
  } else if (ta && !tb) {
    // A stored k x m; C[i,:] += A[p,i] * B[p,:]
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double api = a[p * m + i];
        if (api == 0.0) continue;
        s_acc_vs(bp, api, c + i * n, n);
      }
    }
  } else {
    // A stored k x m, B stored n x k
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table = {
      "scalar", s_add,    s_sub,    s_mul,    s_div,  s_add_vs, s_sub_vs,
      s_sub_sv, s_mul_vs, s_div_vs, s_div_sv, s_acc,  s_acc_vs, s_acc_mul,
      s_axpy,   s_scal,   s_fill,   s_dot,    s_sum,  s_gemm,
  };
  return table;
}

void v_exp(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}
void v_log(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
}
void v_sqrt(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
}
void v_sin(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(a[i]);
}
void v_cos(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(a[i]);
}
void v_sigmoid(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
}
void v_silu(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / (1.0 + std::exp(-a[i]));
}
void v_softplus(const double* a, double* out, std::size_t n) {
  // log(1 + e^x), overflow-safe
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a[i] > 30.0 ? a[i] : std::log1p(std::exp(a[i]));
}

}  // namespace equiflow::kernels
