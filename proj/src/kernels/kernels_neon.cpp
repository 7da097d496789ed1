#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstddef>

#include "equiflow/kernels.hpp"

// NEON backend, 2-wide f64. NEON is baseline on aarch64 so no runtime CPU
// probe is needed; gemm and reductions reuse the same structure as AVX2.

namespace equiflow::kernels {
namespace {

inline std::size_t round2(std::size_t n) { return n & ~std::size_t(1); }

void n_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void n_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void n_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void n_div(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vdivq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] / b[i];
}
void n_add_vs(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] + s;
}
void n_sub_vs(const double* a, double s, double* out, std::size_t n) { n_add_vs(a, -s, out, n); }
void n_sub_sv(double s, const double* a, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vsubq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s - a[i];
}
void n_mul_vs(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}
void n_div_vs(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vdivq_f64(vld1q_f64(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] / s;
}
void n_div_sv(double s, const double* a, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vdivq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s / a[i];
}
void n_acc(const double* a, double* out, std::size_t n) {
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(out + i), vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] += a[i];
}
void n_acc_vs(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vfmaq_f64(vld1q_f64(out + i), vld1q_f64(a + i), vs));
  for (; i < n; ++i) out[i] += a[i] * s;
}
void n_acc_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vfmaq_f64(vld1q_f64(out + i), vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}
void n_axpy(double alpha, const double* x, double* y, std::size_t n) { n_acc_vs(x, alpha, y, n); }
void n_scal(double alpha, double* x, std::size_t n) { n_mul_vs(x, alpha, x, n); }
void n_fill(double value, double* x, std::size_t n) {
  const float64x2_t v = vdupq_n_f64(value);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) vst1q_f64(x + i, v);
  for (; i < n; ++i) x[i] = value;
}
double n_dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}
double n_sum(const double* a, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0, n2 = round2(n);
  for (; i < n2; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void n_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
            const double* a, const double* b, double* c, double beta) {
  if (beta == 0.0) n_fill(0.0, c, m * n);
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) n_acc_vs(b + p * n, a[i * k + p], c + i * n, n);
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += n_dot(a + i * k, b + j * k, k);
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) n_acc_vs(b + p * n, a[p * m + i], c + i * n, n);
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
  }
}

}  // namespace

const Ops* neon_ops_table() {
  static const Ops table = {
      "neon",   n_add,    n_sub,    n_mul,    n_div,  n_add_vs, n_sub_vs,
      n_sub_sv, n_mul_vs, n_div_vs, n_div_sv, n_acc,  n_acc_vs, n_acc_mul,
      n_axpy,   n_scal,   n_fill,   n_dot,    n_sum,  n_gemm,
  };
  return &table;
}

}  // namespace equiflow::kernels

#endif  // aarch64
