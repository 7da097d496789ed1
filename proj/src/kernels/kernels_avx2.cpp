#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstddef>

#include "equiflow/kernels.hpp"

// AVX2+FMA backend, 4-wide f64. Compiled with -mavx2 -mfma for this file
// only; selection happens at runtime in kernels.cpp.

namespace equiflow::kernels {
namespace {

inline std::size_t round4(std::size_t n) { return n & ~std::size_t(3); }

void a_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void a_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void a_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void a_div(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] / b[i];
}
void a_add_vs(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] + s;
}
void a_sub_vs(const double* a, double s, double* out, std::size_t n) { a_add_vs(a, -s, out, n); }
void a_sub_sv(double s, const double* a, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, _mm256_sub_pd(vs, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] = s - a[i];
}
void a_mul_vs(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] * s;
}
void a_div_vs(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) out[i] = a[i] / s;
}
void a_div_sv(double s, const double* a, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, _mm256_div_pd(vs, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] = s / a[i];
}
void a_acc(const double* a, double* out, std::size_t n) {
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] += a[i];
}
void a_acc_vs(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), vs, _mm256_loadu_pd(out + i)));
  for (; i < n; ++i) out[i] += a[i] * s;
}
void a_acc_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(out + i)));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}
void a_axpy(double alpha, const double* x, double* y, std::size_t n) { a_acc_vs(x, alpha, y, n); }
void a_scal(double alpha, double* x, std::size_t n) { a_mul_vs(x, alpha, x, n); }
void a_fill(double value, double* x, std::size_t n) {
  const __m256d v = _mm256_set1_pd(value);
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) _mm256_storeu_pd(x + i, v);
  for (; i < n; ++i) x[i] = value;
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double a_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0, n8 = n & ~std::size_t(7);
  for (; i < n8; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
double a_sum(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0, n4 = round4(n);
  for (; i < n4; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  double acc = hsum(acc0);
  for (; i < n; ++i) acc += a[i];
  return acc;
}

void a_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
            const double* a, const double* b, double* c, double beta) {
  if (beta == 0.0) a_fill(0.0, c, m * n);
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      const double* ai = a + i * k;
      std::size_t p = 0;
      // unroll over k by 2 to cut the store/load traffic on ci
      for (; p + 1 < k; p += 2) {
        const __m256d a0 = _mm256_set1_pd(ai[p]);
        const __m256d a1 = _mm256_set1_pd(ai[p + 1]);
        const double* b0 = b + p * n;
        const double* b1 = b0 + n;
        std::size_t j = 0, n4 = round4(n);
        for (; j < n4; j += 4) {
          __m256d cj = _mm256_loadu_pd(ci + j);
          cj = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cj);
          cj = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), cj);
          _mm256_storeu_pd(ci + j, cj);
        }
        for (; j < n; ++j) ci[j] += ai[p] * b0[j] + ai[p + 1] * b1[j];
      }
      for (; p < k; ++p) a_acc_vs(b + p * n, ai[p], ci, n);
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a_dot(a + i * k, b + j * k, k);
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      const double* ap = a + p * m;
      for (std::size_t i = 0; i < m; ++i) {
        if (ap[i] == 0.0) continue;
        a_acc_vs(bp, ap[i], c + i * n, n);
      }
    }
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

const Ops* avx2_ops_table() {
  static const Ops table = {
      "avx2",   a_add,    a_sub,    a_mul,    a_div,  a_add_vs, a_sub_vs,
      a_sub_sv, a_mul_vs, a_div_vs, a_div_sv, a_acc,  a_acc_vs, a_acc_mul,
      a_axpy,   a_scal,   a_fill,   a_dot,    a_sum,  a_gemm,
  };
  return &table;
}

}  // namespace equiflow::kernels

#endif  // x86-64
