#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels used by the tensor engine. A scalar
// reference backend always exists; vectorized backends (AVX2 on x86-64,
// NEON on aarch64) are selected at runtime and must agree with the scalar
// reference up to floating-point reassociation (see tests/test_kernels.cpp).
//
// Transcendentals (exp, log, ...) are shared scalar code in every backend so
// results are identical across backends; only pure-arithmetic loops differ.

namespace equiflow::kernels {

struct Ops {
  const char* name;

  // elementwise, all arrays length n; out may alias a or b
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*div)(const double* a, const double* b, double* out, std::size_t n);

  // vector-scalar variants (s is a broadcast scalar)
  void (*add_vs)(const double* a, double s, double* out, std::size_t n);
  void (*sub_vs)(const double* a, double s, double* out, std::size_t n);
  void (*sub_sv)(double s, const double* a, double* out, std::size_t n);
  void (*mul_vs)(const double* a, double s, double* out, std::size_t n);
  void (*div_vs)(const double* a, double s, double* out, std::size_t n);
  void (*div_sv)(double s, const double* a, double* out, std::size_t n);

  // accumulating forms used by the autodiff backward pass
  void (*acc)(const double* a, double* out, std::size_t n);            // out += a
  void (*acc_vs)(const double* a, double s, double* out, std::size_t n);  // out += a*s
  void (*acc_mul)(const double* a, const double* b, double* out, std::size_t n);  // out += a*b

  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
  void (*scal)(double alpha, double* x, std::size_t n);                   // x *= alpha
  void (*fill)(double value, double* x, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);

  // C (m x n) = op(A) * op(B) + beta * C, row-major, beta in {0, 1}.
  // ta/tb transpose A (stored k x m) / B (stored n x k).
  void (*gemm)(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c, double beta);
};

// Active backend (chosen once: EQUIFLOW_KERNELS env var, else best available).
const Ops& ops();
const Ops& scalar_ops();
const Ops* backend_by_name(const std::string& name);  // nullptr if unknown/unsupported
std::string active_backend_name();
void force_backend(const std::string& name);  // "scalar", "avx2", "neon"; throws if unavailable

// Worker threads used by gemm for large problems (1 = fully serial).
// Row-partitioned, so results are identical for every thread count.
void set_num_threads(int n);
int num_threads();

// Dispatching gemm entry point: splits rows across the worker pool when the
// problem is large enough, otherwise calls the active backend directly.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, double beta);

// Scalar transcendental helpers shared by all backends.
void v_exp(const double* a, double* out, std::size_t n);
void v_log(const double* a, double* out, std::size_t n);
void v_sqrt(const double* a, double* out, std::size_t n);
void v_sin(const double* a, double* out, std::size_t n);
void v_cos(const double* a, double* out, std::size_t n);
void v_sigmoid(const double* a, double* out, std::size_t n);
void v_silu(const double* a, double* out, std::size_t n);
void v_softplus(const double* a, double* out, std::size_t n);

}  // namespace equiflow::kernels
