#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace equiflow {

// Dense row-major double tensor, rank 1..6. Scalars are shape {1}.
class Shape {
 public:
  static constexpr int kMaxRank = 6;

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(const std::vector<std::int64_t>& dims);

  int rank() const { return rank_; }
  std::int64_t operator[](int i) const { return dims_[i]; }
  std::int64_t& operator[](int i) { return dims_[i]; }
  std::int64_t numel() const;
  std::int64_t back() const { return dims_[rank_ - 1]; }
  bool operator==(const Shape& other) const;
  bool operator!=(const Shape& other) const { return !(*this == other); }
  std::string str() const;

  Shape dropped(int axis) const;            // remove one axis
  Shape with_axis(int axis, std::int64_t n) const;  // insert axis of size n
  Shape replaced(int axis, std::int64_t n) const;

 private:
  std::int64_t dims_[kMaxRank] = {0, 0, 0, 0, 0, 0};
  int rank_ = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(shape.numel(), 0.0) {}

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);
  static Tensor from(const Shape& shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::initializer_list<std::int64_t> idx);
  double at(std::initializer_list<std::int64_t> idx) const;
  double item() const;  // requires size() == 1

  Tensor reshaped(const Shape& shape) const;
  bool all_finite() const;
  std::string str() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---- value-level operations (used directly and by the autodiff tape) ----

Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_div(const Tensor& a, const Tensor& b);

Tensor t_scale(const Tensor& a, double s);
Tensor t_add_scalar(const Tensor& a, double s);
Tensor t_neg(const Tensor& a);

Tensor t_exp(const Tensor& a);
Tensor t_log(const Tensor& a);
Tensor t_sqrt(const Tensor& a);
Tensor t_sin(const Tensor& a);
Tensor t_cos(const Tensor& a);
Tensor t_sigmoid(const Tensor& a);
Tensor t_silu(const Tensor& a);
Tensor t_softplus(const Tensor& a);
Tensor t_abs(const Tensor& a);
Tensor t_square(const Tensor& a);
Tensor t_clamp(const Tensor& a, double lo, double hi);
Tensor t_atan2(const Tensor& y, const Tensor& x);  // same shape

double t_sum_all(const Tensor& a);
double t_max_all(const Tensor& a);
Tensor t_sum_axis(const Tensor& a, int axis, bool keepdim);
Tensor t_max_last(const Tensor& a, bool keepdim);
Tensor t_cumsum_last(const Tensor& a);

// A: (..., m, k) [flattened batch], B: (k, n) -> (..., m, n)
Tensor t_matmul(const Tensor& a, const Tensor& b);
// Per-element small matrix times vector: Q (..., d, d), p (..., d).
// transpose=false: out_i = sum_j Q[i][j] p[j]; transpose=true uses Q^T.
Tensor t_apply_basis(const Tensor& q, const Tensor& p, bool transpose);

Tensor t_gather_last(const Tensor& a, const Tensor& idx);  // idx values are integers
Tensor t_concat(const std::vector<const Tensor*>& parts, int axis);
Tensor t_slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len);
Tensor t_broadcast_to(const Tensor& a, const Shape& shape);
// Sum `grad` down to `shape` (inverse of broadcasting), accumulating into out.
void t_reduce_into(const Tensor& grad, Tensor& out);

}  // namespace equiflow
