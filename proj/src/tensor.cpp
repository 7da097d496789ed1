#include "equiflow/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "equiflow/kernels.hpp"

namespace equiflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("tensor: " + msg); }

}  // namespace

Shape::Shape(std::initializer_list<std::int64_t> dims) {
  if (dims.size() > kMaxRank) fail("rank > " + std::to_string(kMaxRank));
  for (std::int64_t d : dims) dims_[rank_++] = d;
}

Shape::Shape(const std::vector<std::int64_t>& dims) {
  if (dims.size() > kMaxRank) fail("rank > " + std::to_string(kMaxRank));
  for (std::int64_t d : dims) dims_[rank_++] = d;
}

std::int64_t Shape::numel() const {
  if (rank_ == 0) return 0;
  std::int64_t n = 1;
  for (int i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const {
  if (rank_ != other.rank_) return false;
  for (int i = 0; i < rank_; ++i)
    if (dims_[i] != other.dims_[i]) return false;
  return true;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
  os << ')';
  return os.str();
}

Shape Shape::dropped(int axis) const {
  Shape s;
  for (int i = 0; i < rank_; ++i)
    if (i != axis) s.dims_[s.rank_++] = dims_[i];
  return s;
}

Shape Shape::with_axis(int axis, std::int64_t n) const {
  if (rank_ + 1 > kMaxRank) fail("rank > " + std::to_string(kMaxRank));
  Shape s;
  s.rank_ = rank_ + 1;
  for (int i = 0, j = 0; i < s.rank_; ++i) s.dims_[i] = (i == axis) ? n : dims_[j++];
  return s;
}

Shape Shape::replaced(int axis, std::int64_t n) const {
  Shape s = *this;
  s.dims_[axis] = n;
  return s;
}

Tensor Tensor::full(const Shape& shape, double value) {
  Tensor t(shape);
  kernels::ops().fill(value, t.data(), static_cast<std::size_t>(t.size()));
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t(Shape{1});
  t[0] = value;
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  if (shape.numel() != static_cast<std::int64_t>(values.size())) fail("from(): size mismatch");
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::move(values);
  return t;
}

double& Tensor::at(std::initializer_list<std::int64_t> idx) {
  std::int64_t off = 0;
  int i = 0;
  for (std::int64_t v : idx) off = off * shape_[i++] + v;
  return data_[static_cast<std::size_t>(off)];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  return const_cast<Tensor*>(this)->at(idx);
}

double Tensor::item() const {
  if (size() != 1) fail("item(): size " + std::to_string(size()));
  return data_[0];
}

Tensor Tensor::reshaped(const Shape& shape) const {
  if (shape.numel() != size()) fail("reshape " + shape_.str() + " -> " + shape.str());
  Tensor t = *this;
  t.shape_ = shape;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::str() const {
  std::ostringstream os;
  os << shape_.str() << '[';
  for (std::int64_t i = 0; i < size() && i < 32; ++i) os << (i ? "," : "") << data_[i];
  if (size() > 32) os << ",...";
  os << ']';
  return os.str();
}

// ---- broadcasting ----

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const int rank = a.rank() > b.rank() ? a.rank() : b.rank();
  std::vector<std::int64_t> dims(rank);
  for (int i = 0; i < rank; ++i) {
    const int ia = a.rank() - rank + i, ib = b.rank() - rank + i;
    const std::int64_t da = ia >= 0 ? a[ia] : 1, db = ib >= 0 ? b[ib] : 1;
    if (da != db && da != 1 && db != 1)
      fail("broadcast " + a.str() + " with " + b.str());
    dims[i] = da > db ? da : db;
  }
  return Shape(dims);
}

namespace {

struct Plan {
  Shape out;
  int rank = 0;
  std::int64_t dim[Shape::kMaxRank];
  std::int64_t sa[Shape::kMaxRank];
  std::int64_t sb[Shape::kMaxRank];
};

// element strides of `s` aligned into `rank` trailing slots, 0 on broadcast axes
void aligned_strides(const Shape& s, int rank, const std::int64_t* out_dim, std::int64_t* strides) {
  std::int64_t natural[Shape::kMaxRank];
  std::int64_t acc = 1;
  for (int i = s.rank() - 1; i >= 0; --i) {
    natural[i] = acc;
    acc *= s[i];
  }
  for (int i = 0; i < rank; ++i) {
    const int is = s.rank() - rank + i;
    if (is < 0 || s[is] == 1)
      strides[i] = (is >= 0 && out_dim[i] == 1) ? natural[is] : 0;
    else
      strides[i] = natural[is];
  }
}

Plan make_plan(const Shape& a, const Shape& b) {
  Plan p;
  p.out = broadcast_shapes(a, b);
  p.rank = p.out.rank();
  for (int i = 0; i < p.rank; ++i) p.dim[i] = p.out[i];
  aligned_strides(a, p.rank, p.dim, p.sa);
  aligned_strides(b, p.rank, p.dim, p.sb);
  return p;
}

template <class VV, class VS, class SV>
Tensor apply_binary(const Tensor& a, const Tensor& b, VV vv, VS vs, SV sv) {
  if (a.shape() == b.shape()) {  // fast path
    Tensor out(a.shape());
    vv(a.data(), b.data(), out.data(), static_cast<std::size_t>(out.size()));
    return out;
  }
  Plan p = make_plan(a.shape(), b.shape());
  Tensor out(p.out);
  const int last = p.rank - 1;
  const std::int64_t inner = p.dim[last];
  const std::int64_t outer = out.size() / (inner ? inner : 1);
  const bool a_vec = p.sa[last] != 0, b_vec = p.sb[last] != 0;
  std::int64_t counters[Shape::kMaxRank] = {0};
  double* o = out.data();
  for (std::int64_t step = 0; step < outer; ++step) {
    std::int64_t offa = 0, offb = 0;
    for (int i = 0; i < last; ++i) {
      offa += counters[i] * p.sa[i];
      offb += counters[i] * p.sb[i];
    }
    const double* pa = a.data() + offa;
    const double* pb = b.data() + offb;
    const std::size_t n = static_cast<std::size_t>(inner);
    if (a_vec && b_vec)
      vv(pa, pb, o, n);
    else if (a_vec)
      vs(pa, *pb, o, n);
    else if (b_vec)
      sv(*pa, pb, o, n);
    else {
      double tmp;
      vs(pa, *pb, &tmp, 1);
      kernels::ops().fill(tmp, o, n);
    }
    o += inner;
    for (int i = last - 1; i >= 0; --i) {
      if (++counters[i] < p.dim[i]) break;
      counters[i] = 0;
    }
  }
  return out;
}

template <class Fn>
Tensor map_unary(const Tensor& a, Fn fn) {
  Tensor out(a.shape());
  fn(a.data(), out.data(), static_cast<std::size_t>(a.size()));
  return out;
}

}  // namespace

Tensor t_add(const Tensor& a, const Tensor& b) {
  const auto& o = kernels::ops();
  return apply_binary(a, b, o.add, o.add_vs, [&](double s, const double* x, double* out, std::size_t n) {
    o.add_vs(x, s, out, n);
  });
}
Tensor t_sub(const Tensor& a, const Tensor& b) {
  const auto& o = kernels::ops();
  return apply_binary(a, b, o.sub, o.sub_vs, o.sub_sv);
}
Tensor t_mul(const Tensor& a, const Tensor& b) {
  const auto& o = kernels::ops();
  return apply_binary(a, b, o.mul, o.mul_vs, [&](double s, const double* x, double* out, std::size_t n) {
    o.mul_vs(x, s, out, n);
  });
}
Tensor t_div(const Tensor& a, const Tensor& b) {
  const auto& o = kernels::ops();
  return apply_binary(a, b, o.div, o.div_vs, o.div_sv);
}

Tensor t_scale(const Tensor& a, double s) {
  return map_unary(a, [&](const double* x, double* out, std::size_t n) {
    kernels::ops().mul_vs(x, s, out, n);
  });
}
Tensor t_add_scalar(const Tensor& a, double s) {
  return map_unary(a, [&](const double* x, double* out, std::size_t n) {
    kernels::ops().add_vs(x, s, out, n);
  });
}
Tensor t_neg(const Tensor& a) { return t_scale(a, -1.0); }

Tensor t_exp(const Tensor& a) { return map_unary(a, kernels::v_exp); }
Tensor t_log(const Tensor& a) { return map_unary(a, kernels::v_log); }
Tensor t_sqrt(const Tensor& a) { return map_unary(a, kernels::v_sqrt); }
Tensor t_sin(const Tensor& a) { return map_unary(a, kernels::v_sin); }
Tensor t_cos(const Tensor& a) { return map_unary(a, kernels::v_cos); }
Tensor t_sigmoid(const Tensor& a) { return map_unary(a, kernels::v_sigmoid); }
Tensor t_silu(const Tensor& a) { return map_unary(a, kernels::v_silu); }
Tensor t_softplus(const Tensor& a) { return map_unary(a, kernels::v_softplus); }

Tensor t_abs(const Tensor& a) {
  return map_unary(a, [](const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(x[i]);
  });
}
Tensor t_square(const Tensor& a) {
  return map_unary(a, [](const double* x, double* out, std::size_t n) {
    kernels::ops().mul(x, x, out, n);
  });
}
Tensor t_clamp(const Tensor& a, double lo, double hi) {
  return map_unary(a, [&](const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
  });
}

Tensor t_atan2(const Tensor& y, const Tensor& x) {
  if (y.shape() != x.shape()) fail("atan2 shape mismatch");
  Tensor out(y.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::atan2(y[i], x[i]);
  return out;
}

double t_sum_all(const Tensor& a) {
  return kernels::ops().sum(a.data(), static_cast<std::size_t>(a.size()));
}

double t_max_all(const Tensor& a) {
  double m = a[0];
  for (std::int64_t i = 1; i < a.size(); ++i)
    if (a[i] > m) m = a[i];
  return m;
}

Tensor t_sum_axis(const Tensor& a, int axis, bool keepdim) {
  if (axis < 0) axis += a.rank();
  std::int64_t pre = 1, post = 1;
  for (int i = 0; i < axis; ++i) pre *= a.shape()[i];
  for (int i = axis + 1; i < a.rank(); ++i) post *= a.shape()[i];
  const std::int64_t d = a.shape()[axis];
  Shape out_shape = keepdim ? a.shape().replaced(axis, 1) : a.shape().dropped(axis);
  Tensor out(out_shape);
  const auto& o = kernels::ops();
  for (std::int64_t p = 0; p < pre; ++p) {
    double* op = out.data() + p * post;
    const double* ap = a.data() + p * d * post;
    if (post == 1) {
      op[0] = o.sum(ap, static_cast<std::size_t>(d));
    } else {
      for (std::int64_t j = 0; j < d; ++j) o.acc(ap + j * post, op, static_cast<std::size_t>(post));
    }
  }
  return out;
}

Tensor t_max_last(const Tensor& a, bool keepdim) {
  const std::int64_t d = a.shape().back();
  const std::int64_t rows = a.size() / d;
  Shape out_shape = keepdim ? a.shape().replaced(a.rank() - 1, 1) : a.shape().dropped(a.rank() - 1);
  if (out_shape.rank() == 0) out_shape = Shape{1};
  Tensor out(out_shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = a.data() + r * d;
    double m = row[0];
    for (std::int64_t j = 1; j < d; ++j)
      if (row[j] > m) m = row[j];
    out[r] = m;
  }
  return out;
}

Tensor t_cumsum_last(const Tensor& a) {
  const std::int64_t d = a.shape().back();
  const std::int64_t rows = a.size() / d;
  Tensor out(a.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = a.data() + r * d;
    double* dst = out.data() + r * d;
    double acc = 0.0;
    for (std::int64_t j = 0; j < d; ++j) dst[j] = (acc += src[j]);
  }
  return out;
}

Tensor t_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2) fail("matmul ranks " + a.shape().str() + " x " + b.shape().str());
  const std::int64_t k = a.shape().back();
  if (k != b.shape()[0]) fail("matmul inner dim " + a.shape().str() + " x " + b.shape().str());
  const std::int64_t n = b.shape()[1];
  const std::int64_t rows = a.size() / k;
  Shape out_shape = a.shape().replaced(a.rank() - 1, n);
  Tensor out(out_shape);
  kernels::gemm(false, false, static_cast<std::size_t>(rows), static_cast<std::size_t>(n),
                static_cast<std::size_t>(k), a.data(), b.data(), out.data(), 0.0);
  return out;
}

Tensor t_apply_basis(const Tensor& q, const Tensor& p, bool transpose) {
  const int qr = q.rank();
  const std::int64_t d = q.shape()[qr - 1];
  if (q.shape()[qr - 2] != d || p.shape().back() != d) fail("apply_basis shapes");
  if (p.size() * d != q.size()) fail("apply_basis batch mismatch");
  Tensor out(p.shape());
  const std::int64_t batch = p.size() / d;
  for (std::int64_t t = 0; t < batch; ++t) {
    const double* Q = q.data() + t * d * d;
    const double* v = p.data() + t * d;
    double* o = out.data() + t * d;
    for (std::int64_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < d; ++j) acc += (transpose ? Q[j * d + i] : Q[i * d + j]) * v[j];
      o[i] = acc;
    }
  }
  return out;
}

Tensor t_gather_last(const Tensor& a, const Tensor& idx) {
  const std::int64_t k = a.shape().back();
  const std::int64_t rows = a.size() / k;
  if (idx.size() != rows) fail("gather_last index count");
  Tensor out(a.shape().dropped(a.rank() - 1));
  if (out.rank() == 0) out = Tensor(Shape{1});
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t j = static_cast<std::int64_t>(idx[r]);
    out[r] = a[r * k + j];
  }
  return out;
}

Tensor t_concat(const std::vector<const Tensor*>& parts, int axis) {
  if (parts.empty()) fail("concat: empty");
  const Tensor& first = *parts[0];
  if (axis < 0) axis += first.rank();
  std::int64_t total = 0;
  for (const Tensor* t : parts) total += t->shape()[axis];
  Shape out_shape = first.shape().replaced(axis, total);
  Tensor out(out_shape);
  std::int64_t pre = 1, post = 1;
  for (int i = 0; i < axis; ++i) pre *= out_shape[i];
  for (int i = axis + 1; i < out_shape.rank(); ++i) post *= out_shape[i];
  std::int64_t offset = 0;
  for (const Tensor* t : parts) {
    const std::int64_t d = t->shape()[axis];
    for (std::int64_t p = 0; p < pre; ++p)
      std::memcpy(out.data() + (p * total + offset) * post, t->data() + p * d * post,
                  static_cast<std::size_t>(d * post) * sizeof(double));
    offset += d;
  }
  return out;
}

Tensor t_slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len) {
  if (axis < 0) axis += a.rank();
  const std::int64_t d = a.shape()[axis];
  if (start < 0 || start + len > d) fail("slice out of range");
  std::int64_t pre = 1, post = 1;
  for (int i = 0; i < axis; ++i) pre *= a.shape()[i];
  for (int i = axis + 1; i < a.rank(); ++i) post *= a.shape()[i];
  Tensor out(a.shape().replaced(axis, len));
  for (std::int64_t p = 0; p < pre; ++p)
    std::memcpy(out.data() + p * len * post, a.data() + (p * d + start) * post,
                static_cast<std::size_t>(len * post) * sizeof(double));
  return out;
}

Tensor t_broadcast_to(const Tensor& a, const Shape& shape) {
  Tensor zero = Tensor::zeros(shape);
  return t_add(zero, a);  // broadcasting add against zeros
}

void t_reduce_into(const Tensor& grad, Tensor& out) {
  if (grad.shape() == out.shape()) {
    kernels::ops().acc(grad.data(), out.data(), static_cast<std::size_t>(out.size()));
    return;
  }
  Plan p = make_plan(out.shape(), grad.shape());
  if (p.out != grad.shape()) fail("reduce_into: incompatible " + grad.shape().str() + " -> " + out.shape().str());
  const int last = p.rank - 1;
  const std::int64_t inner = p.dim[last];
  const std::int64_t outer = grad.size() / (inner ? inner : 1);
  const bool out_vec = p.sa[last] != 0;
  std::int64_t counters[Shape::kMaxRank] = {0};
  const double* g = grad.data();
  const auto& o = kernels::ops();
  for (std::int64_t step = 0; step < outer; ++step) {
    std::int64_t off = 0;
    for (int i = 0; i < last; ++i) off += counters[i] * p.sa[i];
    if (out_vec)
      o.acc(g, out.data() + off, static_cast<std::size_t>(inner));
    else
      out[off] += o.sum(g, static_cast<std::size_t>(inner));
    g += inner;
    for (int i = last - 1; i >= 0; --i) {
      if (++counters[i] < p.dim[i]) break;
      counters[i] = 0;
    }
  }
}

}  // namespace equiflow
