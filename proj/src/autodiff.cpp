#include "equiflow/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "equiflow/kernels.hpp"

namespace equiflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("autodiff: " + msg); }

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) fail("vars from different tapes");
}

// adds g into a region of `into` along `axis` starting at `start`
void accumulate_slice(Tensor& into, const Tensor& g, int axis, std::int64_t start) {
  const std::int64_t d = into.shape()[axis];
  const std::int64_t len = g.shape()[axis];
  std::int64_t pre = 1, post = 1;
  for (int i = 0; i < axis; ++i) pre *= into.shape()[i];
  for (int i = axis + 1; i < into.rank(); ++i) post *= into.shape()[i];
  const auto& o = kernels::ops();
  for (std::int64_t p = 0; p < pre; ++p)
    o.acc(g.data() + p * len * post, into.data() + (p * d + start) * post,
          static_cast<std::size_t>(len * post));
}

}  // namespace

const Tensor& Var::val() const { return tape->value_of(id); }
const Shape& Var::shape() const { return val().shape(); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

int Tape::emit(Tensor value, std::initializer_list<int> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (int p : parents)
    if (nodes_[p].needs_grad) node.needs_grad = true;
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::emit_multi(Tensor value, const std::vector<int>& parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (int p : parents)
    if (nodes_[p].needs_grad) node.needs_grad = true;
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::mutable_grad(int id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor::zeros(node.value.shape());
  return node.grad;
}

void Tape::add_grad(int id, const Tensor& g) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return;
  t_reduce_into(g, mutable_grad(id));
}

bool Tape::has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

const Tensor& Tape::grad(Var v) const {
  if (!has_grad(v)) fail("no gradient at node " + std::to_string(v.id));
  return nodes_[v.id].grad;
}

void Tape::backward(Var loss, bool release_buffers) {
  if (loss.tape != this) fail("loss from another tape");
  if (value_of(loss.id).size() != 1) fail("backward() needs a scalar loss");
  nodes_[loss.id].keep = true;
  mutable_grad(loss.id) = Tensor::full(value_of(loss.id).shape(), 1.0);
  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.needs_grad && !node.grad.empty() && node.backward) node.backward(*this, i);
    if (release_buffers && !node.is_leaf && !node.keep) {
      node.value = Tensor();
      node.grad = Tensor();
    }
  }
}

// ---- ops ----

Var add(Var a, Var b) {
  check_same_tape(a, b);
  const int pa = a.id, pb = b.id;
  int id = a.tape->emit(t_add(a.val(), b.val()), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    t.add_grad(pa, g);
    t.add_grad(pb, g);
  });
  return Var{a.tape, id};
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  const int pa = a.id, pb = b.id;
  int id = a.tape->emit(t_sub(a.val(), b.val()), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    t.add_grad(pa, g);
    if (t.node_needs_grad(pb)) t.add_grad(pb, t_neg(g));
  });
  return Var{a.tape, id};
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  const int pa = a.id, pb = b.id;
  int id = a.tape->emit(t_mul(a.val(), b.val()), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.node_needs_grad(pa)) t.add_grad(pa, t_mul(g, t.value_of(pb)));
    if (t.node_needs_grad(pb)) t.add_grad(pb, t_mul(g, t.value_of(pa)));
  });
  return Var{a.tape, id};
}

Var div(Var a, Var b) {
  check_same_tape(a, b);
  const int pa = a.id, pb = b.id;
  int id = a.tape->emit(t_div(a.val(), b.val()), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.node_needs_grad(pa)) t.add_grad(pa, t_div(g, t.value_of(pb)));
    if (t.node_needs_grad(pb))
      t.add_grad(pb, t_neg(t_div(t_mul(g, t.value_of(self)), t.value_of(pb))));
  });
  return Var{a.tape, id};
}

Var add_scalar(Var a, double s) {
  const int pa = a.id;
  int id = a.tape->emit(t_add_scalar(a.val(), s), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t.grad_of(self));
  });
  return Var{a.tape, id};
}

Var scale(Var a, double s) {
  const int pa = a.id;
  int id = a.tape->emit(t_scale(a.val(), s), {pa}, [pa, s](Tape& t, int self) {
    t.add_grad(pa, t_scale(t.grad_of(self), s));
  });
  return Var{a.tape, id};
}

Var neg(Var a) { return scale(a, -1.0); }

Var exp(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_exp(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_mul(t.grad_of(self), t.value_of(self)));
  });
  return Var{a.tape, id};
}

Var log(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_log(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_div(t.grad_of(self), t.value_of(pa)));
  });
  return Var{a.tape, id};
}

Var sqrt(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_sqrt(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_div(t_scale(t.grad_of(self), 0.5), t.value_of(self)));
  });
  return Var{a.tape, id};
}

Var sin(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_sin(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_mul(t.grad_of(self), t_cos(t.value_of(pa))));
  });
  return Var{a.tape, id};
}

Var cos(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_cos(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_neg(t_mul(t.grad_of(self), t_sin(t.value_of(pa)))));
  });
  return Var{a.tape, id};
}

Var sigmoid(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_sigmoid(a.val()), {pa}, [pa](Tape& t, int self) {
    const Tensor& y = t.value_of(self);
    t.add_grad(pa, t_mul(t.grad_of(self), t_mul(y, t_add_scalar(t_neg(y), 1.0))));
  });
  return Var{a.tape, id};
}

Var silu(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_silu(a.val()), {pa}, [pa](Tape& t, int self) {
    // d/dx x*sig(x) = sig(x) * (1 + x * (1 - sig(x)))
    const Tensor& x = t.value_of(pa);
    Tensor s = t_sigmoid(x);
    Tensor d = t_mul(s, t_add_scalar(t_mul(x, t_add_scalar(t_neg(s), 1.0)), 1.0));
    t.add_grad(pa, t_mul(t.grad_of(self), d));
  });
  return Var{a.tape, id};
}

Var softplus(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_softplus(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_mul(t.grad_of(self), t_sigmoid(t.value_of(pa))));
  });
  return Var{a.tape, id};
}

Var abs(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_abs(a.val()), {pa}, [pa](Tape& t, int self) {
    const Tensor& x = t.value_of(pa);
    Tensor sign(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) sign[i] = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0);
    t.add_grad(pa, t_mul(t.grad_of(self), sign));
  });
  return Var{a.tape, id};
}

Var square(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_square(a.val()), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t_mul(t.grad_of(self), t_scale(t.value_of(pa), 2.0)));
  });
  return Var{a.tape, id};
}

Var clamp(Var a, double lo, double hi) {
  const int pa = a.id;
  int id = a.tape->emit(t_clamp(a.val(), lo, hi), {pa}, [pa, lo, hi](Tape& t, int self) {
    const Tensor& x = t.value_of(pa);
    Tensor mask(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) mask[i] = (x[i] >= lo && x[i] <= hi) ? 1.0 : 0.0;
    t.add_grad(pa, t_mul(t.grad_of(self), mask));
  });
  return Var{a.tape, id};
}

Var atan2(Var y, Var x) {
  check_same_tape(y, x);
  const int py = y.id, px = x.id;
  int id = y.tape->emit(t_atan2(y.val(), x.val()), {py, px}, [py, px](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& yv = t.value_of(py);
    const Tensor& xv = t.value_of(px);
    Tensor r2 = t_add(t_square(xv), t_square(yv));
    if (t.node_needs_grad(py)) t.add_grad(py, t_mul(g, t_div(xv, r2)));
    if (t.node_needs_grad(px)) t.add_grad(px, t_neg(t_mul(g, t_div(yv, r2))));
  });
  return Var{y.tape, id};
}

Var wrap_angle(Var a) {
  const int pa = a.id;
  Tensor w(a.val().shape());
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::int64_t i = 0; i < w.size(); ++i) {
    const double v = a.val()[i];
    w[i] = v - kTwoPi * std::floor((v + kTwoPi / 2) / kTwoPi);
  }
  int id = a.tape->emit(std::move(w), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t.grad_of(self));
  });
  return Var{a.tape, id};
}

Var sum_all(Var a) {
  const int pa = a.id;
  const Shape in_shape = a.shape();
  int id = a.tape->emit(Tensor::scalar(t_sum_all(a.val())), {pa}, [pa, in_shape](Tape& t, int self) {
    t.add_grad(pa, Tensor::full(in_shape, t.grad_of(self).item()));
  });
  return Var{a.tape, id};
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size())); }

Var sum_axis(Var a, int axis, bool keepdim) {
  if (axis < 0) axis += a.shape().rank();
  const int pa = a.id;
  const Shape keep_shape = a.shape().replaced(axis, 1);
  int id = a.tape->emit(t_sum_axis(a.val(), axis, keepdim), {pa},
                        [pa, keep_shape](Tape& t, int self) {
                          // broadcast grad back along the reduced axis
                          Tensor g = t.grad_of(self).reshaped(keep_shape);
                          t.add_grad(pa, t_broadcast_to(g, t.value_of(pa).shape()));
                        });
  return Var{a.tape, id};
}

Var mean_axis(Var a, int axis, bool keepdim) {
  const int ax = axis < 0 ? axis + a.shape().rank() : axis;
  return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

Var cumsum_last(Var a) {
  const int pa = a.id;
  int id = a.tape->emit(t_cumsum_last(a.val()), {pa}, [pa](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const std::int64_t d = g.shape().back();
    const std::int64_t rows = g.size() / d;
    Tensor out(g.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* src = g.data() + r * d;
      double* dst = out.data() + r * d;
      double acc = 0.0;
      for (std::int64_t j = d - 1; j >= 0; --j) dst[j] = (acc += src[j]);
    }
    t.add_grad(pa, out);
  });
  return Var{a.tape, id};
}

Var logsumexp_last(Var a, bool keepdim) {
  Tensor m = t_max_last(a.val(), true);
  Var shifted = sub(a, a.tape->constant(m));
  Var s = sum_axis(exp(shifted), -1, keepdim);
  Var out = log(s);
  Tensor mk = keepdim ? m : m.reshaped(out.shape());
  return add(out, a.tape->constant(mk));
}

Var softmax_last(Var a) {
  Var lse = logsumexp_last(a, true);
  return exp(sub(a, lse));
}

Var matmul(Var a, Var w) {
  check_same_tape(a, w);
  const int pa = a.id, pw = w.id;
  int id = a.tape->emit(t_matmul(a.val(), w.val()), {pa, pw}, [pa, pw](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& av = t.value_of(pa);
    const Tensor& wv = t.value_of(pw);
    const std::size_t k = static_cast<std::size_t>(wv.shape()[0]);
    const std::size_t n = static_cast<std::size_t>(wv.shape()[1]);
    const std::size_t rows = static_cast<std::size_t>(av.size()) / k;
    if (t.node_needs_grad(pa)) {
      Tensor& ga = t.mutable_grad(pa);
      kernels::gemm(false, true, rows, k, n, g.data(), wv.data(), ga.data(), 1.0);
    }
    if (t.node_needs_grad(pw)) {
      Tensor& gw = t.mutable_grad(pw);
      kernels::gemm(true, false, k, n, rows, av.data(), g.data(), gw.data(), 1.0);
    }
  });
  return Var{a.tape, id};
}

Var linear(Var x, Var w, Var b) { return add(matmul(x, w), b); }

Var apply_basis(Var q, Var p, bool transpose) {
  check_same_tape(q, p);
  const int pq = q.id, pp = p.id;
  int id = q.tape->emit(t_apply_basis(q.val(), p.val(), transpose), {pq, pp},
                        [pq, pp, transpose](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& qv = t.value_of(pq);
    const Tensor& pv = t.value_of(pp);
    const std::int64_t d = pv.shape().back();
    const std::int64_t batch = pv.size() / d;
    if (t.node_needs_grad(pp)) {
      // dL/dp = Q g (transpose mode) or Q^T g
      t.add_grad(pp, t_apply_basis(qv, g, !transpose));
    }
    if (t.node_needs_grad(pq)) {
      Tensor gq = Tensor::zeros(qv.shape());
      for (std::int64_t b = 0; b < batch; ++b) {
        const double* gv = g.data() + b * d;
        const double* vv = pv.data() + b * d;
        double* o = gq.data() + b * d * d;
        if (transpose) {
          // out_i = sum_j Q[j,i] p[j] -> dQ[j,i] = p[j] g[i]
          for (std::int64_t j = 0; j < d; ++j)
            for (std::int64_t i = 0; i < d; ++i) o[j * d + i] += vv[j] * gv[i];
        } else {
          for (std::int64_t i = 0; i < d; ++i)
            for (std::int64_t j = 0; j < d; ++j) o[i * d + j] += gv[i] * vv[j];
        }
      }
      t.add_grad(pq, gq);
    }
  });
  return Var{q.tape, id};
}

Var gather_last(Var a, Tensor idx) {
  const int pa = a.id;
  Tensor value = t_gather_last(a.val(), idx);
  int id = a.tape->emit(std::move(value), {pa}, [pa, idx](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.mutable_grad(pa);
    const std::int64_t k = ga.shape().back();
    for (std::int64_t r = 0; r < g.size(); ++r)
      ga[r * k + static_cast<std::int64_t>(idx[r])] += g[r];
  });
  return Var{a.tape, id};
}

Var reshape(Var a, const Shape& shape) {
  const int pa = a.id;
  const Shape in_shape = a.shape();
  int id = a.tape->emit(a.val().reshaped(shape), {pa}, [pa, in_shape](Tape& t, int self) {
    t.add_grad(pa, t.grad_of(self).reshaped(in_shape));
  });
  return Var{a.tape, id};
}

Var broadcast_to(Var a, const Shape& shape) {
  const int pa = a.id;
  int id = a.tape->emit(t_broadcast_to(a.val(), shape), {pa}, [pa](Tape& t, int self) {
    t.add_grad(pa, t.grad_of(self));  // add_grad reduces to parent shape
  });
  return Var{a.tape, id};
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) fail("concat: empty");
  Tape& tape = *parts[0].tape;
  std::vector<const Tensor*> vals;
  std::vector<int> ids;
  std::vector<std::int64_t> lens;
  for (Var v : parts) {
    check_same_tape(parts[0], v);
    vals.push_back(&v.val());
    ids.push_back(v.id);
  }
  Tensor value = t_concat(vals, axis);
  const int ax = axis < 0 ? axis + value.rank() : axis;
  for (const Tensor* v : vals) lens.push_back(v->shape()[ax]);
  int id = tape.emit_multi(std::move(value), ids, [ids, lens, ax](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    std::int64_t off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.node_needs_grad(ids[i])) t.add_grad(ids[i], t_slice(g, ax, off, lens[i]));
      off += lens[i];
    }
  });
  return Var{&tape, id};
}

Var slice(Var a, int axis, std::int64_t start, std::int64_t len) {
  const int pa = a.id;
  const int ax = axis < 0 ? axis + a.shape().rank() : axis;
  int id = a.tape->emit(t_slice(a.val(), ax, start, len), {pa}, [pa, ax, start](Tape& t, int self) {
    accumulate_slice(t.mutable_grad(pa), t.grad_of(self), ax, start);
  });
  return Var{a.tape, id};
}

Var detach(Var a) { return a.tape->constant(a.val()); }

Var custom(Tape& tape, Tensor value, const std::vector<Var>& parents,
           std::function<std::vector<Tensor>(const Tensor&, const std::vector<Tensor>&)> backward) {
  std::vector<int> ids;
  for (Var v : parents) ids.push_back(v.id);
  int id = tape.emit_multi(std::move(value), ids, [ids, backward](Tape& t, int self) {
    std::vector<Tensor> pvals;
    for (int pid : ids) pvals.push_back(t.value_of(pid));
    std::vector<Tensor> grads = backward(t.grad_of(self), pvals);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (!grads[i].empty()) t.add_grad(ids[i], grads[i]);
  });
  return Var{&tape, id};
}

}  // namespace equiflow
