#pragma once

#include <functional>
#include <vector>

#include "equiflow/tensor.hpp"

// Reverse-mode autodiff over whole tensors. A Tape owns a linear sequence of
// nodes; ops append nodes with a backward closure. Gradients of broadcasting
// ops are reduced back to the parent shape inside Tape::add_grad, so closures
// can hand back upstream-shaped gradients.

namespace equiflow {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr; }
  const Tensor& val() const;
  const Shape& shape() const;
  double item() const { return val().item(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  // Runs the reverse sweep from a scalar loss. With release_buffers, interior
  // values/gradients are freed as the sweep passes them; leaves and nodes
  // pinned via keep() survive.
  void backward(Var loss, bool release_buffers = true);

  bool has_grad(Var v) const;
  const Tensor& grad(Var v) const;  // throws if absent
  void keep(Var v) { nodes_[v.id].keep = true; }

  std::size_t num_nodes() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  // -- used by op implementations --
  int emit(Tensor value, std::initializer_list<int> parents, BackwardFn fn);
  int emit_multi(Tensor value, const std::vector<int>& parents, BackwardFn fn);
  bool node_needs_grad(int id) const { return nodes_[id].needs_grad; }
  const Tensor& value_of(int id) const { return nodes_[id].value; }
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }
  Tensor& mutable_grad(int id);       // allocates zeros on first use
  void add_grad(int id, const Tensor& g);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool needs_grad = false;
    bool is_leaf = false;
    bool keep = false;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise / broadcasting ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double s);
Var scale(Var a, double s);
Var neg(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator/(Var a, double s) { return scale(a, 1.0 / s); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(double s, Var a) { return add_scalar(a, s); }
inline Var operator-(double s, Var a) { return add_scalar(neg(a), s); }

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var sin(Var a);
Var cos(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var softplus(Var a);
Var abs(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
Var atan2(Var y, Var x);
Var wrap_angle(Var a);  // wraps into [-pi, pi); derivative 1 a.e.

// ---- reductions / structure ----
Var sum_all(Var a);            // -> shape {1}
Var mean_all(Var a);
Var sum_axis(Var a, int axis, bool keepdim);
Var mean_axis(Var a, int axis, bool keepdim);
Var cumsum_last(Var a);
Var logsumexp_last(Var a, bool keepdim);  // stable (max-shifted)
Var softmax_last(Var a);

Var matmul(Var a, Var w);                        // (..., m, k) x (k, n)
Var linear(Var x, Var w, Var b);                 // matmul + bias broadcast on last axis
Var apply_basis(Var q, Var p, bool transpose);   // (..., d, d) applied to (..., d)
Var gather_last(Var a, Tensor idx);
Var reshape(Var a, const Shape& shape);
Var broadcast_to(Var a, const Shape& shape);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var a, int axis, std::int64_t start, std::int64_t len);
Var detach(Var a);

// Custom node: value computed by caller, backward supplied as a closure
// receiving (upstream grad, parent values) and returning per-parent grads
// (empty Tensor to skip a parent).
Var custom(Tape& tape, Tensor value, const std::vector<Var>& parents,
           std::function<std::vector<Tensor>(const Tensor& upstream,
                                             const std::vector<Tensor>& parent_values)> backward);

}  // namespace equiflow
