#pragma once

#include <string>
#include <vector>

#include "equiflow/autodiff.hpp"
#include "equiflow/rng.hpp"
#include "equiflow/tensor.hpp"

namespace equiflow {

// Ordered, named collection of trainable tensors. Order is the canonical
// flattening used by the optimizer, gradient-norm computation and checkpoints.
class ParamStore {
 public:
  int add(const std::string& name, Tensor init);
  int count() const { return static_cast<int>(values_.size()); }
  const std::string& name(int id) const { return names_[id]; }
  Tensor& value(int id) { return values_[id]; }
  const Tensor& value(int id) const { return values_[id]; }
  int find(const std::string& name) const;  // -1 if absent
  std::int64_t total_size() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Per-tape view of a ParamStore: parameters become tape leaves on first use,
// so a forward pass only materializes what it touches.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable),
        node_ids_(store.count(), -1) {}

  Var operator[](int id) {
    if (node_ids_[id] < 0)
      node_ids_[id] = tape_->leaf(store_->value(id), trainable_).id;
    return Var{tape_, node_ids_[id]};
  }

  bool bound(int id) const { return node_ids_[id] >= 0; }
  Tensor grad_or_zero(int id) const;
  std::vector<Tensor> grads() const;  // store order, zeros for untouched
  double grad_norm() const;           // global L2, fixed summation order

 private:
  Tape* tape_;
  const ParamStore* store_;
  bool trainable_;
  std::vector<int> node_ids_;
};

// Truncated-normal init (std = 1/sqrt(fan_in), resampled beyond 2 std).
Tensor trunc_normal_init(Rng& rng, const Shape& shape, std::int64_t fan_in);

}  // namespace equiflow
