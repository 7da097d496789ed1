#include "equiflow/params.hpp"

#include <cmath>
#include <stdexcept>

namespace equiflow {

int ParamStore::add(const std::string& name, Tensor init) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter: " + name);
  names_.push_back(name);
  values_.push_back(std::move(init));
  return static_cast<int>(values_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

Tensor ParamBinding::grad_or_zero(int id) const {
  if (node_ids_[id] >= 0) {
    Var v{tape_, node_ids_[id]};
    if (tape_->has_grad(v)) return tape_->grad(v);
  }
  return Tensor::zeros(store_->value(id).shape());
}

std::vector<Tensor> ParamBinding::grads() const {
  std::vector<Tensor> out;
  out.reserve(store_->count());
  for (int id = 0; id < store_->count(); ++id) out.push_back(grad_or_zero(id));
  return out;
}

double ParamBinding::grad_norm() const {
  double acc = 0.0;
  for (int id = 0; id < store_->count(); ++id) {
    if (node_ids_[id] < 0) continue;
    Var v{tape_, node_ids_[id]};
    if (!tape_->has_grad(v)) continue;
    const Tensor& g = tape_->grad(v);
    for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i] * g[i];
  }
  return std::sqrt(acc);
}

Tensor trunc_normal_init(Rng& rng, const Shape& shape, std::int64_t fan_in) {
  const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    double v;
    do {
      v = rng.normal();
    } while (std::fabs(v) > 2.0);
    t[i] = std * v;
  }
  return t;
}

}  // namespace equiflow
