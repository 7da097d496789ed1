#include "equiflow/gradcheck.hpp"

#include <cmath>

namespace equiflow {

GradCheckReport grad_check(ParamStore& store, std::vector<int> ids,
                           const std::function<Var(Tape&, ParamBinding&)>& build, double h) {
  if (ids.empty())
    for (int i = 0; i < store.count(); ++i) ids.push_back(i);

  std::vector<Tensor> analytic;
  {
    Tape tape;
    ParamBinding bind(tape, store, true);
    Var loss = build(tape, bind);
    tape.backward(loss);
    for (int id : ids) analytic.push_back(bind.grad_or_zero(id));
  }

  auto eval = [&]() {
    Tape tape;
    ParamBinding bind(tape, store, false);
    return build(tape, bind).item();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    Tensor& value = store.value(ids[k]);
    for (std::int64_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double fp = eval();
      value[i] = saved - h;
      const double fm = eval();
      value[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::fabs(analytic[k][i] - fd) / (std::fabs(fd) + 1e-8);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = store.name(ids[k]);
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace equiflow
