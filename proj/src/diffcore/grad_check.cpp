#include "lhz/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace lhz::diff {

double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossBuilder& build, ParamStore& params, double eps, double tol,
                           double grad_offset) {
  params.zero_grad();
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
    params.accumulate_grads(g);
  }
  auto evaluate = [&build]() {
    Graph g(false);
    return build(g).item();
  };

  GradCheckReport report;
  for (auto& [name, p] : params) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = evaluate();
      p.value[i] = saved - eps;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = gradient_rel_error(p.grad[i] + grad_offset, numeric);
      worst = std::max(worst, err);
      ++report.checked;
    }
    report.max_rel_error[name] = worst;
    if (worst >= report.worst) {
      report.worst = worst;
      report.worst_param = name;
    }
  }
  params.zero_grad();
  report.passed = report.worst < tol;
  return report;
}

}  // namespace lhz::diff
