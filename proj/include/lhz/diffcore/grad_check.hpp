#pragma once

#include <functional>
#include <map>
#include <string>

#include "lhz/diffcore/params.hpp"

namespace lhz::diff {

using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckReport {
  std::map<std::string, double> max_rel_error;  // per parameter
  double worst = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  bool passed = false;
};

// Relative error used by the checker: |a - n| / max(|a|, |n|, 1e-3).
double gradient_rel_error(double analytic, double numeric);

// Compares analytic gradients of `build`'s scalar loss against central finite
// differences for every scalar in `params`. `build` must be deterministic.
// `grad_offset` is added to the analytic gradients (negative controls only).
GradCheckReport grad_check(const LossBuilder& build, ParamStore& params, double eps,
                           double tol, double grad_offset = 0.0);

}  // namespace lhz::diff
