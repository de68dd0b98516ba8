#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lhz/diffcore/params.hpp"

namespace lhz::diff {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

// Bias-corrected Adam over all parameters in name order, then zeroes grads.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace lhz::diff
