#include "lhz/diffcore/adam.hpp"

#include <cmath>

namespace lhz::diff {

void adam_step(ParamStore& params, AdamState& state) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    auto [mit, m_new] = state.first_moment.try_emplace(name, Tensor::zeros_like(p.value));
    auto [vit, v_new] = state.second_moment.try_emplace(name, Tensor::zeros_like(p.value));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace lhz::diff
