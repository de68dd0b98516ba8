#include "lhz/diffcore/layers.hpp"

#include <cmath>

namespace lhz::diff {

Tensor uniform_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w(Shape{fan_in, fan_out});
  for (double& v : w.raw()) v = dist(rng);
  return w;
}

void LstmCell::init(ParamStore& params, Rng& rng) const {
  params.add(weight_name(), uniform_weight(input_dim_ + hidden_dim_, 4 * hidden_dim_, rng));
  Tensor b(Shape{4 * hidden_dim_});
  for (std::size_t i = hidden_dim_; i < 2 * hidden_dim_; ++i) b[i] = 1.0;
  params.add(bias_name(), std::move(b));
}

LstmState LstmCell::zero_state(Graph& g) const {
  return {g.constant(Tensor(Shape{hidden_dim_})), g.constant(Tensor(Shape{hidden_dim_}))};
}

LstmState LstmCell::step(Graph& g, const ParamStore& params, Var x, const LstmState& prev) const {
  const std::size_t h = hidden_dim_;
  Var gates = affine(concat({x, prev.h}), g.param(params.at(weight_name())),
                     g.param(params.at(bias_name())));
  Var input_gate = sigmoid(slice(gates, 0, h));
  Var forget_gate = sigmoid(slice(gates, h, h));
  Var candidate = tanh(slice(gates, 2 * h, h));
  Var output_gate = sigmoid(slice(gates, 3 * h, h));
  Var c = forget_gate * prev.c + input_gate * candidate;
  return {output_gate * tanh(c), c};
}

Mlp::Mlp(const std::string& prefix, std::size_t input_dim, std::vector<std::size_t> hidden,
         std::size_t output_dim)
    : input_dim_(input_dim), hidden_(std::move(hidden)), output_dim_(output_dim) {
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    names_.push_back(prefix + ".l" + std::to_string(i) + ".w");
    names_.push_back(prefix + ".l" + std::to_string(i) + ".b");
  }
  names_.push_back(prefix + ".out.w");
  names_.push_back(prefix + ".out.b");
}

void Mlp::init(ParamStore& params, Rng& rng) const {
  std::size_t in = input_dim_;
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    params.add(names_[2 * i], uniform_weight(in, hidden_[i], rng));
    params.add(names_[2 * i + 1], Tensor(Shape{hidden_[i]}));
    in = hidden_[i];
  }
  params.add(output_weight_name(), uniform_weight(in, output_dim_, rng));
  params.add(output_bias_name(), Tensor(Shape{output_dim_}));
}

Var Mlp::forward(Graph& g, const ParamStore& params, Var x) const {
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    x = tanh(affine(x, g.param(params.at(names_[2 * i])), g.param(params.at(names_[2 * i + 1]))));
  }
  return affine(x, g.param(params.at(output_weight_name())),
                g.param(params.at(output_bias_name())));
}

}  // namespace lhz::diff
