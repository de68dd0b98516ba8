#pragma once

#include <string>
#include <vector>

#include "lhz/diffcore/ops.hpp"
#include "lhz/diffcore/params.hpp"
#include "lhz/diffcore/random.hpp"

namespace lhz::diff {

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
Tensor uniform_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct LstmState {
  Var h;
  Var c;
};

// Gated recurrent cell over [x; h_prev] with gate order input, forget,
// candidate, output. Parameters: <prefix>.w [in + hidden, 4 hidden], <prefix>.b.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
      : weight_name_(prefix + ".w"), bias_name_(prefix + ".b"), input_dim_(input_dim),
        hidden_dim_(hidden_dim) {}

  // Forget-gate bias starts at 1.
  void init(ParamStore& params, Rng& rng) const;
  LstmState step(Graph& g, const ParamStore& params, Var x, const LstmState& prev) const;
  LstmState zero_state(Graph& g) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const std::string& weight_name() const { return weight_name_; }
  const std::string& bias_name() const { return bias_name_; }

 private:
  std::string weight_name_;
  std::string bias_name_;
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
};

// Feed-forward head: tanh hidden layers then a linear output layer.
// Parameters: <prefix>.l<i>.{w,b}, <prefix>.out.{w,b}.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& prefix, std::size_t input_dim, std::vector<std::size_t> hidden,
      std::size_t output_dim);

  void init(ParamStore& params, Rng& rng) const;
  Var forward(Graph& g, const ParamStore& params, Var x) const;

  // Layer parameter names in forward order: weight, bias, weight, bias, ...
  const std::vector<std::string>& param_names() const { return names_; }
  const std::string& output_weight_name() const { return names_[names_.size() - 2]; }
  const std::string& output_bias_name() const { return names_.back(); }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }

 private:
  std::vector<std::string> names_;
  std::size_t input_dim_ = 0;
  std::vector<std::size_t> hidden_;
  std::size_t output_dim_ = 0;
};

}  // namespace lhz::diff
