#pragma once

#include <string>

#include "lhz/objective/objective.hpp"

namespace lhz::pipe {

using diff::Graph;
using diff::ParamStore;
using diff::Var;
using seq::ModelConfig;
using seq::SequenceModel;

enum class BaselineKind { kRecurrentPolicy, kRecurrentDecoder, kFullModel };

std::string kind_name(BaselineKind kind);
// Accepts recurrent_policy, recurrent_decoder and full_model.
BaselineKind parse_kind(const std::string& name);

// Latent-free recurrent model. h_t comes from an LSTM over o_0..o_t and the
// action head reads h_t. The decoder variant also predicts o_{t+1} from
// [a_t; h_t] with a diagonal Gaussian head. Parameter names and layouts
// match SequenceModel with the latent rows removed.
class RecurrentBaseline {
 public:
  // Uses obs/action dimensions, action kind, hidden_dim and decoder_hidden_dims.
  RecurrentBaseline(const ModelConfig& config, bool predict_observation, Rng& rng);
  RecurrentBaseline(const ModelConfig& config, bool predict_observation, ParamStore params);

  // Copies a full model's weights, dropping the rows that read z.
  static RecurrentBaseline from_full_model(const SequenceModel& model, bool predict_observation);

  const ModelConfig& config() const { return config_; }
  bool predicts_observation() const { return predict_observation_; }
  BaselineKind kind() const {
    return predict_observation_ ? BaselineKind::kRecurrentDecoder : BaselineKind::kRecurrentPolicy;
  }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  seq::ForwardState initial_state(Graph& g, const Observation& o0) const;
  seq::ForwardState transition(Graph& g, const Observation& o, const seq::ForwardState& prev) const;
  seq::ActionDist decode_action(Graph& g, const seq::ForwardState& h) const;
  seq::DiagGaussian decode_observation(Graph& g, const Action& a, const seq::ForwardState& h) const;

  // Negative log-likelihood of the trajectory's actions, plus its
  // observations o_1..o_T for the decoder variant. KL and aux terms are zero.
  obj::LossBreakdown loss(Graph& g, const Trajectory& traj) const;

 private:
  void build_blocks();

  ModelConfig config_;
  bool predict_observation_;
  ParamStore params_;
  diff::LstmCell cell_;
  diff::Mlp act_dec_;
  diff::Mlp obs_dec_;
};

}  // namespace lhz::pipe
