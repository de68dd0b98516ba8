#include "lhz/pipeline/baselines.hpp"

#include "lhz/diffcore/errors.hpp"

namespace lhz::pipe {

using diff::Shape;
using diff::Tensor;

std::string kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kRecurrentPolicy:
      return "recurrent_policy";
    case BaselineKind::kRecurrentDecoder:
      return "recurrent_decoder";
    case BaselineKind::kFullModel:
      return "full_model";
  }
  return "full_model";
}

BaselineKind parse_kind(const std::string& name) {
  if (name == "recurrent_policy") return BaselineKind::kRecurrentPolicy;
  if (name == "recurrent_decoder") return BaselineKind::kRecurrentDecoder;
  if (name == "full_model") return BaselineKind::kFullModel;
  throw ContractError("unknown model kind: " + name);
}

RecurrentBaseline::RecurrentBaseline(const ModelConfig& config, bool predict_observation, Rng& rng)
    : config_(config), predict_observation_(predict_observation) {
  build_blocks();
  cell_.init(params_, rng);
  act_dec_.init(params_, rng);
  if (predict_observation_) obs_dec_.init(params_, rng);
}

RecurrentBaseline::RecurrentBaseline(const ModelConfig& config, bool predict_observation,
                                     ParamStore params)
    : config_(config), predict_observation_(predict_observation), params_(std::move(params)) {
  build_blocks();
  Rng rng = make_rng(0);
  RecurrentBaseline reference(config_, predict_observation_, rng);
  if (reference.params_.size() != params_.size()) {
    throw ContractError("parameter set does not match baseline config");
  }
  for (const auto& [name, p] : reference.params_) {
    if (!params_.contains(name) || params_.at(name).value.shape() != p.value.shape()) {
      throw ContractError("parameter " + name + " missing or misshapen for baseline config");
    }
  }
}

void RecurrentBaseline::build_blocks() {
  config_.validate();
  const auto& c = config_;
  const std::size_t act_out =
      c.action_kind == ActionKind::kCategorical ? c.action_dim : 2 * c.action_dim;
  cell_ = diff::LstmCell("fwd", c.obs_dim, c.hidden_dim);
  act_dec_ = diff::Mlp("act_dec", c.hidden_dim, c.decoder_hidden_dims, act_out);
  if (predict_observation_) {
    obs_dec_ = diff::Mlp("obs_dec", c.action_dim + c.hidden_dim, c.decoder_hidden_dims,
                         2 * c.obs_dim);
  }
}

namespace {

// Copies `src` without rows [skip_begin, skip_begin + skip_count).
Tensor drop_rows(const Tensor& src, std::size_t skip_begin, std::size_t skip_count) {
  const std::size_t rows = src.shape()[0], cols = src.shape()[1];
  Tensor out(Shape{rows - skip_count, cols});
  std::size_t r_out = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (r >= skip_begin && r < skip_begin + skip_count) continue;
    for (std::size_t c = 0; c < cols; ++c) out.at(r_out, c) = src.at(r, c);
    ++r_out;
  }
  return out;
}

}  // namespace

RecurrentBaseline RecurrentBaseline::from_full_model(const SequenceModel& model,
                                                     bool predict_observation) {
  const ModelConfig& c = model.config();
  const ParamStore& src = model.params();
  Rng rng = make_rng(0);
  RecurrentBaseline out(c, predict_observation, rng);
  for (auto& [name, p] : out.params_) {
    const Tensor& full = src.at(name).value;
    if (name == "fwd.w") {
      p.value = drop_rows(full, c.obs_dim, c.latent_dim);
    } else if (name == out.act_dec_.param_names()[0]) {
      p.value = drop_rows(full, c.hidden_dim, c.latent_dim);
    } else if (predict_observation && name == out.obs_dec_.param_names()[0]) {
      p.value = drop_rows(full, c.action_dim + c.hidden_dim, c.latent_dim);
    } else {
      p.value = full;
    }
  }
  return out;
}

seq::ForwardState RecurrentBaseline::initial_state(Graph& g, const Observation& o0) const {
  const auto zero = cell_.zero_state(g);
  return transition(g, o0, {zero.h, zero.c});
}

seq::ForwardState RecurrentBaseline::transition(Graph& g, const Observation& o,
                                                const seq::ForwardState& prev) const {
  if (o.size() != config_.obs_dim) {
    throw DimensionError("observation of width " + std::to_string(o.size()) + ", expected " +
                         std::to_string(config_.obs_dim));
  }
  const auto s = cell_.step(g, params_, g.constant(Tensor::vector(o)), {prev.h, prev.c});
  return {s.h, s.c};
}

seq::ActionDist RecurrentBaseline::decode_action(Graph& g, const seq::ForwardState& h) const {
  Var out = act_dec_.forward(g, params_, h.h);
  seq::ActionDist d;
  d.kind = config_.action_kind;
  if (d.kind == ActionKind::kCategorical) {
    d.log_probs = diff::log_softmax(out);
  } else {
    d.gaussian = seq::split_gaussian(out);
  }
  return d;
}

seq::DiagGaussian RecurrentBaseline::decode_observation(Graph& g, const Action& a,
                                                        const seq::ForwardState& h) const {
  if (!predict_observation_) throw ContractError("recurrent_policy has no observation head");
  seq::validate_action(a, config_.action_kind, config_.action_dim);
  Tensor embed(Shape{config_.action_dim});
  if (config_.action_kind == ActionKind::kCategorical) {
    embed[static_cast<std::size_t>(a[0])] = 1.0;
  } else {
    embed = Tensor::vector(a);
  }
  return seq::split_gaussian(
      obs_dec_.forward(g, params_, diff::concat({g.constant(std::move(embed)), h.h})));
}

obj::LossBreakdown RecurrentBaseline::loss(Graph& g, const Trajectory& traj) const {
  seq::validate_trajectory(traj, config_);
  seq::ForwardState h = initial_state(g, traj.observations[0]);
  Var obs_sum = g.scalar(0.0);
  Var act_sum = g.scalar(0.0);
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const Action& a = traj.actions[t];
    if (predict_observation_) {
      const Observation& next = traj.observations[t + 1];
      obs_sum = obs_sum + decode_observation(g, a, h).log_prob(g.constant(Tensor::vector(next)));
    }
    act_sum = act_sum + decode_action(g, h).log_prob(a);
    h = transition(g, traj.observations[t + 1], h);
  }
  obj::LossBreakdown out;
  out.obs_recon = obs_sum.item();
  out.act_recon = act_sum.item();
  out.total_var = -(obs_sum + act_sum);
  out.total = out.total_var.item();
  return out;
}

}  // namespace lhz::pipe
