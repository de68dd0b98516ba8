#include "lhz/seqmodel/model.hpp"

#include <algorithm>
#include <cmath>

#include "lhz/diffcore/errors.hpp"

namespace lhz::seq {

using diff::Shape;

void ModelConfig::validate() const {
  if (obs_dim == 0 || action_dim == 0 || latent_dim == 0 || hidden_dim == 0 ||
      backward_hidden_dim == 0) {
    throw ContractError("model dimensions must all be at least 1");
  }
  for (std::size_t d : decoder_hidden_dims) {
    if (d == 0) throw ContractError("decoder hidden widths must be at least 1");
  }
}

std::string action_kind_name(ActionKind kind) {
  return kind == ActionKind::kCategorical ? "categorical" : "continuous";
}

ActionKind parse_action_kind(const std::string& name) {
  if (name == "categorical") return ActionKind::kCategorical;
  if (name == "continuous") return ActionKind::kContinuous;
  throw ContractError("unknown action kind: " + name);
}

ForwardStateValue state_value(const ForwardState& s) { return {s.h.value(), s.c.value()}; }

ForwardState bind_state(Graph& g, const ForwardStateValue& v) {
  return {g.constant(v.h), g.constant(v.c)};
}

DiagGaussian split_gaussian(Var head_output) {
  const std::size_t n = head_output.size();
  if (n % 2 != 0) {
    throw DimensionError("gaussian head width must be even, got " + std::to_string(n));
  }
  return {diff::slice(head_output, 0, n / 2),
          diff::clamp(diff::slice(head_output, n / 2, n / 2), kLogStdMin, kLogStdMax)};
}

LatentSample reparameterize(const DiagGaussian& dist, const Tensor& epsilon,
                            LatentSource source) {
  if (epsilon.size() != dist.dim()) {
    throw DimensionError("epsilon of length " + std::to_string(epsilon.size()) +
                         " for a distribution of dimension " + std::to_string(dist.dim()));
  }
  Graph& g = *dist.mean.graph;
  Var z = dist.mean + diff::exp(dist.log_std) * g.constant(epsilon);
  return {z, epsilon, source};
}

void validate_action(const Action& a, ActionKind kind, std::size_t action_dim) {
  if (kind == ActionKind::kCategorical) {
    if (a.size() != 1) {
      throw DimensionError("categorical action must hold one index, got " +
                           std::to_string(a.size()) + " values");
    }
    const double idx = a[0];
    if (!(idx >= 0.0) || idx >= static_cast<double>(action_dim) || idx != std::floor(idx)) {
      throw DomainError("categorical action index out of range: " + std::to_string(idx));
    }
  } else if (a.size() != action_dim) {
    throw DimensionError("continuous action of width " + std::to_string(a.size()) +
                         ", expected " + std::to_string(action_dim));
  }
}

Var ActionDist::log_prob(const Action& a) const {
  if (kind == ActionKind::kCategorical) {
    validate_action(a, kind, log_probs.size());
    return diff::pick(log_probs, static_cast<std::size_t>(a[0]));
  }
  validate_action(a, kind, gaussian.dim());
  return gaussian.log_prob(gaussian.mean.graph->constant(Tensor::vector(a)));
}

Action ActionDist::mode() const {
  if (kind == ActionKind::kCategorical) {
    const auto v = log_probs.value().values();
    return {static_cast<double>(std::max_element(v.begin(), v.end()) - v.begin())};
  }
  return gaussian.mean.value().raw();
}

Action ActionDist::sample(Rng& rng) const {
  if (kind == ActionKind::kCategorical) {
    const auto v = log_probs.value().values();
    double u = uniform01(rng);
    for (std::size_t i = 0; i < v.size(); ++i) {
      u -= std::exp(v[i]);
      if (u < 0.0) return {static_cast<double>(i)};
    }
    return {static_cast<double>(v.size() - 1)};
  }
  const Tensor eps = standard_normal(gaussian.dim(), rng);
  Action a(gaussian.dim());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = gaussian.mean.value()[i] + std::exp(gaussian.log_std.value()[i]) * eps[i];
  }
  return a;
}

Action ActionDist::choose(SampleMode m, Rng& rng) const {
  return m == SampleMode::kGreedy ? mode() : sample(rng);
}

void validate_trajectory(const Trajectory& traj, const ModelConfig& config) {
  const std::size_t T = traj.actions.size();
  if (T == 0) throw ContractError("trajectory must contain at least one step");
  if (traj.observations.size() != T + 1) {
    throw DimensionError("trajectory has " + std::to_string(traj.observations.size()) +
                         " observations for " + std::to_string(T) + " actions");
  }
  for (const auto& o : traj.observations) {
    if (o.size() != config.obs_dim) {
      throw DimensionError("observation of width " + std::to_string(o.size()) + ", expected " +
                           std::to_string(config.obs_dim));
    }
  }
  for (const auto& a : traj.actions) validate_action(a, config.action_kind, config.action_dim);
}

SequenceModel::SequenceModel(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  build_blocks();
  fwd_.init(params_, rng);
  bwd_.init(params_, rng);
  prior_.init(params_, rng);
  post_.init(params_, rng);
  obs_dec_.init(params_, rng);
  act_dec_.init(params_, rng);
  aux_dec_.init(params_, rng);
}

SequenceModel::SequenceModel(ModelConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  build_blocks();
  Rng rng = make_rng(0);
  SequenceModel reference(config_, rng);
  if (reference.params_.size() != params_.size()) {
    throw ContractError("parameter set does not match model config");
  }
  for (const auto& [name, p] : reference.params_) {
    if (!params_.contains(name) || params_.at(name).value.shape() != p.value.shape()) {
      throw ContractError("parameter " + name + " missing or misshapen for model config");
    }
  }
}

void SequenceModel::build_blocks() {
  config_.validate();
  const auto& c = config_;
  const auto& dec = c.decoder_hidden_dims;
  const std::size_t act_out =
      c.action_kind == ActionKind::kCategorical ? c.action_dim : 2 * c.action_dim;
  fwd_ = diff::LstmCell("fwd", c.obs_dim + c.latent_dim, c.hidden_dim);
  bwd_ = diff::LstmCell("bwd", c.obs_dim, c.backward_hidden_dim);
  prior_ = diff::Mlp("prior", c.hidden_dim, dec, 2 * c.latent_dim);
  post_ = diff::Mlp("post", c.hidden_dim + c.backward_hidden_dim, dec, 2 * c.latent_dim);
  obs_dec_ =
      diff::Mlp("obs_dec", c.action_dim + c.hidden_dim + c.latent_dim, dec, 2 * c.obs_dim);
  act_dec_ = diff::Mlp("act_dec", c.hidden_dim + c.latent_dim, dec, act_out);
  aux_dec_ = diff::Mlp("aux_dec", c.latent_dim, dec, c.backward_hidden_dim);
}

std::vector<std::string> SequenceModel::backward_param_names() const {
  return {bwd_.weight_name(), bwd_.bias_name()};
}

std::vector<std::string> SequenceModel::aux_param_names() const {
  return aux_dec_.param_names();
}

Var SequenceModel::observation(Graph& g, const Observation& o) const {
  if (o.size() != config_.obs_dim) {
    throw DimensionError("observation of width " + std::to_string(o.size()) + ", expected " +
                         std::to_string(config_.obs_dim));
  }
  return g.constant(Tensor::vector(o));
}

Var SequenceModel::embed_action(Graph& g, const Action& a) const {
  validate_action(a, config_.action_kind, config_.action_dim);
  if (config_.action_kind == ActionKind::kCategorical) {
    Tensor one_hot(Shape{config_.action_dim});
    one_hot[static_cast<std::size_t>(a[0])] = 1.0;
    return g.constant(std::move(one_hot));
  }
  return g.constant(Tensor::vector(a));
}

Var SequenceModel::zero_latent(Graph& g) const {
  return g.constant(Tensor(Shape{config_.latent_dim}));
}

ForwardState SequenceModel::zero_forward_state(Graph& g) const {
  const auto s = fwd_.zero_state(g);
  return {s.h, s.c};
}

ForwardState SequenceModel::initial_state(Graph& g, Var o0) const {
  return forward_transition(g, o0, zero_forward_state(g), zero_latent(g));
}

ForwardState SequenceModel::forward_transition(Graph& g, Var o, const ForwardState& prev,
                                               Var z) const {
  if (o.size() != config_.obs_dim || z.size() != config_.latent_dim ||
      prev.h.size() != config_.hidden_dim) {
    throw DimensionError("forward transition got observation " + std::to_string(o.size()) +
                         ", latent " + std::to_string(z.size()) + ", state " +
                         std::to_string(prev.h.size()));
  }
  const auto s = fwd_.step(g, params_, diff::concat({o, z}), {prev.h, prev.c});
  return {s.h, s.c};
}

std::vector<BackwardState> SequenceModel::backward_encode(
    Graph& g, const std::vector<Var>& observations) const {
  if (observations.empty()) throw ContractError("backward_encode needs at least one observation");
  std::vector<BackwardState> out(observations.size());
  diff::LstmState s = bwd_.zero_state(g);
  for (std::size_t i = observations.size(); i-- > 0;) {
    if (observations[i].size() != config_.obs_dim) {
      throw DimensionError("observation of width " + std::to_string(observations[i].size()) +
                           ", expected " + std::to_string(config_.obs_dim));
    }
    s = bwd_.step(g, params_, observations[i], s);
    out[i] = {s.h, s.c};
  }
  return out;
}

DiagGaussian SequenceModel::prior(Graph& g, const ForwardState& h_prev) const {
  return split_gaussian(prior_.forward(g, params_, h_prev.h));
}

DiagGaussian SequenceModel::posterior(Graph& g, const ForwardState& h_prev,
                                      const BackwardState& b) const {
  return split_gaussian(post_.forward(g, params_, diff::concat({h_prev.h, b.b})));
}

DiagGaussian SequenceModel::decode_observation(Graph& g, Var action_embedding,
                                               const ForwardState& h_prev, Var z) const {
  return split_gaussian(obs_dec_.forward(g, params_, diff::concat({action_embedding, h_prev.h, z})));
}

ActionDist SequenceModel::decode_action(Graph& g, const ForwardState& h_prev, Var z) const {
  Var out = act_dec_.forward(g, params_, diff::concat({h_prev.h, z}));
  ActionDist d;
  d.kind = config_.action_kind;
  if (d.kind == ActionKind::kCategorical) {
    d.log_probs = diff::log_softmax(out);
  } else {
    d.gaussian = split_gaussian(out);
  }
  return d;
}

DiagGaussian SequenceModel::aux_decode(Graph& g, Var z) const {
  return {aux_dec_.forward(g, params_, z), g.constant(Tensor(Shape{config_.backward_hidden_dim}))};
}

std::vector<StepRecord> SequenceModel::teacher_forced_pass(Graph& g, const Trajectory& traj,
                                                           Rng& rng,
                                                           const PassOptions& options) const {
  validate_trajectory(traj, config_);
  const std::size_t T = traj.length();
  if (options.forced_latents != nullptr && options.forced_latents->size() < T) {
    throw DimensionError("forced latents shorter than the trajectory");
  }
  if (options.frozen_backward != nullptr && options.frozen_backward->size() < T) {
    throw DimensionError("frozen backward states shorter than the trajectory");
  }
  const bool shadow =
      options.aux_chain && (g.recording() || options.frozen_backward != nullptr);
  std::vector<Var> obs;
  obs.reserve(T + 1);
  for (const auto& o : traj.observations) obs.push_back(g.constant(Tensor::vector(o)));

  const std::size_t chunk = options.chunk_length == 0 ? T : options.chunk_length;
  std::vector<StepRecord> records;
  records.reserve(T);
  ForwardState h = initial_state(g, obs[0]);
  ForwardState h_aux = h;
  for (std::size_t start = 1; start <= T; start += chunk) {
    const std::size_t end = std::min(T, start + chunk - 1);
    if (start > 1) {
      h = {diff::detach(h.h), diff::detach(h.c)};
      h_aux = h;
    }
    const auto bs = backward_encode(
        g, std::vector<Var>(obs.begin() + static_cast<std::ptrdiff_t>(start),
                            obs.begin() + static_cast<std::ptrdiff_t>(end + 1)));
    for (std::size_t t = start; t <= end; ++t) {
      StepRecord r;
      r.h_prev = h;
      r.b = bs[t - start];
      r.prior = prior(g, h);
      r.posterior = posterior(g, h, r.b);
      if (options.forced_latents != nullptr) {
        r.z = {g.constant((*options.forced_latents)[t - 1]), Tensor(), LatentSource::kGiven};
      } else if (options.zero_latents) {
        r.z = {zero_latent(g), Tensor(Shape{config_.latent_dim}), LatentSource::kGiven};
      } else {
        r.z = reparameterize(r.posterior, standard_normal(config_.latent_dim, rng),
                             LatentSource::kPosterior);
      }
      const Action& a = traj.actions[t - 1];
      r.obs_dist = decode_observation(g, embed_action(g, a), h, r.z.z);
      r.act_dist = decode_action(g, h, r.z.z);
      r.obs_loglik = r.obs_dist.log_prob(obs[t]);
      r.act_loglik = r.act_dist.log_prob(a);
      r.b_target = options.frozen_backward != nullptr
                       ? g.constant((*options.frozen_backward)[t - 1])
                       : diff::detach(r.b.b);
      if (shadow) {
        r.z_aux = r.z.source == LatentSource::kPosterior
                      ? reparameterize(posterior(g, h_aux, {r.b_target, r.b.c}), r.z.epsilon).z
                      : r.z.z;
        h_aux = forward_transition(g, obs[t], h_aux, r.z_aux);
      } else {
        r.z_aux = r.z.z;
      }
      h = forward_transition(g, obs[t], h, r.z.z);
      records.push_back(std::move(r));
    }
  }
  return records;
}

Rollout SequenceModel::generate(const Observation& o0, const ForwardStateValue& h0,
                                std::size_t steps, Rng& rng,
                                const GenerateOptions& options) const {
  if (steps < 1) throw ContractError("generate needs at least one step");
  if (options.latents != nullptr && options.latents->size() < steps) {
    throw DimensionError("pre-specified latents shorter than the requested length");
  }
  Graph g(false);
  ForwardState h = bind_state(g, h0);
  Rollout out;
  out.trajectory.observations.push_back(o0);
  (void)observation(g, o0);  // width check
  for (std::size_t t = 1; t <= steps; ++t) {
    LatentSample z;
    if (options.latents != nullptr) {
      const Tensor& given = (*options.latents)[t - 1];
      if (given.size() != config_.latent_dim) {
        throw DimensionError("pre-specified latent of width " + std::to_string(given.size()));
      }
      z = {g.constant(given), Tensor(), LatentSource::kGiven};
    } else {
      z = reparameterize(prior(g, h), standard_normal(config_.latent_dim, rng),
                         LatentSource::kPrior);
    }
    const Action a = decode_action(g, h, z.z).choose(options.action_mode, rng);
    const DiagGaussian od = decode_observation(g, embed_action(g, a), h, z.z);
    Observation o = od.mean.value().raw();
    if (options.observation_mode == SampleMode::kSample) {
      const Tensor eps = standard_normal(config_.obs_dim, rng);
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += std::exp(od.log_std.value()[i]) * eps[i];
    }
    out.latents.push_back(z.z.value());
    out.obs_means.push_back(od.mean.value());
    h = forward_transition(g, g.constant(Tensor::vector(o)), h, z.z);
    out.trajectory.actions.push_back(a);
    out.trajectory.observations.push_back(std::move(o));
  }
  out.final_state = state_value(h);
  return out;
}

}  // namespace lhz::seq
