#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lhz/diffcore/layers.hpp"
#include "lhz/trajectory.hpp"

namespace lhz::seq {

using diff::Graph;
using diff::ParamStore;
using diff::Tensor;
using diff::Var;

inline constexpr double kLogStdMin = -8.0;
inline constexpr double kLogStdMax = 4.0;

struct ModelConfig {
  std::size_t obs_dim = 1;
  std::size_t action_dim = 1;
  ActionKind action_kind = ActionKind::kCategorical;
  std::size_t latent_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t backward_hidden_dim = 1;
  std::vector<std::size_t> decoder_hidden_dims;

  // Throws ContractError when any dimension is zero.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::string action_kind_name(ActionKind kind);
ActionKind parse_action_kind(const std::string& name);

struct ForwardState {
  Var h;
  Var c;
};

struct BackwardState {
  Var b;
  Var c;
};

// Graph-independent copy of a forward state, used to carry state between graphs.
struct ForwardStateValue {
  Tensor h;
  Tensor c;
  bool operator==(const ForwardStateValue&) const = default;
};

ForwardStateValue state_value(const ForwardState& s);
ForwardState bind_state(Graph& g, const ForwardStateValue& v);

struct DiagGaussian {
  Var mean;
  Var log_std;

  std::size_t dim() const { return mean.size(); }
  Var log_prob(Var x) const { return diff::gaussian_logpdf(x, mean, log_std); }
};

// Splits a head output of width 2·dim into mean and clamped log_std.
DiagGaussian split_gaussian(Var head_output);

enum class LatentSource { kPrior, kPosterior, kGiven };

struct LatentSample {
  Var z;
  Tensor epsilon;
  LatentSource source = LatentSource::kPrior;
};

// z = mean + exp(log_std) ⊙ epsilon, differentiable in mean and log_std.
LatentSample reparameterize(const DiagGaussian& dist, const Tensor& epsilon,
                            LatentSource source = LatentSource::kPosterior);

enum class SampleMode { kSample, kGreedy };

struct ActionDist {
  ActionKind kind = ActionKind::kCategorical;
  Var log_probs;          // categorical: normalized log-probabilities
  DiagGaussian gaussian;  // continuous

  Var log_prob(const Action& a) const;
  Action mode() const;
  Action sample(Rng& rng) const;
  Action choose(SampleMode mode, Rng& rng) const;
};

// Checks an action against the action space; throws DimensionError/DomainError.
void validate_action(const Action& a, ActionKind kind, std::size_t action_dim);

struct StepRecord {
  ForwardState h_prev;
  BackwardState b;
  DiagGaussian prior;
  DiagGaussian posterior;
  LatentSample z;
  DiagGaussian obs_dist;
  ActionDist act_dist;
  Var obs_loglik;
  Var act_loglik;
  // Shadow copies used by the auxiliary cost. Values equal z and b, but no
  // gradient path leads back to the backward encoder.
  Var z_aux;
  Var b_target;
};

struct PassOptions {
  // 0 disables chunking. Otherwise the backward encoder restarts every
  // chunk_length steps and the forward state is carried across the boundary
  // with its gradient cut.
  std::size_t chunk_length = 0;
  // Feed z = 0 everywhere (latent path disabled).
  bool zero_latents = false;
  // Use these latents instead of posterior samples.
  const std::vector<Tensor>* forced_latents = nullptr;
  // Build z_aux/b_target through a second forward chain whose posterior sees
  // detached backward states. Without it they alias z and detach(b).
  bool aux_chain = false;
  // Values substituted for the detached backward states on the aux chain.
  const std::vector<Tensor>* frozen_backward = nullptr;
};

struct GenerateOptions {
  SampleMode action_mode = SampleMode::kSample;
  SampleMode observation_mode = SampleMode::kSample;
  // When set, these replace prior samples; must hold at least T entries.
  const std::vector<Tensor>* latents = nullptr;
};

struct Rollout {
  Trajectory trajectory;  // o_0..o_T and a_0..a_{T-1}; rewards left empty
  std::vector<Tensor> latents;
  std::vector<Tensor> obs_means;
  ForwardStateValue final_state;
};

class SequenceModel {
 public:
  // Fresh parameters drawn from rng.
  SequenceModel(ModelConfig config, Rng& rng);
  // Adopts existing parameters; throws ContractError when names or shapes
  // do not match the config.
  SequenceModel(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Parameter names belonging to each block.
  std::vector<std::string> backward_param_names() const;
  std::vector<std::string> aux_param_names() const;

  Var observation(Graph& g, const Observation& o) const;
  Var embed_action(Graph& g, const Action& a) const;
  Var zero_latent(Graph& g) const;

  ForwardState zero_forward_state(Graph& g) const;
  // h_0: the zero state after absorbing o_0 with a zero latent.
  ForwardState initial_state(Graph& g, Var o0) const;
  ForwardState forward_transition(Graph& g, Var o, const ForwardState& prev, Var z) const;

  // b_1..b_T for o_1..o_T, computed right to left from a zero state.
  std::vector<BackwardState> backward_encode(Graph& g, const std::vector<Var>& observations) const;

  DiagGaussian prior(Graph& g, const ForwardState& h_prev) const;
  DiagGaussian posterior(Graph& g, const ForwardState& h_prev, const BackwardState& b) const;
  DiagGaussian decode_observation(Graph& g, Var action_embedding, const ForwardState& h_prev,
                                  Var z) const;
  ActionDist decode_action(Graph& g, const ForwardState& h_prev, Var z) const;
  // Unit-variance Gaussian over backward states.
  DiagGaussian aux_decode(Graph& g, Var z) const;

  std::vector<StepRecord> teacher_forced_pass(Graph& g, const Trajectory& traj, Rng& rng,
                                              const PassOptions& options = {}) const;

  Rollout generate(const Observation& o0, const ForwardStateValue& h0, std::size_t steps,
                   Rng& rng, const GenerateOptions& options = {}) const;

 private:
  void build_blocks();

  ModelConfig config_;
  ParamStore params_;
  diff::LstmCell fwd_;
  diff::LstmCell bwd_;
  diff::Mlp prior_;
  diff::Mlp post_;
  diff::Mlp obs_dec_;
  diff::Mlp act_dec_;
  diff::Mlp aux_dec_;
};

// Validates a trajectory's internal lengths and widths against a config.
void validate_trajectory(const Trajectory& traj, const ModelConfig& config);

}  // namespace lhz::seq
