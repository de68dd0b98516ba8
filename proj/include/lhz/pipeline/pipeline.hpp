#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lhz/envs/environment.hpp"
#include "lhz/pipeline/baselines.hpp"

namespace lhz::pipe {

using env::Environment;
using seq::SampleMode;

struct Checkpoint {
  BaselineKind kind = BaselineKind::kFullModel;
  ModelConfig config;
  ParamStore params;
  std::map<std::string, std::string> meta;
};

// Text header of key=value lines, a "---" line, then the binary parameter block.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const SequenceModel& model);
Checkpoint make_checkpoint(const RecurrentBaseline& baseline);
// Throws ContractError when the checkpoint holds a different kind.
SequenceModel full_model(const Checkpoint& ckpt);
RecurrentBaseline recurrent_baseline(const Checkpoint& ckpt);

struct TrainConfig {
  ModelConfig model;  // obs/action dimensions must match the data
  obj::ObjectiveConfig objective;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

// Minibatch Adam over shuffled trajectories. The full model minimizes
// total_loss; baselines minimize their negative log-likelihood. When
// `metrics` is set, one CSV row per epoch holds the epoch-mean breakdown.
Checkpoint bc_train(const std::vector<Trajectory>& data, BaselineKind kind,
                    const TrainConfig& config, std::ostream* metrics = nullptr);

// Step-by-step controller driven by real observations.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin(const Observation& o0) = 0;
  virtual Action act(const Environment& env, Rng& rng) = 0;
  virtual void observe(const Action& a, const Observation& next) = 0;
};

// Full model: z_t is sampled from the sequential prior and the action is
// decoded from (h, z_t); the mode applies to the action only.
// Baselines: action from h.
std::unique_ptr<Agent> make_agent(const Checkpoint& ckpt, SampleMode mode = SampleMode::kGreedy);
std::unique_ptr<Agent> make_random_agent();
std::unique_ptr<Agent> make_expert_agent();

// Replays a history (o_0..o_t with a_0..a_{t-1}) through a fresh agent and
// returns its next action.
Action act_from_model(const Checkpoint& ckpt, const Trajectory& history, const Environment& env,
                      SampleMode mode, Rng& rng);

struct Episode {
  Trajectory trajectory;
  std::vector<std::uint32_t> events;
  double total_reward = 0.0;
  bool success = false;
};

Episode run_episode(Environment& env, Agent& agent, std::uint64_t env_seed, Rng& rng);

struct NllReport {
  std::optional<double> obs_nll;       // mean per trajectory
  std::optional<double> combined_nll;  // observations and actions
};

// Full model: importance-weighted bound with `samples` posterior draws.
// Recurrent decoder: exact. Recurrent policy: nothing is defined.
NllReport heldout_nll(const Checkpoint& ckpt, const std::vector<Trajectory>& data,
                      std::size_t samples, std::uint64_t seed);

struct EvalConfig {
  std::size_t episodes = 50;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::kGreedy;
  std::size_t nll_samples = 100;
};

struct EvalReport {
  std::string agent;
  std::vector<std::uint64_t> episode_seeds;
  std::vector<double> episode_rewards;
  double mean_reward = 0.0;
  std::optional<double> reward_stderr;  // only with two or more episodes
  double success_rate = 0.0;
  NllReport nll;
  std::vector<std::vector<double>> aux_traces;  // full model only
};

// Episode i uses environment seed episode_seed(config.seed, i).
EvalReport evaluate_agent(Environment& env, Agent& agent, const std::string& name,
                          const EvalConfig& config, std::vector<Episode>* episodes = nullptr);
EvalReport evaluate(const Checkpoint& ckpt, Environment& env,
                    const std::vector<Trajectory>& held_out, const EvalConfig& config);

// Mean and standard error over independent runs; stderr is absent below two.
struct Summary {
  double mean = 0.0;
  std::optional<double> standard_error;
};
Summary summarize(const std::vector<double>& values);

struct SubgoalTrace {
  Episode episode;
  std::vector<double> aux_cost;  // −log p_ζ(b_t | z_t) per step
  std::optional<std::size_t> key_pickup_step;
  std::optional<std::size_t> door_unlock_step;
};

// Per-step auxiliary cost of a trajectory under posterior latents.
std::vector<double> aux_cost_series(const SequenceModel& model, const Trajectory& traj,
                                    std::uint64_t noise_seed);

// Runs one full-model episode and scores it; throws ContractError for
// baseline checkpoints.
SubgoalTrace subgoal_trace(const Checkpoint& ckpt, Environment& env, std::uint64_t episode_seed,
                           std::uint64_t noise_seed, SampleMode mode = SampleMode::kGreedy);

}  // namespace lhz::pipe
