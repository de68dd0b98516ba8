#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "lhz/diffcore/adam.hpp"
#include "lhz/envs/environment.hpp"
#include "lhz/objective/objective.hpp"
#include "lhz/planner/planner.hpp"

namespace lhz::explore {

using diff::Graph;
using diff::ParamStore;
using diff::Var;
using env::Environment;
using seq::SequenceModel;

// Bounded FIFO of trajectories; the oldest entry is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Trajectory traj);
  void push_all(const std::vector<Trajectory>& trajs);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  std::size_t total_inserted() const { return inserted_; }
  const Trajectory& at(std::size_t i) const { return items_.at(i); }
  const std::deque<Trajectory>& items() const { return items_; }

  // n uniform draws with replacement; throws ContractError when empty.
  std::vector<const Trajectory*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t inserted_ = 0;
  std::deque<Trajectory> items_;
};

struct PolicyConfig {
  std::size_t obs_dim = 1;
  std::size_t action_dim = 1;
  ActionKind action_kind = ActionKind::kCategorical;
  std::size_t hidden_dim = 32;

  void validate() const;
};

// Recurrent policy: an LSTM over observations and a linear action head.
// Parameters: pi.cell.{w,b}, pi.head.out.{w,b}.
class ExplorationPolicy {
 public:
  ExplorationPolicy(PolicyConfig config, Rng& rng);

  const PolicyConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  diff::LstmState initial_state(Graph& g) const;
  // Consumes o_t, advances `state` and returns the distribution over a_t.
  seq::ActionDist step(Graph& g, const Observation& o, diff::LstmState& state) const;

  struct Evaluation {
    std::vector<Var> log_probs;  // log π(a_t | o_{0:t})
    std::vector<Var> entropies;
  };
  Evaluation evaluate(Graph& g, const Trajectory& traj) const;

 private:
  PolicyConfig config_;
  ParamStore params_;
  diff::LstmCell cell_;
  diff::Mlp head_;
};

Var action_entropy(const seq::ActionDist& dist);

// Continuous samples are clipped to the action box before they are stored.
Action clip_action(Action a, ActionKind kind);

// The negative regularized ELBO of a trajectory: LossBreakdown::total under
// the current KL weight, evaluated without gradients. `eval_seed` fixes the
// posterior noise.
double exploration_reward(const Trajectory& traj, const SequenceModel& model,
                          const obj::ObjectiveConfig& config, std::uint64_t iteration,
                          std::uint64_t eval_seed);

struct ExplorationBatch {
  std::vector<Trajectory> trajectories;
  std::vector<std::size_t> start_indices;  // index into the recorded snapshots
  std::vector<std::string> start_snapshots;
  bool fell_back_to_reset = false;
};

// Each trajectory restores a uniformly chosen recorded state and then follows
// the policy with sampled actions until termination or `max_length` steps
// (0 means the environment's cap). Without usable snapshots every trajectory
// starts from a fresh reset and the batch is flagged.
ExplorationBatch collect_exploration(Environment& env, const ExplorationPolicy& policy,
                                     const std::vector<std::string>& start_states,
                                     std::size_t num_trajectories, std::size_t max_length,
                                     Rng& rng);

enum class BaselineMode { kMeanReward, kNone };

struct PpoConfig {
  double clip_ratio = 0.2;
  std::size_t epochs = 4;
  std::size_t minibatch_size = 4;
  double entropy_weight = 0.01;
  BaselineMode baseline = BaselineMode::kMeanReward;
  double learning_rate = 3e-4;

  void validate() const;
};

// A_i = reward_i − mean(rewards), or reward_i when the baseline is off.
std::vector<double> trajectory_advantages(const std::vector<double>& rewards,
                                          BaselineMode baseline);

// Negated clipped surrogate plus entropy bonus, averaged over every step of
// the given trajectories. Minimizing it is the policy update.
Var ppo_objective(Graph& g, const ExplorationPolicy& policy,
                  const std::vector<const Trajectory*>& trajs,
                  const std::vector<double>& advantages,
                  const std::vector<std::vector<double>>& old_log_probs, const PpoConfig& config);

struct PpoStats {
  std::vector<double> advantages;
  std::size_t minibatches = 0;
  double mean_objective = 0.0;
  double clip_fraction = 0.0;
};

// Throws ContractError on an empty batch or a reward count mismatch.
PpoStats ppo_update(ExplorationPolicy& policy, diff::AdamState& adam,
                    const std::vector<Trajectory>& trajectories, const std::vector<double>& rewards,
                    const PpoConfig& config, Rng& rng);

struct LoopConfig {
  std::size_t iterations = 1;
  std::size_t warmup_trajectories = 50;
  std::size_t warmup_model_steps = 100;
  std::size_t trajectories_per_iteration = 8;
  std::size_t buffer_capacity = 1000;
  std::size_t model_steps = 20;
  std::size_t batch_size = 8;
  double fresh_fraction = 0.5;
  std::size_t mpc_steps = 0;  // 0 means the environment's cap
  std::uint64_t seed = 0;
  plan::PlanConfig plan;
  PpoConfig ppo;
  obj::ObjectiveConfig objective;

  void validate() const;
};

struct LoopCounters {
  std::size_t mpc_episodes = 0;
  std::size_t exploration_batches = 0;
  std::size_t buffer_updates = 0;
  std::size_t ppo_updates = 0;
  std::size_t model_phases = 0;
  std::vector<std::string> order;  // step names in execution order
};

struct IterationMetrics {
  std::size_t iteration = 0;
  double mpc_return = 0.0;
  double mean_exploration_reward = 0.0;
  double model_loss = 0.0;
  std::size_t buffer_size = 0;
  bool fell_back_to_reset = false;
  std::uint64_t checksum_before_ppo = 0;
  std::uint64_t checksum_after_ppo = 0;
};

std::string loop_metrics_header();
std::string loop_metrics_row(const IterationMetrics& m);

struct LoopResult {
  std::vector<IterationMetrics> metrics;
  LoopCounters counters;
  ReplayBuffer buffer{1};
};

// Called after each iteration, e.g. to write metrics or checkpoints.
using IterationHook = std::function<void(const IterationMetrics&, const SequenceModel&)>;

LoopResult overall_loop(Environment& env, SequenceModel& model, ExplorationPolicy& policy,
                        const env::RewardFn& reward, const LoopConfig& config,
                        const IterationHook& hook = {});

}  // namespace lhz::explore
