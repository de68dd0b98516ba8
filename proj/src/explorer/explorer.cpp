#include "lhz/explorer/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lhz/diffcore/errors.hpp"
#include "lhz/format.hpp"

namespace lhz::explore {

using diff::Tensor;

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ContractError("replay buffer capacity must be at least 1");
}

void ReplayBuffer::push(Trajectory traj) {
  items_.push_back(std::move(traj));
  ++inserted_;
  while (items_.size() > capacity_) items_.pop_front();
}

void ReplayBuffer::push_all(const std::vector<Trajectory>& trajs) {
  for (const auto& t : trajs) push(t);
}

std::vector<const Trajectory*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw ContractError("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Trajectory*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[pick(rng)]);
  return out;
}

void PolicyConfig::validate() const {
  if (obs_dim == 0 || action_dim == 0 || hidden_dim == 0) {
    throw ContractError("policy dimensions must be positive");
  }
}

ExplorationPolicy::ExplorationPolicy(PolicyConfig config, Rng& rng) : config_(config) {
  config_.validate();
  cell_ = diff::LstmCell("pi.cell", config_.obs_dim, config_.hidden_dim);
  const std::size_t out = config_.action_kind == ActionKind::kCategorical
                              ? config_.action_dim
                              : 2 * config_.action_dim;
  head_ = diff::Mlp("pi.head", config_.hidden_dim, {}, out);
  cell_.init(params_, rng);
  head_.init(params_, rng);
}

diff::LstmState ExplorationPolicy::initial_state(Graph& g) const { return cell_.zero_state(g); }

seq::ActionDist ExplorationPolicy::step(Graph& g, const Observation& o,
                                        diff::LstmState& state) const {
  if (o.size() != config_.obs_dim) {
    throw DimensionError("policy observation of width " + std::to_string(o.size()) +
                         ", expected " + std::to_string(config_.obs_dim));
  }
  state = cell_.step(g, params_, g.constant(Tensor::vector(o)), state);
  Var out = head_.forward(g, params_, state.h);
  seq::ActionDist d;
  d.kind = config_.action_kind;
  if (d.kind == ActionKind::kCategorical) {
    d.log_probs = diff::log_softmax(out);
  } else {
    d.gaussian = seq::split_gaussian(out);
  }
  return d;
}

ExplorationPolicy::Evaluation ExplorationPolicy::evaluate(Graph& g, const Trajectory& traj) const {
  Evaluation ev;
  diff::LstmState state = initial_state(g);
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const seq::ActionDist d = step(g, traj.observations[t], state);
    ev.log_probs.push_back(d.log_prob(traj.actions[t]));
    ev.entropies.push_back(action_entropy(d));
  }
  return ev;
}

Var action_entropy(const seq::ActionDist& dist) {
  if (dist.kind == ActionKind::kCategorical) {
    return -diff::sum(diff::exp(dist.log_probs) * dist.log_probs);
  }
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return diff::add_scalar(diff::sum(dist.gaussian.log_std),
                          per_dim * static_cast<double>(dist.gaussian.dim()));
}

Action clip_action(Action a, ActionKind kind) {
  if (kind == ActionKind::kContinuous) {
    for (double& x : a) x = std::clamp(x, -1.0, 1.0);
  }
  return a;
}

double exploration_reward(const Trajectory& traj, const SequenceModel& model,
                          const obj::ObjectiveConfig& config, std::uint64_t iteration,
                          std::uint64_t eval_seed) {
  Graph g(false);
  Rng rng = make_rng(eval_seed, 0xe1b0);
  return obj::total_loss(g, model, traj, config, iteration, rng).total;
}

ExplorationBatch collect_exploration(Environment& env, const ExplorationPolicy& policy,
                                     const std::vector<std::string>& start_states,
                                     std::size_t num_trajectories, std::size_t max_length,
                                     Rng& rng) {
  ExplorationBatch batch;
  const bool restorable = env.supports_snapshot() && !start_states.empty();
  batch.fell_back_to_reset = num_trajectories > 0 && !restorable;
  const std::size_t cap = max_length == 0 ? env.max_steps() : max_length;
  for (std::size_t n = 0; n < num_trajectories; ++n) {
    Trajectory traj;
    if (restorable) {
      std::uniform_int_distribution<std::size_t> pick(0, start_states.size() - 1);
      const std::size_t idx = pick(rng);
      env.restore(start_states[idx]);
      batch.start_indices.push_back(idx);
      batch.start_snapshots.push_back(start_states[idx]);
      traj.observations.push_back(env.observation());
    } else {
      traj.observations.push_back(env.reset(rng()));
      batch.start_snapshots.push_back(env.supports_snapshot() ? env.snapshot() : std::string());
    }
    Graph g(false);
    diff::LstmState state = policy.initial_state(g);
    while (!env.done() && traj.actions.size() < cap) {
      const seq::ActionDist d = policy.step(g, traj.observations.back(), state);
      Action a = clip_action(d.sample(rng), policy.config().action_kind);
      const env::StepResult r = env.step(a);
      traj.actions.push_back(std::move(a));
      traj.observations.push_back(r.observation);
      traj.rewards.push_back(r.reward);
    }
    if (traj.actions.empty()) throw ContractError("exploration started from a finished episode");
    batch.trajectories.push_back(std::move(traj));
  }
  return batch;
}

void PpoConfig::validate() const {
  if (!(clip_ratio > 0.0)) throw ContractError("PPO clip ratio must be positive");
  if (minibatch_size < 1) throw ContractError("PPO minibatch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ContractError("PPO learning rate must be positive");
}

std::vector<double> trajectory_advantages(const std::vector<double>& rewards,
                                          BaselineMode baseline) {
  double b = 0.0;
  if (baseline == BaselineMode::kMeanReward && !rewards.empty()) {
    // Mean taken relative to the first reward so identical rewards give exactly zero.
    double offset = 0.0;
    for (double r : rewards) offset += r - rewards[0];
    b = rewards[0] + offset / static_cast<double>(rewards.size());
  }
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(r - b);
  return out;
}

Var ppo_objective(Graph& g, const ExplorationPolicy& policy,
                  const std::vector<const Trajectory*>& trajs,
                  const std::vector<double>& advantages,
                  const std::vector<std::vector<double>>& old_log_probs, const PpoConfig& config) {
  if (trajs.empty()) throw ContractError("PPO objective on an empty batch");
  std::vector<Var> terms;
  std::vector<Var> entropies;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto ev = policy.evaluate(g, *trajs[i]);
    for (std::size_t t = 0; t < ev.log_probs.size(); ++t) {
      Var ratio = diff::exp(diff::add_scalar(ev.log_probs[t], -old_log_probs[i][t]));
      Var clipped = diff::clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
      terms.push_back(diff::minimum(advantages[i] * ratio, advantages[i] * clipped));
      entropies.push_back(ev.entropies[t]);
    }
  }
  const double inv = 1.0 / static_cast<double>(terms.size());
  Var surrogate = inv * diff::sum(diff::concat(terms));
  Var entropy = inv * diff::sum(diff::concat(entropies));
  return -(surrogate + config.entropy_weight * entropy);
}

PpoStats ppo_update(ExplorationPolicy& policy, diff::AdamState& adam,
                    const std::vector<Trajectory>& trajectories, const std::vector<double>& rewards,
                    const PpoConfig& config, Rng& rng) {
  config.validate();
  if (trajectories.empty()) throw ContractError("PPO update on an empty batch");
  if (rewards.size() != trajectories.size()) {
    throw ContractError("PPO update needs one reward per trajectory");
  }
  adam.learning_rate = config.learning_rate;
  PpoStats stats;
  stats.advantages = trajectory_advantages(rewards, config.baseline);

  std::vector<std::vector<double>> old(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    Graph g(false);
    for (Var lp : policy.evaluate(g, trajectories[i]).log_probs) old[i].push_back(lp.item());
  }

  std::vector<std::size_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t clipped = 0, steps = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + config.minibatch_size);
      std::vector<const Trajectory*> trajs;
      std::vector<double> adv;
      std::vector<std::vector<double>> old_lp;
      for (std::size_t j = start; j < end; ++j) {
        trajs.push_back(&trajectories[order[j]]);
        adv.push_back(stats.advantages[order[j]]);
        old_lp.push_back(old[order[j]]);
      }
      Graph g;
      Var loss = ppo_objective(g, policy, trajs, adv, old_lp, config);
      g.backward(loss);
      policy.params().accumulate_grads(g);
      diff::adam_step(policy.params(), adam);
      stats.mean_objective += loss.item();
      ++stats.minibatches;
      if (epoch + 1 == config.epochs) {
        Graph probe(false);
        for (std::size_t j = 0; j < trajs.size(); ++j) {
          const auto ev = policy.evaluate(probe, *trajs[j]);
          for (std::size_t t = 0; t < ev.log_probs.size(); ++t) {
            const double r = std::exp(ev.log_probs[t].item() - old_lp[j][t]);
            if (std::abs(r - 1.0) > config.clip_ratio) ++clipped;
            ++steps;
          }
        }
      }
    }
  }
  if (stats.minibatches > 0) stats.mean_objective /= static_cast<double>(stats.minibatches);
  if (steps > 0) stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(steps);
  return stats;
}

void LoopConfig::validate() const {
  if (iterations < 1) throw ContractError("exploration loop needs at least one iteration");
  if (batch_size < 1) throw ContractError("model batch size must be at least 1");
  if (!(fresh_fraction >= 0.0 && fresh_fraction <= 1.0)) {
    throw ContractError("fresh_fraction must lie in [0, 1]");
  }
  plan.validate();
  ppo.validate();
  objective.validate();
}

std::string loop_metrics_header() {
  return "iteration,mpc_return,mean_exploration_reward,model_loss,buffer_size,fell_back_to_reset";
}

std::string loop_metrics_row(const IterationMetrics& m) {
  return std::to_string(m.iteration) + "," + format_double(m.mpc_return) + "," +
         format_double(m.mean_exploration_reward) + "," + format_double(m.model_loss) + "," +
         std::to_string(m.buffer_size) + "," + (m.fell_back_to_reset ? "1" : "0");
}

namespace {

double train_phase(obj::Trainer& trainer, const std::vector<Trajectory>& fresh,
                   const ReplayBuffer& buffer, std::size_t steps, std::size_t batch_size,
                   double fresh_fraction, Rng& rng) {
  double last = 0.0;
  const std::size_t n_fresh =
      fresh.empty() ? 0
                    : static_cast<std::size_t>(std::lround(fresh_fraction *
                                                           static_cast<double>(batch_size)));
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<const Trajectory*> batch;
    if (n_fresh > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, fresh.size() - 1);
      for (std::size_t i = 0; i < n_fresh; ++i) batch.push_back(&fresh[pick(rng)]);
    }
    for (const Trajectory* t : buffer.sample(batch_size - std::min(n_fresh, batch_size), rng)) {
      batch.push_back(t);
    }
    last = trainer.step(batch).total;
  }
  return last;
}

}  // namespace

LoopResult overall_loop(Environment& env, SequenceModel& model, ExplorationPolicy& policy,
                        const env::RewardFn& reward, const LoopConfig& config,
                        const IterationHook& hook) {
  config.validate();
  LoopResult result;
  result.buffer = ReplayBuffer(config.buffer_capacity);
  Rng rng = make_rng(config.seed, 0x100b);
  obj::Trainer trainer(model, config.objective, config.seed);
  diff::AdamState policy_adam;

  const auto warm = collect_exploration(env, policy, {}, config.warmup_trajectories, 0, rng);
  result.buffer.push_all(warm.trajectories);
  if (!result.buffer.empty()) {
    train_phase(trainer, {}, result.buffer, config.warmup_model_steps, config.batch_size, 0.0,
                rng);
  }

  const std::size_t T = config.mpc_steps == 0 ? env.max_steps() : config.mpc_steps;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    IterationMetrics m;
    m.iteration = it;
    auto& c = result.counters;

    env.reset(env::episode_seed(config.seed, it));
    const plan::MpcResult mpc = plan::mpc_episode(env, model, reward, config.plan, T, rng);
    m.mpc_return = std::accumulate(mpc.trajectory.rewards.begin(), mpc.trajectory.rewards.end(),
                                   0.0);
    ++c.mpc_episodes;
    c.order.push_back("mpc");

    const auto batch = collect_exploration(env, policy, mpc.snapshots,
                                           config.trajectories_per_iteration, 0, rng);
    m.fell_back_to_reset = batch.fell_back_to_reset;
    ++c.exploration_batches;
    c.order.push_back("explore");

    result.buffer.push_all(batch.trajectories);
    m.buffer_size = result.buffer.size();
    ++c.buffer_updates;
    c.order.push_back("buffer");

    const std::uint64_t eval_seed = env::episode_seed(config.seed ^ 0x5eed, it);
    std::vector<double> rewards;
    for (const auto& t : batch.trajectories) {
      rewards.push_back(
          exploration_reward(t, model, config.objective, trainer.iteration(), eval_seed));
    }
    if (!rewards.empty()) {
      m.mean_exploration_reward =
          std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
    }
    m.checksum_before_ppo = model.params().checksum();
    if (!batch.trajectories.empty()) {
      ppo_update(policy, policy_adam, batch.trajectories, rewards, config.ppo, rng);
    }
    m.checksum_after_ppo = model.params().checksum();
    ++c.ppo_updates;
    c.order.push_back("ppo");

    m.model_loss = train_phase(trainer, batch.trajectories, result.buffer, config.model_steps,
                               config.batch_size, config.fresh_fraction, rng);
    ++c.model_phases;
    c.order.push_back("model");

    result.metrics.push_back(m);
    if (hook) hook(m, model);
  }
  return result;
}

}  // namespace lhz::explore
