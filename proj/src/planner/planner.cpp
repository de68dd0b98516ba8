#include "lhz/planner/planner.hpp"

#include "lhz/diffcore/errors.hpp"

namespace lhz::plan {

using diff::Graph;

void PlanConfig::validate() const {
  if (m < 1) throw ContractError("planner needs at least one candidate");
  if (k < 1 || k > effective_horizon()) {
    throw ContractError("planner needs 1 <= k <= horizon, got k=" + std::to_string(k) +
                        " horizon=" + std::to_string(effective_horizon()));
  }
}

std::vector<Candidate> sample_candidates(const SequenceModel& model, const Observation& o_start,
                                         const ForwardStateValue& h_start,
                                         const PlanConfig& config, const RewardFn& reward,
                                         Rng& rng) {
  config.validate();
  const std::size_t T = config.effective_horizon();
  const std::uint64_t base = rng();
  std::vector<Candidate> out;
  out.reserve(config.m);
  for (std::size_t i = 0; i < config.m; ++i) {
    Rng local = make_rng(base, i);
    seq::Rollout roll = model.generate(o_start, h_start, T, local);
    Candidate c;
    c.latents = std::move(roll.latents);
    c.actions = std::move(roll.trajectory.actions);
    c.observations.assign(roll.trajectory.observations.begin() + 1,
                          roll.trajectory.observations.end());
    for (std::size_t t = 0; t < T; ++t) {
      c.mean_observations.push_back(roll.obs_means[t].raw());
      c.cumulative_reward += reward(c.mean_observations[t], c.actions[t], t);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::size_t select_best(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw ContractError("select_best on an empty candidate list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].cumulative_reward > candidates[best].cumulative_reward) best = i;
  }
  return best;
}

SegmentResult execute_segment(Environment& env, const SequenceModel& model,
                              const Candidate& best, std::size_t k,
                              const ForwardStateValue& h_start, const Observation& o_start,
                              SampleMode action_mode, Rng& rng, ExecutionTrace* trace) {
  if (k > best.latents.size()) {
    throw ContractError("segment of " + std::to_string(k) + " steps exceeds a plan of " +
                        std::to_string(best.latents.size()));
  }
  SegmentResult out;
  out.final_state = h_start;
  out.final_observation = o_start;
  for (std::size_t i = 0; i < k; ++i) {
    if (env.done()) {
      out.terminated = true;
      break;
    }
    if (env.supports_snapshot()) out.snapshots.push_back(env.snapshot());
    Graph g(false);
    const seq::ForwardState h = seq::bind_state(g, out.final_state);
    const diff::Var z = g.constant(best.latents[i]);
    Action a = model.decode_action(g, h, z).choose(action_mode, rng);
    if (trace != nullptr) trace->latent_indices.push_back(i);
    const env::StepResult r = env.step(a);
    const seq::ForwardState next =
        model.forward_transition(g, model.observation(g, r.observation), h, z);
    if (trace != nullptr) trace->transition_inputs.push_back(r.observation);
    out.final_state = seq::state_value(next);
    out.final_observation = r.observation;
    out.actions.push_back(std::move(a));
    out.observations.push_back(r.observation);
    out.rewards.push_back(r.reward);
    out.events.push_back(r.events);
    if (r.done) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

MpcResult mpc_episode(Environment& env, const SequenceModel& model, const RewardFn& reward,
                      const PlanConfig& config, std::size_t T, Rng& rng) {
  if (T < 1) throw ContractError("mpc_episode needs at least one step");
  config.validate();
  MpcResult out;
  Observation o = env.observation();
  ForwardStateValue h;
  {
    Graph g(false);
    h = seq::state_value(model.initial_state(g, model.observation(g, o)));
  }
  out.trajectory.observations.push_back(o);
  std::size_t steps = 0;
  while (steps < T && !env.done()) {
    const auto candidates = sample_candidates(model, o, h, config, reward, rng);
    const Candidate& best = candidates[select_best(candidates)];
    ++out.replans;
    out.planned_rewards.push_back(best.cumulative_reward);
    const std::size_t k = std::min(config.k, T - steps);
    SegmentResult seg = execute_segment(env, model, best, k, h, o, config.action_mode, rng);
    steps += seg.actions.size();
    for (std::size_t i = 0; i < seg.actions.size(); ++i) {
      out.trajectory.actions.push_back(std::move(seg.actions[i]));
      out.trajectory.observations.push_back(std::move(seg.observations[i]));
      out.trajectory.rewards.push_back(seg.rewards[i]);
    }
    for (auto& s : seg.snapshots) out.snapshots.push_back(std::move(s));
    h = seg.final_state;
    o = seg.final_observation;
    if (seg.terminated) break;
  }
  return out;
}

}  // namespace lhz::plan
