#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lhz/envs/environment.hpp"
#include "lhz/seqmodel/model.hpp"

namespace lhz::plan {

using diff::Tensor;
using env::Environment;
using env::RewardFn;
using seq::ForwardStateValue;
using seq::SampleMode;
using seq::SequenceModel;

struct PlanConfig {
  std::size_t m = 2048;
  std::size_t horizon = 0;  // 0 means 2k
  std::size_t k = 19;
  SampleMode action_mode = SampleMode::kGreedy;

  std::size_t effective_horizon() const { return horizon == 0 ? 2 * k : horizon; }
  // Throws ContractError unless m >= 1 and 1 <= k <= horizon.
  void validate() const;
};

struct Candidate {
  std::vector<Tensor> latents;
  std::vector<Observation> observations;       // imagined o_1..o_T as fed forward
  std::vector<Observation> mean_observations;  // decoder means, used for scoring
  std::vector<Action> actions;
  double cumulative_reward = 0.0;
};

// m independent rollouts from the sequential prior starting at
// (o_start, h_start), each scored on its decoder mean observations.
std::vector<Candidate> sample_candidates(const SequenceModel& model, const Observation& o_start,
                                         const ForwardStateValue& h_start,
                                         const PlanConfig& config, const RewardFn& reward,
                                         Rng& rng);

// Index of the highest cumulative reward; the first wins ties.
std::size_t select_best(const std::vector<Candidate>& candidates);

// Records what execute_segment fed into the model.
struct ExecutionTrace {
  std::vector<std::size_t> latent_indices;
  std::vector<Observation> transition_inputs;
};

struct SegmentResult {
  std::vector<Action> actions;
  std::vector<Observation> observations;  // real observations after each action
  std::vector<double> rewards;
  std::vector<std::uint32_t> events;
  std::vector<std::string> snapshots;  // environment state before each action
  ForwardStateValue final_state;
  Observation final_observation;
  bool terminated = false;
};

// Runs up to k real steps: each action is decoded from the real forward state
// and the plan's saved latent, and the real observation updates the state.
SegmentResult execute_segment(Environment& env, const SequenceModel& model,
                              const Candidate& best, std::size_t k,
                              const ForwardStateValue& h_start, const Observation& o_start,
                              SampleMode action_mode, Rng& rng, ExecutionTrace* trace = nullptr);

struct MpcResult {
  Trajectory trajectory;
  std::size_t replans = 0;
  std::vector<std::string> snapshots;  // one per visited state s_0..s_{T-1}
  std::vector<double> planned_rewards;  // imagined reward of each selected plan
};

// Plans from the environment's current observation for up to T steps.
MpcResult mpc_episode(Environment& env, const SequenceModel& model, const RewardFn& reward,
                      const PlanConfig& config, std::size_t T, Rng& rng);

}  // namespace lhz::plan
