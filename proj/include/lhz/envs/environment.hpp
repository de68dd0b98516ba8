#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "lhz/diffcore/random.hpp"
#include "lhz/trajectory.hpp"

namespace lhz::env {

enum Event : std::uint32_t {
  kNoEvent = 0,
  kKeyPickup = 1u << 0,
  kDoorUnlock = 1u << 1,
  kGoalReached = 1u << 2,
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  std::uint32_t events = kNoEvent;
};

// Pure reward over (observation, action, step index) used for planning.
using RewardFn = std::function<double(const Observation&, const Action&, std::size_t)>;

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual ActionKind action_kind() const = 0;
  virtual std::size_t max_steps() const = 0;

  // Deterministic layout from seed; returns o_0.
  virtual Observation reset(std::uint64_t seed) = 0;
  // Throws ContractError once the episode is done.
  virtual StepResult step(const Action& action) = 0;
  virtual Observation observation() const = 0;
  virtual bool done() const = 0;
  // Whether the task was completed in the current episode.
  virtual bool success() const = 0;
  virtual std::size_t steps_taken() const = 0;

  virtual bool supports_snapshot() const { return true; }
  // Self-contained byte copy of the full state.
  virtual std::string snapshot() const = 0;
  // Throws ContractError on a malformed snapshot.
  virtual void restore(const std::string& snapshot) = 0;

  virtual Action expert_action() const = 0;
  virtual RewardFn planning_reward() const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct EnvOptions {
  std::size_t view_size = 3;   // grid only, odd
  std::size_t max_steps = 0;   // 0 picks the environment default
  std::size_t num_goals = 5;   // points only
};

// "keydoor" or "points"; throws ContractError for other names.
std::unique_ptr<Environment> make_environment(const std::string& name,
                                              const EnvOptions& options = {});

// Uniform over the action space (continuous actions in [-1, 1]).
Action random_action(const Environment& env, Rng& rng);

// Seed used for episode `index` of a run seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace lhz::env
