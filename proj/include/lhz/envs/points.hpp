#pragma once

#include <array>
#include <vector>

#include "lhz/envs/environment.hpp"

namespace lhz::env {

struct PointGoalsState {
  std::array<double, 2> position{};
  std::array<double, 2> velocity{};
  std::vector<std::array<double, 2>> goals;
  std::size_t goals_reached = 0;
  std::size_t steps = 0;
  std::size_t max_steps = 200;
  bool done = false;
  bool operator==(const PointGoalsState&) const = default;
};

// A point mass chasing an ordered list of goals; reward 1 each time the
// number of goals reached becomes a multiple of three.
class PointGoalsEnv final : public Environment {
 public:
  static constexpr double kArena = 5.0;
  static constexpr double kDt = 0.1;
  static constexpr double kGoalRadius = 0.3;
  static constexpr double kMaxSpeed = 2.0;
  static constexpr double kMaxAccel = 1.0;

  explicit PointGoalsEnv(std::size_t num_goals = 5, std::size_t max_steps = 200);

  std::string name() const override { return "points"; }
  // [p/5, v/2, (goal - p)/5, reached/num_goals]
  std::size_t obs_dim() const override { return 7; }
  std::size_t action_dim() const override { return 2; }
  ActionKind action_kind() const override { return ActionKind::kContinuous; }
  std::size_t max_steps() const override { return max_steps_; }

  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  Observation observation() const override;
  bool done() const override { return state_.done; }
  bool success() const override { return state_.goals_reached == state_.goals.size(); }
  std::size_t steps_taken() const override { return state_.steps; }

  std::string snapshot() const override;
  void restore(const std::string& snapshot) override;

  // Proportional-derivative acceleration toward the current goal.
  Action expert_action() const override;
  // Goals reached minus the remaining distance to the current goal, both
  // read off the observation.
  RewardFn planning_reward() const override;
  std::unique_ptr<Environment> clone() const override;

  const PointGoalsState& state() const { return state_; }
  void set_state(const PointGoalsState& s) { state_ = s; }

 private:
  std::size_t num_goals_;
  std::size_t max_steps_;
  PointGoalsState state_;
};

}  // namespace lhz::env
