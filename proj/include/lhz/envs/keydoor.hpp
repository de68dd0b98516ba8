#pragma once

#include <array>
#include <optional>

#include "lhz/envs/environment.hpp"

namespace lhz::env {

enum GridAction : int { kForward = 0, kTurnLeft = 1, kTurnRight = 2, kPickup = 3, kToggle = 4 };

// Headings: 0 east (+x), 1 south (+y), 2 west, 3 north.
struct Pose {
  int x = 0;
  int y = 0;
  int dir = 0;
  bool operator==(const Pose&) const = default;
};

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct KeyDoorState {
  int width = 9;
  int height = 7;
  Pose agent;
  Cell key;
  bool key_carried = false;
  Cell door;
  bool door_locked = true;
  Cell goal;
  std::size_t steps = 0;
  std::size_t max_steps = 64;
  bool done = false;
  bool reached_goal = false;
  bool operator==(const KeyDoorState&) const = default;
};

enum Channel : int { kWall = 0, kKey, kDoorLocked, kDoorOpen, kGoal, kEmpty, kNumChannels };

// Two rooms split by a wall at the middle column with a locked door in it.
// The key lies in the left room with the agent; the goal is in the right room.
class KeyDoorEnv final : public Environment {
 public:
  explicit KeyDoorEnv(std::size_t view_size = 3, std::size_t max_steps = 64);

  std::string name() const override { return "keydoor"; }
  std::size_t obs_dim() const override { return view_ * view_ * kNumChannels + 1; }
  std::size_t action_dim() const override { return 5; }
  ActionKind action_kind() const override { return ActionKind::kCategorical; }
  std::size_t max_steps() const override { return max_steps_; }

  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  Observation observation() const override;
  bool done() const override { return state_.done; }
  bool success() const override { return state_.reached_goal; }
  std::size_t steps_taken() const override { return state_.steps; }

  std::string snapshot() const override;
  void restore(const std::string& snapshot) override;

  Action expert_action() const override;
  RewardFn planning_reward() const override;
  std::unique_ptr<Environment> clone() const override;

  const KeyDoorState& state() const { return state_; }
  // Replaces the state wholesale; used by tests and layout search.
  void set_state(const KeyDoorState& s) { state_ = s; }
  std::size_t view_size() const { return view_; }

  bool is_wall(int x, int y) const;
  // Whether the agent may enter (x, y).
  bool passable(int x, int y) const;
  static Cell ahead(const Pose& p);

  // Expert plan from the current state: shortest action sequence through
  // key pickup, door unlock and the goal. Empty when unsolvable or done.
  std::vector<int> expert_plan() const;

 private:
  std::size_t view_;
  std::size_t max_steps_;
  KeyDoorState state_;
};

// Shortest turn/forward sequence from `start` to any pose satisfying `accept`,
// treating cells for which `blocked` holds as impassable. Tie order among
// equal-length paths follows action order forward, left, right.
std::optional<std::vector<int>> grid_bfs(const Pose& start,
                                         const std::function<bool(int, int)>& blocked,
                                         const std::function<bool(const Pose&)>& accept,
                                         int width, int height);

}  // namespace lhz::env
