#pragma once

#include <cstddef>
#include <vector>

namespace lhz {

// Categorical actions are a single value holding the index; continuous
// actions hold one value per action dimension.
using Action = std::vector<double>;
using Observation = std::vector<double>;

// One episode: observations o_0..o_T, actions a_0..a_{T-1}, rewards r_1..r_T.
// Action a_{t-1} is the one taken between o_{t-1} and o_t.
struct Trajectory {
  std::vector<Observation> observations;
  std::vector<Action> actions;
  std::vector<double> rewards;

  std::size_t length() const { return actions.size(); }
  bool operator==(const Trajectory&) const = default;
};

enum class ActionKind { kCategorical, kContinuous };

}  // namespace lhz
