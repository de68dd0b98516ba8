#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lhz/envs/environment.hpp"

namespace lhz::env {

struct Dataset {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  ActionKind action_kind = ActionKind::kCategorical;
  std::vector<Trajectory> episodes;
};

// Text format: "LHDS 1 <obs_dim> <action_dim> <action_kind>", then per
// episode "EP <T>" followed by T+1 observation lines, T action lines and
// T reward lines of space-separated shortest round-trip decimals.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

// Runs the environment's expert for n episodes seeded by episode_seed(seed, i).
Dataset generate_dataset(Environment& env, std::size_t n, std::uint64_t seed);

// Rolls out one episode with `policy` choosing each action.
Trajectory rollout(Environment& env, std::uint64_t seed,
                   const std::function<Action(const Environment&)>& policy);

// Deterministic held-out membership for episode index i (about 10%).
bool is_held_out(std::uint64_t seed, std::size_t index);

}  // namespace lhz::env
