#include "lhz/envs/environment.hpp"

#include "lhz/diffcore/errors.hpp"
#include "lhz/envs/keydoor.hpp"
#include "lhz/envs/points.hpp"

namespace lhz::env {

std::unique_ptr<Environment> make_environment(const std::string& name, const EnvOptions& options) {
  if (name == "keydoor") {
    return std::make_unique<KeyDoorEnv>(options.view_size,
                                        options.max_steps == 0 ? 64 : options.max_steps);
  }
  if (name == "points") {
    return std::make_unique<PointGoalsEnv>(options.num_goals,
                                           options.max_steps == 0 ? 200 : options.max_steps);
  }
  throw ContractError("unknown environment: " + name);
}

Action random_action(const Environment& env, Rng& rng) {
  if (env.action_kind() == ActionKind::kCategorical) {
    return {static_cast<double>(
        std::uniform_int_distribution<std::size_t>(0, env.action_dim() - 1)(rng))};
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Action a(env.action_dim());
  for (double& v : a) v = u(rng);
  return a;
}

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over a combination of both inputs
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + index + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace lhz::env
