#include "lhz/envs/points.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bytes.hpp"
#include "lhz/diffcore/errors.hpp"

namespace lhz::env {

namespace {

constexpr double kGoalMargin = 4.5;
constexpr double kKp = 1.0;
constexpr double kKd = 1.6;

}  // namespace

PointGoalsEnv::PointGoalsEnv(std::size_t num_goals, std::size_t max_steps)
    : num_goals_(num_goals), max_steps_(max_steps) {
  if (num_goals_ == 0) throw ContractError("num_goals must be positive");
  if (max_steps_ == 0) throw ContractError("max_steps must be positive");
  reset(0);
}

Observation PointGoalsEnv::reset(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x70f5);
  std::uniform_real_distribution<double> start(-3.0, 3.0), angle(0.0, 2.0 * std::numbers::pi),
      dist(1.0, 2.5);
  PointGoalsState s;
  s.max_steps = max_steps_;
  s.position = {start(rng), start(rng)};
  std::array<double, 2> prev = s.position;
  while (s.goals.size() < num_goals_) {
    const double a = angle(rng), d = dist(rng);
    const std::array<double, 2> g = {prev[0] + d * std::cos(a), prev[1] + d * std::sin(a)};
    if (std::abs(g[0]) > kGoalMargin || std::abs(g[1]) > kGoalMargin) continue;
    s.goals.push_back(g);
    prev = g;
  }
  state_ = s;
  return observation();
}

StepResult PointGoalsEnv::step(const Action& action) {
  auto& s = state_;
  if (s.done) throw ContractError("step called on a finished episode");
  if (action.size() != 2 || !std::isfinite(action[0]) || !std::isfinite(action[1])) {
    throw DomainError("points action must be two finite accelerations");
  }
  StepResult r;
  for (int i = 0; i < 2; ++i) {
    const double a = std::clamp(action[static_cast<std::size_t>(i)], -kMaxAccel, kMaxAccel);
    s.position[i] = std::clamp(s.position[i] + s.velocity[i] * kDt, -kArena, kArena);
    s.velocity[i] = std::clamp(s.velocity[i] + a * kDt, -kMaxSpeed, kMaxSpeed);
  }
  ++s.steps;
  const auto& g = s.goals[s.goals_reached];
  if (std::hypot(g[0] - s.position[0], g[1] - s.position[1]) <= kGoalRadius) {
    ++s.goals_reached;
    r.events |= kGoalReached;
    if (s.goals_reached % 3 == 0) r.reward = 1.0;
  }
  s.done = s.goals_reached == s.goals.size() || s.steps >= s.max_steps;
  r.done = s.done;
  r.observation = observation();
  return r;
}

Observation PointGoalsEnv::observation() const {
  const auto& s = state_;
  const auto& g = s.goals[std::min(s.goals_reached, s.goals.size() - 1)];
  return {s.position[0] / kArena,
          s.position[1] / kArena,
          s.velocity[0] / kMaxSpeed,
          s.velocity[1] / kMaxSpeed,
          (g[0] - s.position[0]) / kArena,
          (g[1] - s.position[1]) / kArena,
          static_cast<double>(s.goals_reached) / static_cast<double>(s.goals.size())};
}

std::string PointGoalsEnv::snapshot() const {
  detail::ByteWriter w;
  w.put_tag("PGS1");
  const auto& s = state_;
  for (double v : {s.position[0], s.position[1], s.velocity[0], s.velocity[1]}) w.put(v);
  w.put<std::uint64_t>(s.goals.size());
  for (const auto& g : s.goals) {
    w.put(g[0]);
    w.put(g[1]);
  }
  w.put<std::uint64_t>(s.goals_reached);
  w.put<std::uint64_t>(s.steps);
  w.put<std::uint64_t>(s.max_steps);
  w.put<std::uint8_t>(s.done);
  return w.take();
}

void PointGoalsEnv::restore(const std::string& snap) {
  detail::ByteReader r(snap);
  r.expect_tag("PGS1");
  PointGoalsState s;
  s.position = {r.get<double>(), r.get<double>()};
  s.velocity = {r.get<double>(), r.get<double>()};
  const auto n = r.get<std::uint64_t>();
  if (n == 0 || n > 1000) throw ContractError("snapshot goal count out of range");
  for (std::uint64_t i = 0; i < n; ++i) {
    const double x = r.get<double>();
    s.goals.push_back({x, r.get<double>()});
  }
  s.goals_reached = r.get<std::uint64_t>();
  s.steps = r.get<std::uint64_t>();
  s.max_steps = r.get<std::uint64_t>();
  s.done = r.get<std::uint8_t>() != 0;
  r.expect_end();
  if (s.goals_reached > s.goals.size()) throw ContractError("snapshot goal progress invalid");
  state_ = std::move(s);
}

Action PointGoalsEnv::expert_action() const {
  const auto& s = state_;
  if (s.done) throw ContractError("expert queried on a finished episode");
  const auto& g = s.goals[s.goals_reached];
  Action a(2);
  for (std::size_t i = 0; i < 2; ++i) {
    a[i] = std::clamp(kKp * (g[i] - s.position[i]) - kKd * s.velocity[i], -kMaxAccel, kMaxAccel);
  }
  return a;
}

RewardFn PointGoalsEnv::planning_reward() const {
  const double n = static_cast<double>(num_goals_);
  return [n](const Observation& o, const Action&, std::size_t) {
    return n * o[6] - std::hypot(o[4], o[5]);
  };
}

std::unique_ptr<Environment> PointGoalsEnv::clone() const {
  return std::make_unique<PointGoalsEnv>(*this);
}

}  // namespace lhz::env
