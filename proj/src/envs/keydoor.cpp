#include "lhz/envs/keydoor.hpp"

#include <array>
#include <deque>

#include "bytes.hpp"
#include "lhz/diffcore/errors.hpp"

namespace lhz::env {

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};
constexpr int kWallColumn = 4;

}  // namespace

KeyDoorEnv::KeyDoorEnv(std::size_t view_size, std::size_t max_steps)
    : view_(view_size), max_steps_(max_steps) {
  if (view_ == 0 || view_ % 2 == 0) throw ContractError("view size must be odd and positive");
  if (max_steps_ == 0) throw ContractError("max_steps must be positive");
  reset(0);
}

Cell KeyDoorEnv::ahead(const Pose& p) { return {p.x + kDx[p.dir], p.y + kDy[p.dir]}; }

bool KeyDoorEnv::is_wall(int x, int y) const {
  const auto& s = state_;
  if (x <= 0 || y <= 0 || x >= s.width - 1 || y >= s.height - 1) return true;
  return x == kWallColumn && y != s.door.y;
}

bool KeyDoorEnv::passable(int x, int y) const {
  const auto& s = state_;
  if (is_wall(x, y)) return false;
  if (Cell{x, y} == s.door && s.door_locked) return false;
  if (Cell{x, y} == s.key && !s.key_carried) return false;
  return true;
}

Observation KeyDoorEnv::reset(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6b64);
  auto pick = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (;;) {
    KeyDoorState s;
    s.max_steps = max_steps_;
    s.door = {kWallColumn, pick(1, s.height - 2)};
    s.key = {pick(1, kWallColumn - 1), pick(1, s.height - 2)};
    do {
      s.agent = {pick(1, kWallColumn - 1), pick(1, s.height - 2), pick(0, 3)};
    } while (Cell{s.agent.x, s.agent.y} == s.key);
    s.goal = {pick(kWallColumn + 1, s.width - 2), pick(1, s.height - 2)};
    state_ = s;
    const auto plan = expert_plan();
    if (!plan.empty()) break;
  }
  return observation();
}

StepResult KeyDoorEnv::step(const Action& action) {
  auto& s = state_;
  if (s.done) throw ContractError("step called on a finished episode");
  if (action.size() != 1 || !(action[0] >= 0.0) || action[0] > 4.0 ||
      action[0] != static_cast<double>(static_cast<int>(action[0]))) {
    throw DomainError("keydoor action must be an index in [0, 4]");
  }
  StepResult r;
  ++s.steps;
  const Cell front = ahead(s.agent);
  switch (static_cast<int>(action[0])) {
    case kForward:
      if (passable(front.x, front.y)) {
        s.agent.x = front.x;
        s.agent.y = front.y;
        if (front == s.goal) {
          s.done = true;
          s.reached_goal = true;
          r.reward = 1.0 - 0.9 * static_cast<double>(s.steps) / static_cast<double>(s.max_steps);
          r.events |= kGoalReached;
        }
      }
      break;
    case kTurnLeft:
      s.agent.dir = (s.agent.dir + 3) % 4;
      break;
    case kTurnRight:
      s.agent.dir = (s.agent.dir + 1) % 4;
      break;
    case kPickup:
      if (front == s.key && !s.key_carried) {
        s.key_carried = true;
        r.events |= kKeyPickup;
      }
      break;
    case kToggle:
      if (front == s.door && s.door_locked && s.key_carried) {
        s.door_locked = false;
        r.events |= kDoorUnlock;
      }
      break;
  }
  if (!s.done && s.steps >= s.max_steps) s.done = true;
  r.done = s.done;
  r.observation = observation();
  return r;
}

Observation KeyDoorEnv::observation() const {
  const auto& s = state_;
  const int v = static_cast<int>(view_);
  const int c = v / 2;
  const int dx = kDx[s.agent.dir], dy = kDy[s.agent.dir];
  const int rx = -dy, ry = dx;  // the agent's right-hand side
  Observation o(obs_dim(), 0.0);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      const int fwd = c - i, right = j - c;
      const int x = s.agent.x + fwd * dx + right * rx;
      const int y = s.agent.y + fwd * dy + right * ry;
      int ch = kEmpty;
      if (Cell{x, y} == s.door) {
        ch = s.door_locked ? kDoorLocked : kDoorOpen;
      } else if (is_wall(x, y)) {
        ch = kWall;
      } else if (Cell{x, y} == s.key && !s.key_carried) {
        ch = kKey;
      } else if (Cell{x, y} == s.goal) {
        ch = kGoal;
      }
      o[static_cast<std::size_t>((i * v + j) * kNumChannels + ch)] = 1.0;
    }
  }
  o.back() = s.key_carried ? 1.0 : 0.0;
  return o;
}

std::string KeyDoorEnv::snapshot() const {
  detail::ByteWriter w;
  w.put_tag("KDS1");
  const auto& s = state_;
  for (int v : {s.width, s.height, s.agent.x, s.agent.y, s.agent.dir, s.key.x, s.key.y, s.door.x,
                s.door.y, s.goal.x, s.goal.y}) {
    w.put<std::int32_t>(v);
  }
  w.put<std::uint8_t>(s.key_carried);
  w.put<std::uint8_t>(s.door_locked);
  w.put<std::uint8_t>(s.done);
  w.put<std::uint8_t>(s.reached_goal);
  w.put<std::uint64_t>(s.steps);
  w.put<std::uint64_t>(s.max_steps);
  return w.take();
}

void KeyDoorEnv::restore(const std::string& snap) {
  detail::ByteReader r(snap);
  r.expect_tag("KDS1");
  KeyDoorState s;
  int* fields[] = {&s.width, &s.height, &s.agent.x, &s.agent.y, &s.agent.dir, &s.key.x,
                   &s.key.y, &s.door.x, &s.door.y, &s.goal.x, &s.goal.y};
  for (int* f : fields) *f = r.get<std::int32_t>();
  s.key_carried = r.get<std::uint8_t>() != 0;
  s.door_locked = r.get<std::uint8_t>() != 0;
  s.done = r.get<std::uint8_t>() != 0;
  s.reached_goal = r.get<std::uint8_t>() != 0;
  s.steps = r.get<std::uint64_t>();
  s.max_steps = r.get<std::uint64_t>();
  r.expect_end();
  if (s.width != 9 || s.height != 7 || s.agent.dir < 0 || s.agent.dir > 3) {
    throw ContractError("snapshot describes an invalid keydoor layout");
  }
  state_ = s;
}

std::optional<std::vector<int>> grid_bfs(const Pose& start,
                                         const std::function<bool(int, int)>& blocked,
                                         const std::function<bool(const Pose&)>& accept,
                                         int width, int height) {
  auto index = [width](const Pose& p) { return (p.y * width + p.x) * 4 + p.dir; };
  std::vector<int> parent(static_cast<std::size_t>(width * height * 4), -1);
  std::vector<int> via(parent.size(), -1);
  std::vector<bool> seen(parent.size(), false);
  std::deque<Pose> frontier{start};
  seen[static_cast<std::size_t>(index(start))] = true;
  while (!frontier.empty()) {
    const Pose p = frontier.front();
    frontier.pop_front();
    if (accept(p)) {
      std::vector<int> path;
      for (int i = index(p); i != index(start); i = parent[static_cast<std::size_t>(i)]) {
        path.push_back(via[static_cast<std::size_t>(i)]);
      }
      return std::vector<int>(path.rbegin(), path.rend());
    }
    const Pose next[3] = {{p.x + kDx[p.dir], p.y + kDy[p.dir], p.dir},
                          {p.x, p.y, (p.dir + 3) % 4},
                          {p.x, p.y, (p.dir + 1) % 4}};
    for (int a = 0; a < 3; ++a) {
      const Pose& q = next[a];
      if (a == kForward && blocked(q.x, q.y)) continue;
      const auto qi = static_cast<std::size_t>(index(q));
      if (seen[qi]) continue;
      seen[qi] = true;
      parent[qi] = index(p);
      via[qi] = a;
      frontier.push_back(q);
    }
  }
  return std::nullopt;
}

std::vector<int> KeyDoorEnv::expert_plan() const {
  if (state_.done) return {};
  KeyDoorEnv sim = *this;
  auto& s = sim.state_;
  std::vector<int> plan;
  auto blocked = [&sim](int x, int y) { return !sim.passable(x, y); };
  auto follow = [&](const std::function<bool(const Pose&)>& accept) {
    auto path = grid_bfs(s.agent, blocked, accept, s.width, s.height);
    if (!path) return false;
    for (int a : *path) {
      if (a == kForward) {
        const Cell f = ahead(s.agent);
        s.agent.x = f.x;
        s.agent.y = f.y;
      } else {
        s.agent.dir = (s.agent.dir + (a == kTurnLeft ? 3 : 1)) % 4;
      }
      plan.push_back(a);
    }
    return true;
  };
  if (!s.key_carried) {
    if (!follow([&s](const Pose& p) { return ahead(p) == s.key; })) return {};
    plan.push_back(kPickup);
    s.key_carried = true;
  }
  if (s.door_locked) {
    if (!follow([&s](const Pose& p) { return ahead(p) == s.door; })) return {};
    plan.push_back(kToggle);
    s.door_locked = false;
  }
  if (!follow([&s](const Pose& p) { return Cell{p.x, p.y} == s.goal; })) return {};
  return plan;
}

Action KeyDoorEnv::expert_action() const {
  if (state_.done) throw ContractError("expert queried on a finished episode");
  const auto plan = expert_plan();
  if (plan.empty()) throw ContractError("keydoor layout is unsolvable from this state");
  return {static_cast<double>(plan.front())};
}

RewardFn KeyDoorEnv::planning_reward() const {
  return [](const Observation& o, const Action&, std::size_t) { return o.back(); };
}

std::unique_ptr<Environment> KeyDoorEnv::clone() const {
  return std::make_unique<KeyDoorEnv>(*this);
}

}  // namespace lhz::env
