#include "lhz/envs/dataset.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lhz/diffcore/errors.hpp"
#include "lhz/format.hpp"

namespace lhz::env {

namespace {

void write_row(std::ostream& out, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ' ';
    out << format_double(row[i]);
  }
  out << '\n';
}

std::vector<double> read_row(std::istream& in, std::size_t expected, const char* what) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ContractError(std::string("dataset truncated while reading ") + what);
  }
  std::istringstream ss(line);
  std::vector<double> row;
  std::string tok;
  while (ss >> tok) {
    double v = 0.0;
    if (!parse_double(tok, v)) throw ContractError("dataset has a malformed number: " + tok);
    row.push_back(v);
  }
  if (row.size() != expected) {
    throw ContractError(std::string("dataset ") + what + " row has " +
                        std::to_string(row.size()) + " values, expected " +
                        std::to_string(expected));
  }
  return row;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "LHDS 1 " << data.obs_dim << ' ' << data.action_dim << ' '
      << (data.action_kind == ActionKind::kCategorical ? "categorical" : "continuous") << '\n';
  for (const auto& ep : data.episodes) {
    out << "EP " << ep.actions.size() << '\n';
    for (const auto& o : ep.observations) write_row(out, o);
    for (const auto& a : ep.actions) write_row(out, a);
    for (double r : ep.rewards) write_row(out, {r});
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ContractError("dataset is empty");
  std::istringstream header(line);
  std::string magic, kind;
  int version = 0;
  Dataset d;
  if (!(header >> magic >> version >> d.obs_dim >> d.action_dim >> kind) || magic != "LHDS" ||
      version != 1) {
    throw ContractError("dataset header is not 'LHDS 1 <obs_dim> <action_dim> <kind>'");
  }
  if (kind == "categorical") {
    d.action_kind = ActionKind::kCategorical;
  } else if (kind == "continuous") {
    d.action_kind = ActionKind::kContinuous;
  } else {
    throw ContractError("dataset action kind unknown: " + kind);
  }
  const std::size_t action_width = d.action_kind == ActionKind::kCategorical ? 1 : d.action_dim;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ep(line);
    std::string tag;
    std::size_t T = 0;
    if (!(ep >> tag >> T) || tag != "EP") throw ContractError("expected 'EP <T>', got: " + line);
    Trajectory t;
    for (std::size_t i = 0; i <= T; ++i) t.observations.push_back(read_row(in, d.obs_dim, "observation"));
    for (std::size_t i = 0; i < T; ++i) t.actions.push_back(read_row(in, action_width, "action"));
    for (std::size_t i = 0; i < T; ++i) t.rewards.push_back(read_row(in, 1, "reward")[0]);
    d.episodes.push_back(std::move(t));
  }
  return d;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  write_dataset(out, data);
  if (!out) throw std::runtime_error("failed writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  return read_dataset(in);
}

Trajectory rollout(Environment& env, std::uint64_t seed,
                   const std::function<Action(const Environment&)>& policy) {
  Trajectory t;
  t.observations.push_back(env.reset(seed));
  while (!env.done()) {
    Action a = policy(env);
    const StepResult r = env.step(a);
    t.actions.push_back(std::move(a));
    t.observations.push_back(r.observation);
    t.rewards.push_back(r.reward);
  }
  return t;
}

Dataset generate_dataset(Environment& env, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ContractError("dataset needs at least one trajectory");
  Dataset d;
  d.obs_dim = env.obs_dim();
  d.action_dim = env.action_dim();
  d.action_kind = env.action_kind();
  for (std::size_t i = 0; i < n; ++i) {
    d.episodes.push_back(
        rollout(env, episode_seed(seed, i), [](const Environment& e) { return e.expert_action(); }));
  }
  return d;
}

bool is_held_out(std::uint64_t seed, std::size_t index) {
  return episode_seed(seed ^ 0x5eedULL, index) % 10 == 0;
}

}  // namespace lhz::env
