#include "lhz/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lhz/diffcore/errors.hpp"
#include "lhz/explorer/explorer.hpp"

namespace lhz::pipe {

using diff::Tensor;

namespace {

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s;
}

std::vector<std::size_t> split_dims(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(std::stoul(part));
  }
  return out;
}

std::size_t header_size(const std::map<std::string, std::string>& h, const std::string& key) {
  auto it = h.find(key);
  if (it == h.end()) throw ContractError("checkpoint header lacks " + key);
  return std::stoul(it->second);
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.config;
  out << "LHCK 1\n"
      << "kind=" << kind_name(ckpt.kind) << "\n"
      << "obs_dim=" << c.obs_dim << "\n"
      << "action_dim=" << c.action_dim << "\n"
      << "action_kind=" << seq::action_kind_name(c.action_kind) << "\n"
      << "latent_dim=" << c.latent_dim << "\n"
      << "hidden_dim=" << c.hidden_dim << "\n"
      << "backward_hidden_dim=" << c.backward_hidden_dim << "\n"
      << "decoder_hidden_dims=" << join_dims(c.decoder_hidden_dims) << "\n";
  for (const auto& [k, v] : ckpt.meta) out << "meta." << k << "=" << v << "\n";
  out << "---\n";
  diff::save_params(out, ckpt.params);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "LHCK 1") throw ContractError("not a checkpoint file");
  std::map<std::string, std::string> header;
  Checkpoint ckpt;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == "---") {
      terminated = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("malformed checkpoint header line: " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("meta.", 0) == 0) {
      ckpt.meta[key.substr(5)] = value;
    } else {
      header[key] = value;
    }
  }
  if (!terminated) throw ContractError("checkpoint header is not terminated");
  if (!header.contains("kind") || !header.contains("action_kind")) {
    throw ContractError("checkpoint header lacks kind or action_kind");
  }
  ckpt.kind = parse_kind(header["kind"]);
  ModelConfig& c = ckpt.config;
  c.obs_dim = header_size(header, "obs_dim");
  c.action_dim = header_size(header, "action_dim");
  c.action_kind = seq::parse_action_kind(header["action_kind"]);
  c.latent_dim = header_size(header, "latent_dim");
  c.hidden_dim = header_size(header, "hidden_dim");
  c.backward_hidden_dim = header_size(header, "backward_hidden_dim");
  c.decoder_hidden_dims = split_dims(header["decoder_hidden_dims"]);
  ckpt.params = diff::load_params(in);
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

Checkpoint make_checkpoint(const SequenceModel& model) {
  return {BaselineKind::kFullModel, model.config(), model.params(), {}};
}

Checkpoint make_checkpoint(const RecurrentBaseline& baseline) {
  return {baseline.kind(), baseline.config(), baseline.params(), {}};
}

SequenceModel full_model(const Checkpoint& ckpt) {
  if (ckpt.kind != BaselineKind::kFullModel) {
    throw ContractError("expected a full_model checkpoint, got " + kind_name(ckpt.kind));
  }
  return SequenceModel(ckpt.config, ckpt.params);
}

RecurrentBaseline recurrent_baseline(const Checkpoint& ckpt) {
  if (ckpt.kind == BaselineKind::kFullModel) {
    throw ContractError("expected a baseline checkpoint, got full_model");
  }
  return RecurrentBaseline(ckpt.config, ckpt.kind == BaselineKind::kRecurrentDecoder, ckpt.params);
}

Checkpoint bc_train(const std::vector<Trajectory>& data, BaselineKind kind,
                    const TrainConfig& config, std::ostream* metrics) {
  if (data.empty()) throw ContractError("training dataset is empty");
  if (config.batch_size < 1) throw ContractError("batch size must be at least 1");
  config.objective.validate();
  for (const auto& t : data) seq::validate_trajectory(t, config.model);

  Rng init = make_rng(config.seed, 1);
  Rng order_rng = make_rng(config.seed, 2);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (metrics != nullptr) *metrics << "epoch," << obj::metrics_header() << "\n";

  std::optional<SequenceModel> model;
  std::optional<obj::Trainer> trainer;
  std::optional<RecurrentBaseline> baseline;
  diff::AdamState adam;
  adam.learning_rate = config.objective.learning_rate;
  if (kind == BaselineKind::kFullModel) {
    model.emplace(config.model, init);
    trainer.emplace(*model, config.objective, config.seed);
  } else {
    baseline.emplace(config.model, kind == BaselineKind::kRecurrentDecoder, init);
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    obj::LossBreakdown mean;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Trajectory*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      obj::LossBreakdown l;
      if (trainer) {
        l = trainer->step(batch);
      } else {
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (const Trajectory* t : batch) {
          Graph g;
          const auto one = baseline->loss(g, *t);
          g.backward(inv * one.total_var);
          baseline->params().accumulate_grads(g);
          l.obs_recon += inv * one.obs_recon;
          l.act_recon += inv * one.act_recon;
          l.total += inv * one.total;
        }
        diff::adam_step(baseline->params(), adam);
      }
      const double w = static_cast<double>(batch.size()) / static_cast<double>(data.size());
      mean.total += w * l.total;
      mean.obs_recon += w * l.obs_recon;
      mean.act_recon += w * l.act_recon;
      mean.kl_total += w * l.kl_total;
      mean.aux_total += w * l.aux_total;
      mean.kl_weight_used = l.kl_weight_used;
    }
    if (metrics != nullptr) {
      const std::uint64_t step = trainer ? trainer->iteration() : adam.step;
      *metrics << epoch << "," << obj::metrics_row(step, mean) << "\n";
    }
  }

  Checkpoint out = trainer ? make_checkpoint(*model) : make_checkpoint(*baseline);
  out.meta["epochs"] = std::to_string(config.epochs);
  out.meta["seed"] = std::to_string(config.seed);
  return out;
}

namespace {

class FullModelAgent : public Agent {
 public:
  FullModelAgent(SequenceModel model, SampleMode mode) : model_(std::move(model)), mode_(mode) {}

  void begin(const Observation& o0) override {
    Graph g(false);
    h_ = seq::state_value(model_.initial_state(g, model_.observation(g, o0)));
  }

  Action act(const Environment&, Rng& rng) override {
    Graph g(false);
    const seq::ForwardState h = seq::bind_state(g, h_);
    const auto prior = model_.prior(g, h);
    const auto z = seq::reparameterize(prior, standard_normal(model_.config().latent_dim, rng),
                                       seq::LatentSource::kPrior);
    z_ = z.z.value();
    return explore::clip_action(model_.decode_action(g, h, z.z).choose(mode_, rng),
                                model_.config().action_kind);
  }

  void observe(const Action&, const Observation& next) override {
    Graph g(false);
    const seq::ForwardState h = seq::bind_state(g, h_);
    h_ = seq::state_value(
        model_.forward_transition(g, model_.observation(g, next), h, g.constant(z_)));
  }

 private:
  SequenceModel model_;
  SampleMode mode_;
  seq::ForwardStateValue h_;
  Tensor z_;
};

class BaselineAgent : public Agent {
 public:
  BaselineAgent(RecurrentBaseline model, SampleMode mode) : model_(std::move(model)), mode_(mode) {}

  void begin(const Observation& o0) override {
    Graph g(false);
    h_ = seq::state_value(model_.initial_state(g, o0));
  }

  Action act(const Environment&, Rng& rng) override {
    Graph g(false);
    return explore::clip_action(model_.decode_action(g, seq::bind_state(g, h_)).choose(mode_, rng),
                                model_.config().action_kind);
  }

  void observe(const Action&, const Observation& next) override {
    Graph g(false);
    h_ = seq::state_value(model_.transition(g, next, seq::bind_state(g, h_)));
  }

 private:
  RecurrentBaseline model_;
  SampleMode mode_;
  seq::ForwardStateValue h_;
};

class RandomAgent : public Agent {
 public:
  void begin(const Observation&) override {}
  Action act(const Environment& env, Rng& rng) override { return env::random_action(env, rng); }
  void observe(const Action&, const Observation&) override {}
};

class ExpertAgent : public Agent {
 public:
  void begin(const Observation&) override {}
  Action act(const Environment& env, Rng&) override { return env.expert_action(); }
  void observe(const Action&, const Observation&) override {}
};

}  // namespace

std::unique_ptr<Agent> make_agent(const Checkpoint& ckpt, SampleMode mode) {
  if (ckpt.kind == BaselineKind::kFullModel) {
    return std::make_unique<FullModelAgent>(full_model(ckpt), mode);
  }
  return std::make_unique<BaselineAgent>(recurrent_baseline(ckpt), mode);
}

std::unique_ptr<Agent> make_random_agent() { return std::make_unique<RandomAgent>(); }
std::unique_ptr<Agent> make_expert_agent() { return std::make_unique<ExpertAgent>(); }

Action act_from_model(const Checkpoint& ckpt, const Trajectory& history, const Environment& env,
                      SampleMode mode, Rng& rng) {
  if (history.observations.size() != history.actions.size() + 1) {
    throw DimensionError("history needs one more observation than actions");
  }
  auto agent = make_agent(ckpt, mode);
  agent->begin(history.observations[0]);
  for (std::size_t t = 0; t < history.actions.size(); ++t) {
    agent->act(env, rng);
    agent->observe(history.actions[t], history.observations[t + 1]);
  }
  return agent->act(env, rng);
}

Episode run_episode(Environment& env, Agent& agent, std::uint64_t env_seed, Rng& rng) {
  Episode ep;
  ep.trajectory.observations.push_back(env.reset(env_seed));
  agent.begin(ep.trajectory.observations[0]);
  while (!env.done()) {
    Action a = agent.act(env, rng);
    const env::StepResult r = env.step(a);
    agent.observe(a, r.observation);
    ep.trajectory.actions.push_back(std::move(a));
    ep.trajectory.observations.push_back(r.observation);
    ep.trajectory.rewards.push_back(r.reward);
    ep.events.push_back(r.events);
    ep.total_reward += r.reward;
  }
  ep.success = env.success();
  return ep;
}

NllReport heldout_nll(const Checkpoint& ckpt, const std::vector<Trajectory>& data,
                      std::size_t samples, std::uint64_t seed) {
  NllReport out;
  if (ckpt.kind == BaselineKind::kRecurrentPolicy || data.empty()) return out;
  double obs = 0.0, combined = 0.0;
  if (ckpt.kind == BaselineKind::kFullModel) {
    const SequenceModel model = full_model(ckpt);
    Rng rng = make_rng(seed, 0x4e11);
    for (const auto& t : data) {
      const auto nll = obj::sequence_nll(model, t, samples, rng);
      obs += nll.obs_only;
      combined += nll.combined;
    }
  } else {
    const RecurrentBaseline model = recurrent_baseline(ckpt);
    for (const auto& t : data) {
      Graph g(false);
      const auto l = model.loss(g, t);
      obs -= l.obs_recon;
      combined += l.total;
    }
  }
  const double n = static_cast<double>(data.size());
  out.obs_nll = obs / n;
  out.combined_nll = combined / n;
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

EvalReport evaluate_agent(Environment& env, Agent& agent, const std::string& name,
                          const EvalConfig& config, std::vector<Episode>* episodes) {
  if (config.episodes < 1) throw ContractError("evaluation needs at least one episode");
  EvalReport report;
  report.agent = name;
  Rng rng = make_rng(config.seed, 0xe7a1);
  double successes = 0.0;
  for (std::size_t i = 0; i < config.episodes; ++i) {
    const std::uint64_t s = env::episode_seed(config.seed, i);
    const Episode ep = run_episode(env, agent, s, rng);
    report.episode_seeds.push_back(s);
    report.episode_rewards.push_back(ep.total_reward);
    if (ep.success) successes += 1.0;
    if (episodes != nullptr) episodes->push_back(ep);
  }
  const Summary sum = summarize(report.episode_rewards);
  report.mean_reward = sum.mean;
  report.reward_stderr = sum.standard_error;
  report.success_rate = successes / static_cast<double>(config.episodes);
  return report;
}

EvalReport evaluate(const Checkpoint& ckpt, Environment& env,
                    const std::vector<Trajectory>& held_out, const EvalConfig& config) {
  auto agent = make_agent(ckpt, config.mode);
  std::vector<Episode> episodes;
  EvalReport report = evaluate_agent(env, *agent, kind_name(ckpt.kind), config, &episodes);
  report.nll = heldout_nll(ckpt, held_out, config.nll_samples, config.seed);
  if (ckpt.kind == BaselineKind::kFullModel) {
    const SequenceModel model = full_model(ckpt);
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      report.aux_traces.push_back(
          aux_cost_series(model, episodes[i].trajectory, report.episode_seeds[i]));
    }
  }
  return report;
}

std::vector<double> aux_cost_series(const SequenceModel& model, const Trajectory& traj,
                                    std::uint64_t noise_seed) {
  Graph g(false);
  Rng rng = make_rng(noise_seed, 0xa0c5);
  std::vector<double> out;
  for (const auto& r : model.teacher_forced_pass(g, traj, rng)) {
    out.push_back(-model.aux_decode(g, r.z.z).log_prob(r.b_target).item());
  }
  return out;
}

SubgoalTrace subgoal_trace(const Checkpoint& ckpt, Environment& env, std::uint64_t episode_seed,
                           std::uint64_t noise_seed, SampleMode mode) {
  if (ckpt.kind != BaselineKind::kFullModel) {
    throw ContractError("subgoal_trace needs a full_model checkpoint, got " +
                        kind_name(ckpt.kind));
  }
  const SequenceModel model = full_model(ckpt);
  FullModelAgent agent(model, mode);
  Rng rng = make_rng(noise_seed, 1);
  SubgoalTrace out;
  out.episode = run_episode(env, agent, episode_seed, rng);
  out.aux_cost = aux_cost_series(model, out.episode.trajectory, noise_seed);
  for (std::size_t t = 0; t < out.episode.events.size(); ++t) {
    const std::uint32_t e = out.episode.events[t];
    if ((e & env::kKeyPickup) && !out.key_pickup_step) out.key_pickup_step = t;
    if ((e & env::kDoorUnlock) && !out.door_unlock_step) out.door_unlock_step = t;
  }
  return out;
}

}  // namespace lhz::pipe
