#include "lhz/pipeline/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "lhz/envs/dataset.hpp"
#include "lhz/explorer/explorer.hpp"
#include "lhz/format.hpp"
#include "lhz/pipeline/chart.hpp"
#include "lhz/pipeline/pipeline.hpp"
#include "lhz/planner/planner.hpp"

namespace lhz::pipe {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnvSettings {
  std::string name = "keydoor";
  std::size_t view_size = 3;
  std::size_t max_steps = 0;
  std::size_t num_goals = 5;

  void add_to(CLI::App* app) {
    app->add_option("--env", name, "keydoor or points")->capture_default_str();
    app->add_option("--view-size", view_size, "grid view width (odd)")->capture_default_str();
    app->add_option("--max-steps", max_steps, "episode cap, 0 for the default")
        ->capture_default_str();
    app->add_option("--num-goals", num_goals, "goals per points episode")->capture_default_str();
  }
  std::unique_ptr<env::Environment> make() const {
    return env::make_environment(name, {view_size, max_steps, num_goals});
  }
};

struct ModelSettings {
  std::size_t latent_dim = 8;
  std::size_t hidden_dim = 32;
  std::size_t backward_hidden_dim = 32;
  std::string decoder_hidden = "32";

  void add_to(CLI::App* app) {
    app->add_option("--latent-dim", latent_dim)->capture_default_str();
    app->add_option("--hidden-dim", hidden_dim)->capture_default_str();
    app->add_option("--backward-hidden-dim", backward_hidden_dim)->capture_default_str();
    app->add_option("--decoder-hidden", decoder_hidden, "comma-separated hidden widths")
        ->capture_default_str();
  }
  ModelConfig config(std::size_t obs_dim, std::size_t action_dim, ActionKind kind) const {
    ModelConfig c;
    c.obs_dim = obs_dim;
    c.action_dim = action_dim;
    c.action_kind = kind;
    c.latent_dim = latent_dim;
    c.hidden_dim = hidden_dim;
    c.backward_hidden_dim = backward_hidden_dim;
    std::stringstream in(decoder_hidden);
    std::string part;
    while (std::getline(in, part, ',')) {
      if (part.empty()) continue;
      try {
        c.decoder_hidden_dims.push_back(std::stoul(part));
      } catch (const std::exception&) {
        throw UsageError("--decoder-hidden expects integers, got " + decoder_hidden);
      }
    }
    return c;
  }
};

struct ObjectiveSettings {
  obj::ObjectiveConfig cfg;

  void add_to(CLI::App* app) {
    app->add_option("--beta", cfg.beta, "auxiliary cost weight")->capture_default_str();
    app->add_option("--kl-start", cfg.kl_start)->capture_default_str();
    app->add_option("--kl-increment", cfg.kl_increment)->capture_default_str();
    app->add_option("--lr", cfg.learning_rate)->capture_default_str();
    app->add_option("--chunk-length", cfg.chunk_length)->capture_default_str();
  }
};

SampleMode parse_mode(const std::string& s) {
  if (s == "greedy") return SampleMode::kGreedy;
  if (s == "sample") return SampleMode::kSample;
  throw UsageError("--mode must be greedy or sample, got " + s);
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("missing file: " + path);
}

fs::path prepare_out(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

std::string option_value(const CLI::Option* opt) {
  if (opt->count() == 0) return opt->get_default_str();
  std::string v;
  for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
  return v;
}

void write_manifest(const fs::path& out, const CLI::App* sub) {
  std::ofstream m(out / "manifest.txt");
  m << "command=" << sub->get_name() << "\n";
  std::vector<std::pair<std::string, std::string>> rows;
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    rows.emplace_back(name, option_value(opt));
  }
  std::sort(rows.begin(), rows.end());
  for (const auto& [k, v] : rows) m << k << "=" << v << "\n";
  if (!m) throw std::runtime_error("cannot write manifest in " + out.string());
}

// Appends --key value for every config entry not given on the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  require_file(path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> extra;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "command") continue;
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : args) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (!given) {
      extra.push_back(flag);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

std::string optional_text(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("absent");
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-variable sequence models for imitation, planning and exploration", "lhz"};
  app.require_subcommand(1);
  std::string config_path;
  auto add_common = [&](CLI::App* sub, std::string& out_dir, std::uint64_t& seed) {
    sub->add_option("--config", config_path, "file of key=value lines; flags take precedence");
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed)->capture_default_str();
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate expert datasets");
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  std::size_t gen_episodes = 500;
  EnvSettings gen_env;
  add_common(gen, gen_out, gen_seed);
  gen_env.add_to(gen);
  gen->add_option("--episodes", gen_episodes)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "behavioral cloning");
  std::string train_out, train_data, train_kind = "full_model";
  std::uint64_t train_seed = 0;
  std::size_t train_epochs = 10, train_batch = 8;
  ModelSettings train_model;
  ObjectiveSettings train_obj;
  add_common(train, train_out, train_seed);
  train->add_option("--data", train_data, "training dataset")->required();
  train->add_option("--kind", train_kind)->capture_default_str();
  train->add_option("--epochs", train_epochs)->capture_default_str();
  train->add_option("--batch-size", train_batch)->capture_default_str();
  train_model.add_to(train);
  train_obj.add_to(train);

  // eval
  auto* eval = app.add_subcommand("eval", "roll out a checkpoint and score held-out data");
  std::string eval_out, eval_ckpt, eval_heldout, eval_mode = "greedy";
  std::uint64_t eval_seed = 0;
  std::size_t eval_episodes = 50, eval_samples = 100;
  EnvSettings eval_env;
  add_common(eval, eval_out, eval_seed);
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--heldout", eval_heldout, "held-out dataset for NLL")->capture_default_str();
  eval->add_option("--episodes", eval_episodes)->capture_default_str();
  eval->add_option("--nll-samples", eval_samples)->capture_default_str();
  eval->add_option("--mode", eval_mode, "greedy or sample")->capture_default_str();
  eval_env.add_to(eval);

  // plan
  auto* planc = app.add_subcommand("plan", "model predictive control with a full model");
  std::string plan_out, plan_ckpt;
  std::uint64_t plan_seed = 0;
  std::size_t plan_episodes = 1, plan_steps = 0;
  plan::PlanConfig plan_cfg;
  plan_cfg.m = 256;
  plan_cfg.k = 5;
  EnvSettings plan_env;
  add_common(planc, plan_out, plan_seed);
  planc->add_option("--checkpoint", plan_ckpt)->required();
  planc->add_option("--m", plan_cfg.m, "candidates per replan")->capture_default_str();
  planc->add_option("--k", plan_cfg.k, "steps executed per plan")->capture_default_str();
  planc->add_option("--horizon", plan_cfg.horizon, "0 means 2k")->capture_default_str();
  planc->add_option("--steps", plan_steps, "episode length, 0 for the cap")->capture_default_str();
  planc->add_option("--episodes", plan_episodes)->capture_default_str();
  plan_env.add_to(planc);

  // explore
  auto* explorec = app.add_subcommand("explore", "exploration loop");
  std::string explore_out;
  std::uint64_t explore_seed = 0;
  explore::LoopConfig loop;
  loop.plan.m = 64;
  loop.plan.k = 5;
  std::size_t policy_hidden = 32, checkpoint_interval = 0;
  EnvSettings explore_env;
  ModelSettings explore_model;
  ObjectiveSettings explore_obj;
  add_common(explorec, explore_out, explore_seed);
  explorec->add_option("--iterations", loop.iterations)->capture_default_str();
  explorec->add_option("--warmup", loop.warmup_trajectories)->capture_default_str();
  explorec->add_option("--warmup-model-steps", loop.warmup_model_steps)->capture_default_str();
  explorec->add_option("--per-iteration", loop.trajectories_per_iteration)->capture_default_str();
  explorec->add_option("--buffer", loop.buffer_capacity)->capture_default_str();
  explorec->add_option("--model-steps", loop.model_steps)->capture_default_str();
  explorec->add_option("--batch-size", loop.batch_size)->capture_default_str();
  explorec->add_option("--fresh-fraction", loop.fresh_fraction)->capture_default_str();
  explorec->add_option("--mpc-steps", loop.mpc_steps)->capture_default_str();
  explorec->add_option("--m", loop.plan.m)->capture_default_str();
  explorec->add_option("--k", loop.plan.k)->capture_default_str();
  explorec->add_option("--horizon", loop.plan.horizon)->capture_default_str();
  explorec->add_option("--ppo-epochs", loop.ppo.epochs)->capture_default_str();
  explorec->add_option("--ppo-minibatch", loop.ppo.minibatch_size)->capture_default_str();
  explorec->add_option("--clip", loop.ppo.clip_ratio)->capture_default_str();
  explorec->add_option("--entropy", loop.ppo.entropy_weight)->capture_default_str();
  explorec->add_option("--policy-lr", loop.ppo.learning_rate)->capture_default_str();
  explorec->add_option("--policy-hidden", policy_hidden)->capture_default_str();
  explorec->add_option("--checkpoint-interval", checkpoint_interval, "0 keeps only the final")
      ->capture_default_str();
  explore_env.add_to(explorec);
  explore_model.add_to(explorec);
  explore_obj.add_to(explorec);

  // trace
  auto* tracec = app.add_subcommand("trace", "per-step auxiliary cost of one episode");
  std::string trace_out, trace_ckpt, trace_mode = "greedy";
  std::uint64_t trace_seed = 0;
  EnvSettings trace_env;
  add_common(tracec, trace_out, trace_seed);
  tracec->add_option("--checkpoint", trace_ckpt)->required();
  tracec->add_option("--mode", trace_mode)->capture_default_str();
  trace_env.add_to(tracec);

  // nll
  auto* nllc = app.add_subcommand("nll", "held-out negative log-likelihood");
  std::string nll_out, nll_ckpt, nll_data;
  std::uint64_t nll_seed = 0;
  std::size_t nll_samples = 100;
  add_common(nllc, nll_out, nll_seed);
  nllc->add_option("--checkpoint", nll_ckpt)->required();
  nllc->add_option("--data", nll_data)->required();
  nllc->add_option("--samples", nll_samples)->capture_default_str();

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      auto env = gen_env.make();
      const env::Dataset all = env::generate_dataset(*env, gen_episodes, gen_seed);
      env::Dataset tr{all.obs_dim, all.action_dim, all.action_kind, {}};
      env::Dataset ho = tr;
      for (std::size_t i = 0; i < all.episodes.size(); ++i) {
        (env::is_held_out(gen_seed, i) ? ho : tr).episodes.push_back(all.episodes[i]);
      }
      const fs::path dir = prepare_out(gen_out);
      env::save_dataset((dir / "train.lhds").string(), tr);
      env::save_dataset((dir / "heldout.lhds").string(), ho);
      write_manifest(dir, gen);
      out << "train=" << tr.episodes.size() << " heldout=" << ho.episodes.size() << "\n";
    } else if (train->parsed()) {
      require_file(train_data);
      const BaselineKind kind = parse_kind(train_kind);
      const env::Dataset data = env::load_dataset(train_data);
      TrainConfig tc;
      tc.model = train_model.config(data.obs_dim, data.action_dim, data.action_kind);
      tc.objective = train_obj.cfg;
      tc.epochs = train_epochs;
      tc.batch_size = train_batch;
      tc.seed = train_seed;
      const fs::path dir = prepare_out(train_out);
      std::ostringstream metrics;
      Checkpoint ckpt = bc_train(data.episodes, kind, tc, &metrics);
      ckpt.meta["data"] = fs::path(train_data).filename().string();
      save_checkpoint((dir / "checkpoint.lhck").string(), ckpt);
      write_text(dir / "metrics.csv", metrics.str());
      Series loss{"total", {}, {}};
      std::istringstream rows(metrics.str());
      std::string row;
      std::getline(rows, row);
      while (std::getline(rows, row)) {
        std::stringstream cells(row);
        std::string epoch, iter, total;
        std::getline(cells, epoch, ',');
        std::getline(cells, iter, ',');
        std::getline(cells, total, ',');
        loss.x.push_back(std::stod(epoch));
        loss.y.push_back(std::stod(total));
      }
      write_line_chart((dir / "loss.svg").string(), train_kind + " training loss", "epoch",
                       "mean loss per trajectory", {loss});
      write_manifest(dir, train);
      out << "final_loss=" << (loss.y.empty() ? std::string("none") : format_double(loss.y.back()))
          << "\n";
    } else if (eval->parsed()) {
      require_file(eval_ckpt);
      if (!eval_heldout.empty()) require_file(eval_heldout);
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      auto env = eval_env.make();
      std::vector<Trajectory> held;
      if (!eval_heldout.empty()) held = env::load_dataset(eval_heldout).episodes;
      EvalConfig ec{eval_episodes, eval_seed, parse_mode(eval_mode), eval_samples};
      const EvalReport r = evaluate(ckpt, *env, held, ec);
      const fs::path dir = prepare_out(eval_out);
      std::ostringstream csv;
      csv << "episode,env_seed,reward\n";
      for (std::size_t i = 0; i < r.episode_rewards.size(); ++i) {
        csv << i << "," << r.episode_seeds[i] << "," << format_double(r.episode_rewards[i]) << "\n";
      }
      write_text(dir / "episodes.csv", csv.str());
      std::ostringstream rep;
      rep << "agent=" << r.agent << "\nmean_reward=" << format_double(r.mean_reward)
          << "\nreward_stderr=" << optional_text(r.reward_stderr)
          << "\nsuccess_rate=" << format_double(r.success_rate)
          << "\nobs_nll=" << optional_text(r.nll.obs_nll)
          << "\ncombined_nll=" << optional_text(r.nll.combined_nll) << "\n";
      write_text(dir / "report.txt", rep.str());
      if (!r.aux_traces.empty()) {
        std::vector<Series> series;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, r.aux_traces.size()); ++i) {
          Series s{"episode " + std::to_string(i), {}, r.aux_traces[i]};
          for (std::size_t t = 0; t < s.y.size(); ++t) s.x.push_back(static_cast<double>(t));
          series.push_back(std::move(s));
        }
        write_line_chart((dir / "aux_cost.svg").string(), "auxiliary cost per step", "step",
                         "aux cost", series);
      }
      write_manifest(dir, eval);
      out << rep.str();
    } else if (planc->parsed()) {
      require_file(plan_ckpt);
      const SequenceModel model = full_model(load_checkpoint(plan_ckpt));
      auto env = plan_env.make();
      const fs::path dir = prepare_out(plan_out);
      Rng rng = make_rng(plan_seed, 0x91a);
      std::ostringstream csv;
      csv << "episode,env_seed,return,replans,length\n";
      Series curve{"return", {}, {}};
      for (std::size_t i = 0; i < plan_episodes; ++i) {
        const std::uint64_t s = env::episode_seed(plan_seed, i);
        env->reset(s);
        const std::size_t T = plan_steps == 0 ? env->max_steps() : plan_steps;
        const auto r = plan::mpc_episode(*env, model, env->planning_reward(), plan_cfg, T, rng);
        const double ret =
            std::accumulate(r.trajectory.rewards.begin(), r.trajectory.rewards.end(), 0.0);
        csv << i << "," << s << "," << format_double(ret) << "," << r.replans << ","
            << r.trajectory.length() << "\n";
        curve.x.push_back(static_cast<double>(i));
        curve.y.push_back(ret);
      }
      write_text(dir / "plan.csv", csv.str());
      write_line_chart((dir / "returns.svg").string(), "MPC episode return", "episode", "return",
                       {curve});
      write_manifest(dir, planc);
      out << "mean_return=" << format_double(summarize(curve.y).mean) << "\n";
    } else if (explorec->parsed()) {
      auto env = explore_env.make();
      const fs::path dir = prepare_out(explore_out);
      loop.seed = explore_seed;
      loop.objective = explore_obj.cfg;
      Rng init = make_rng(explore_seed, 1);
      SequenceModel model(
          explore_model.config(env->obs_dim(), env->action_dim(), env->action_kind()), init);
      explore::ExplorationPolicy policy(
          {env->obs_dim(), env->action_dim(), env->action_kind(), policy_hidden}, init);
      std::ostringstream csv;
      csv << explore::loop_metrics_header() << "\n";
      Series curve{"MPC return", {}, {}};
      const auto hook = [&](const explore::IterationMetrics& m, const SequenceModel& current) {
        csv << explore::loop_metrics_row(m) << "\n";
        curve.x.push_back(static_cast<double>(m.iteration));
        curve.y.push_back(m.mpc_return);
        if (checkpoint_interval > 0 && (m.iteration + 1) % checkpoint_interval == 0) {
          save_checkpoint(
              (dir / ("checkpoint_iter" + std::to_string(m.iteration + 1) + ".lhck")).string(),
              make_checkpoint(current));
        }
      };
      const auto result =
          explore::overall_loop(*env, model, policy, env->planning_reward(), loop, hook);
      write_text(dir / "metrics.csv", csv.str());
      save_checkpoint((dir / "checkpoint.lhck").string(), make_checkpoint(model));
      env::Dataset buffer{env->obs_dim(), env->action_dim(), env->action_kind(), {}};
      buffer.episodes.assign(result.buffer.items().begin(), result.buffer.items().end());
      env::save_dataset((dir / "buffer.lhds").string(), buffer);
      write_line_chart((dir / "returns.svg").string(), "exploration loop", "iteration",
                       "MPC return", {curve});
      write_manifest(dir, explorec);
      out << "iterations=" << result.metrics.size() << " buffer=" << result.buffer.size() << "\n";
    } else if (tracec->parsed()) {
      require_file(trace_ckpt);
      const Checkpoint ckpt = load_checkpoint(trace_ckpt);
      auto env = trace_env.make();
      const SubgoalTrace tr = subgoal_trace(ckpt, *env, env::episode_seed(trace_seed, 0),
                                            trace_seed, parse_mode(trace_mode));
      const fs::path dir = prepare_out(trace_out);
      std::ostringstream csv;
      csv << "step,aux_cost,key_pickup,door_unlock,goal_reached\n";
      Series s{"aux cost", {}, tr.aux_cost};
      for (std::size_t t = 0; t < tr.aux_cost.size(); ++t) {
        const std::uint32_t e = tr.episode.events[t];
        csv << t << "," << format_double(tr.aux_cost[t]) << "," << ((e & env::kKeyPickup) ? 1 : 0)
            << "," << ((e & env::kDoorUnlock) ? 1 : 0) << ","
            << ((e & env::kGoalReached) ? 1 : 0) << "\n";
        s.x.push_back(static_cast<double>(t));
      }
      write_text(dir / "trace.csv", csv.str());
      write_line_chart((dir / "trace.svg").string(), "auxiliary cost along one episode", "step",
                       "aux cost", {s});
      write_manifest(dir, tracec);
      out << "length=" << tr.aux_cost.size() << " key_pickup="
          << (tr.key_pickup_step ? std::to_string(*tr.key_pickup_step) : "none") << "\n";
    } else if (nllc->parsed()) {
      require_file(nll_ckpt);
      require_file(nll_data);
      const Checkpoint ckpt = load_checkpoint(nll_ckpt);
      const env::Dataset data = env::load_dataset(nll_data);
      const NllReport r = heldout_nll(ckpt, data.episodes, nll_samples, nll_seed);
      const std::string text = "obs_nll=" + optional_text(r.obs_nll) +
                               "\ncombined_nll=" + optional_text(r.combined_nll) + "\n";
      const fs::path dir = prepare_out(nll_out);
      write_text(dir / "nll.txt", text);
      write_manifest(dir, nllc);
      out << text;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace lhz::pipe
