#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lhz/diffcore/errors.hpp"
#include "lhz/diffcore/grad_check.hpp"
#include "lhz/envs/dataset.hpp"
#include "lhz/envs/keydoor.hpp"
#include "lhz/pipeline/chart.hpp"
#include "lhz/pipeline/cli.hpp"
#include "lhz/pipeline/pipeline.hpp"

using namespace lhz;
using namespace lhz::pipe;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(ActionKind kind, std::vector<std::size_t> dec = {5}) {
  ModelConfig c;
  c.obs_dim = 3;
  c.action_dim = kind == ActionKind::kCategorical ? 4 : 2;
  c.action_kind = kind;
  c.latent_dim = 2;
  c.hidden_dim = 6;
  c.backward_hidden_dim = 3;
  c.decoder_hidden_dims = std::move(dec);
  return c;
}

Trajectory random_trajectory(const ModelConfig& c, std::size_t T, std::uint64_t seed) {
  Rng rng = make_rng(seed, 5);
  Trajectory t;
  for (std::size_t i = 0; i <= T; ++i) t.observations.push_back(standard_normal(c.obs_dim, rng).raw());
  for (std::size_t i = 0; i < T; ++i) {
    if (c.action_kind == ActionKind::kCategorical) {
      t.actions.push_back({static_cast<double>(rng() % c.action_dim)});
    } else {
      t.actions.push_back(standard_normal(c.action_dim, rng).raw());
    }
  }
  t.rewards.assign(T, 0.0);
  return t;
}

std::string checkpoint_bytes(const Checkpoint& c) {
  std::ostringstream out;
  save_checkpoint(out, c);
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lhz_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

TrainConfig grid_train_config(const env::Environment& e, std::size_t hidden, std::size_t epochs) {
  TrainConfig tc;
  tc.model.obs_dim = e.obs_dim();
  tc.model.action_dim = e.action_dim();
  tc.model.latent_dim = 4;
  tc.model.hidden_dim = hidden;
  tc.model.backward_hidden_dim = hidden;
  tc.model.decoder_hidden_dims = {hidden};
  tc.epochs = epochs;
  return tc;
}

}  // namespace

TEST(BaselineKindTest, NamesRoundTrip) {
  for (auto k : {BaselineKind::kRecurrentPolicy, BaselineKind::kRecurrentDecoder,
                 BaselineKind::kFullModel}) {
    EXPECT_EQ(parse_kind(kind_name(k)), k);
  }
  EXPECT_THROW(parse_kind("sectar"), ContractError);
}

TEST(BaselineTest, FullModelWithoutLatentsReducesToRecurrentDecoder) {
  for (auto kind : {ActionKind::kCategorical, ActionKind::kContinuous}) {
    for (auto dec : {std::vector<std::size_t>{5}, std::vector<std::size_t>{}}) {
      const ModelConfig c = small_config(kind, dec);
      Rng rng = make_rng(3);
      const SequenceModel full(c, rng);
      const RecurrentBaseline base = RecurrentBaseline::from_full_model(full, true);
      for (std::uint64_t s = 0; s < 3; ++s) {
        const Trajectory t = random_trajectory(c, 6, s);
        diff::Graph g1(false), g2(false);
        Rng noise = make_rng(s);
        const auto lf =
            obj::weighted_loss(g1, full, t, 0.0, 0.0, noise, {.zero_latents = true});
        const auto lb = base.loss(g2, t);
        EXPECT_NEAR(lf.total, lb.total, 1e-10);
        EXPECT_NEAR(lf.obs_recon, lb.obs_recon, 1e-10);
        EXPECT_NEAR(lf.act_recon, lb.act_recon, 1e-10);
      }
    }
  }
}

TEST(BaselineTest, RecurrentPolicyLossIsPureActionLikelihood) {
  const ModelConfig c = small_config(ActionKind::kCategorical);
  Rng rng = make_rng(1);
  const RecurrentBaseline policy(c, false, rng);
  const Trajectory t = random_trajectory(c, 5, 2);
  diff::Graph g(false);
  const auto l = policy.loss(g, t);
  EXPECT_EQ(l.obs_recon, 0.0);
  EXPECT_EQ(l.kl_total, 0.0);
  EXPECT_EQ(l.aux_total, 0.0);
  EXPECT_EQ(l.total, -l.act_recon);
  EXPECT_EQ(policy.kind(), BaselineKind::kRecurrentPolicy);
  diff::Graph g2(false);
  auto h = policy.initial_state(g2, t.observations[0]);
  EXPECT_THROW(policy.decode_observation(g2, t.actions[0], h), ContractError);
}

TEST(BaselineTest, GradientsMatchFiniteDifferences) {
  for (auto kind : {ActionKind::kCategorical, ActionKind::kContinuous}) {
    const ModelConfig c = small_config(kind);
    Rng rng = make_rng(4);
    RecurrentBaseline b(c, true, rng);
    const Trajectory t = random_trajectory(c, 4, 9);
    const auto report =
        diff::grad_check([&](diff::Graph& g) { return b.loss(g, t).total_var; }, b.params(), 1e-5,
                         1e-4);
    EXPECT_TRUE(report.passed) << report.worst_param << " " << report.worst;
  }
}

TEST(BaselineTest, AdoptedParametersAreValidated) {
  const ModelConfig c = small_config(ActionKind::kCategorical);
  Rng rng = make_rng(1);
  RecurrentBaseline b(c, true, rng);
  EXPECT_NO_THROW(RecurrentBaseline(c, true, b.params()));
  EXPECT_THROW(RecurrentBaseline(c, false, b.params()), ContractError);
}

TEST(CheckpointTest, RoundTripIsByteIdentical) {
  const ModelConfig c = small_config(ActionKind::kContinuous);
  Rng rng = make_rng(2);
  Checkpoint ck = make_checkpoint(SequenceModel(c, rng));
  ck.meta["seed"] = "7";
  const std::string bytes = checkpoint_bytes(ck);
  std::istringstream in(bytes);
  const Checkpoint back = load_checkpoint(in);
  EXPECT_EQ(back.kind, BaselineKind::kFullModel);
  EXPECT_EQ(back.config, c);
  EXPECT_EQ(back.meta.at("seed"), "7");
  EXPECT_EQ(checkpoint_bytes(back), bytes);
  EXPECT_NO_THROW(full_model(back));
  EXPECT_THROW(recurrent_baseline(back), ContractError);

  std::istringstream bad("LHCK 1\nkind=full_model\n");
  EXPECT_THROW(load_checkpoint(bad), ContractError);
  std::istringstream wrong("hello\n");
  EXPECT_THROW(load_checkpoint(wrong), ContractError);
}

TEST(BcTrainTest, FullModelOverfitsFourTrajectories) {
  const ModelConfig c = small_config(ActionKind::kCategorical);
  std::vector<Trajectory> data;
  for (std::uint64_t s = 0; s < 4; ++s) data.push_back(random_trajectory(c, 6, s));
  TrainConfig tc;
  tc.model = c;
  tc.epochs = 200;
  tc.batch_size = 4;
  tc.objective.learning_rate = 1e-2;
  std::ostringstream metrics;
  bc_train(data, BaselineKind::kFullModel, tc, &metrics);
  std::istringstream rows(metrics.str());
  std::string header, row, first, last;
  std::getline(rows, header);
  EXPECT_EQ(header, "epoch," + obj::metrics_header());
  std::getline(rows, first);
  last = first;
  std::size_t n = 1;
  while (std::getline(rows, row)) {
    last = row;
    ++n;
  }
  EXPECT_EQ(n, 200u);
  auto total = [](const std::string& r) {
    std::stringstream s(r);
    std::string cell;
    std::getline(s, cell, ',');
    std::getline(s, cell, ',');
    std::getline(s, cell, ',');
    return std::stod(cell);
  };
  EXPECT_LT(total(last), total(first));
}

TEST(BcTrainTest, SameSeedGivesIdenticalCheckpoints) {
  const ModelConfig c = small_config(ActionKind::kContinuous);
  std::vector<Trajectory> data;
  for (std::uint64_t s = 0; s < 5; ++s) data.push_back(random_trajectory(c, 4, s));
  TrainConfig tc;
  tc.model = c;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.seed = 11;
  for (auto kind : {BaselineKind::kRecurrentPolicy, BaselineKind::kRecurrentDecoder,
                    BaselineKind::kFullModel}) {
    std::ostringstream m1, m2;
    const auto a = checkpoint_bytes(bc_train(data, kind, tc, &m1));
    const auto b = checkpoint_bytes(bc_train(data, kind, tc, &m2));
    EXPECT_EQ(a, b) << kind_name(kind);
    EXPECT_EQ(m1.str(), m2.str());
  }
  tc.seed = 12;
  EXPECT_NE(checkpoint_bytes(bc_train(data, BaselineKind::kFullModel, tc)),
            checkpoint_bytes(bc_train(data, BaselineKind::kFullModel, {c, {}, 3, 2, 11})));
}

TEST(BcTrainTest, RejectsMismatchedOrEmptyData) {
  const ModelConfig c = small_config(ActionKind::kCategorical);
  TrainConfig tc;
  tc.model = c;
  tc.model.obs_dim = 4;
  const std::vector<Trajectory> data = {random_trajectory(c, 3, 0)};
  EXPECT_THROW(bc_train(data, BaselineKind::kFullModel, tc), DimensionError);
  EXPECT_THROW(bc_train({}, BaselineKind::kFullModel, tc), ContractError);
}

TEST(AgentTest, GreedyEpisodesAreReproducibleAndInActionSpace) {
  env::KeyDoorEnv e;
  TrainConfig tc = grid_train_config(e, 8, 1);
  const auto data = env::generate_dataset(e, 4, 1).episodes;
  for (auto kind : {BaselineKind::kRecurrentPolicy, BaselineKind::kFullModel}) {
    const Checkpoint ck = bc_train(data, kind, tc);
    std::vector<Trajectory> runs;
    for (int i = 0; i < 2; ++i) {
      auto agent = make_agent(ck);
      Rng rng = make_rng(5);
      runs.push_back(run_episode(e, *agent, 9, rng).trajectory);
    }
    EXPECT_EQ(runs[0], runs[1]);
    for (const auto& a : runs[0].actions) {
      EXPECT_NO_THROW(seq::validate_action(a, ActionKind::kCategorical, e.action_dim()));
    }
    Rng rng = make_rng(6);
    Trajectory prefix;
    prefix.observations.assign(runs[0].observations.begin(), runs[0].observations.begin() + 3);
    prefix.actions.assign(runs[0].actions.begin(), runs[0].actions.begin() + 2);
    const Action a = act_from_model(ck, prefix, e, SampleMode::kSample, rng);
    EXPECT_NO_THROW(seq::validate_action(a, ActionKind::kCategorical, e.action_dim()));
  }
}

TEST(AgentTest, ContinuousActionsAreClamped) {
  const ModelConfig c = small_config(ActionKind::kContinuous);
  Rng rng = make_rng(1);
  SequenceModel m(c, rng);
  m.params().at("act_dec.out.b").value.fill(40.0);
  auto agent = make_agent(make_checkpoint(m), SampleMode::kSample);
  agent->begin({0.0, 0.0, 0.0});
  env::KeyDoorEnv unused;
  for (int i = 0; i < 20; ++i) {
    for (double v : agent->act(unused, rng)) EXPECT_LE(std::abs(v), 1.0);
    agent->observe({0.0, 0.0}, {0.1, 0.2, 0.3});
  }
}

TEST(EvaluateTest, RandomAndExpertReferenceAgents) {
  env::KeyDoorEnv e;
  EvalConfig ec;
  ec.episodes = 100;
  ec.seed = 3;
  auto random = make_random_agent();
  EXPECT_LT(evaluate_agent(e, *random, "random", ec).success_rate, 0.05);
  auto expert = make_expert_agent();
  const auto r = evaluate_agent(e, *expert, "expert", ec);
  EXPECT_EQ(r.success_rate, 1.0);
  EXPECT_TRUE(r.reward_stderr.has_value());
  ec.episodes = 1;
  EXPECT_FALSE(evaluate_agent(e, *expert, "expert", ec).reward_stderr.has_value());
  ec.episodes = 0;
  EXPECT_THROW(evaluate_agent(e, *expert, "expert", ec), ContractError);
}

TEST(EvaluateTest, SummaryMatchesHandComputedStandardError) {
  const Summary s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  // sample sd = sqrt(5/3), stderr = sd / 2
  EXPECT_NEAR(*s.standard_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_FALSE(summarize({1.0}).standard_error.has_value());
}

TEST(EvaluateTest, NllDefinitionsPerKind) {
  const ModelConfig c = small_config(ActionKind::kCategorical);
  std::vector<Trajectory> data;
  for (std::uint64_t s = 0; s < 3; ++s) data.push_back(random_trajectory(c, 4, s));
  TrainConfig tc;
  tc.model = c;
  tc.epochs = 1;
  const auto policy = bc_train(data, BaselineKind::kRecurrentPolicy, tc);
  EXPECT_FALSE(heldout_nll(policy, data, 10, 0).obs_nll.has_value());
  const auto decoder = bc_train(data, BaselineKind::kRecurrentDecoder, tc);
  const auto dn = heldout_nll(decoder, data, 10, 0);
  double expected = 0.0;
  const auto base = recurrent_baseline(decoder);
  for (const auto& t : data) {
    diff::Graph g(false);
    expected -= base.loss(g, t).obs_recon;
  }
  EXPECT_NEAR(*dn.obs_nll, expected / 3.0, 1e-12);
  const auto full = bc_train(data, BaselineKind::kFullModel, tc);
  const auto fn = heldout_nll(full, data, 10, 0);
  EXPECT_TRUE(fn.obs_nll.has_value());
  EXPECT_EQ(fn.obs_nll, heldout_nll(full, data, 10, 0).obs_nll);
}

TEST(EvaluateTest, TrainedFullModelCollectsKeyMoreOftenThanRandom) {
  env::KeyDoorEnv e;
  const auto data = env::generate_dataset(e, 200, 21).episodes;
  TrainConfig tc = grid_train_config(e, 16, 30);
  tc.objective.learning_rate = 5e-3;
  const Checkpoint ck = bc_train(data, BaselineKind::kFullModel, tc);
  EvalConfig ec;
  ec.episodes = 50;
  ec.seed = 77;
  auto key_rate = [](const std::vector<Episode>& eps) {
    double n = 0.0;
    for (const auto& ep : eps) {
      for (auto ev : ep.events) {
        if (ev & env::kKeyPickup) {
          n += 1.0;
          break;
        }
      }
    }
    return n / static_cast<double>(eps.size());
  };
  std::vector<Episode> model_eps, random_eps;
  auto agent = make_agent(ck);
  evaluate_agent(e, *agent, "full_model", ec, &model_eps);
  auto random = make_random_agent();
  evaluate_agent(e, *random, "random", ec, &random_eps);
  EXPECT_GT(key_rate(model_eps), key_rate(random_eps) + 0.2)
      << key_rate(model_eps) << " vs " << key_rate(random_eps);
}

TEST(SubgoalTraceTest, LengthAndMarkers) {
  env::KeyDoorEnv e;
  const auto data = env::generate_dataset(e, 4, 2).episodes;
  TrainConfig tc = grid_train_config(e, 8, 1);
  const Checkpoint ck = bc_train(data, BaselineKind::kFullModel, tc);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SubgoalTrace tr = subgoal_trace(ck, e, s, s);
    EXPECT_EQ(tr.aux_cost.size(), tr.episode.trajectory.length());
    for (std::size_t t = 0; t < tr.episode.events.size(); ++t) {
      if (tr.episode.events[t] & env::kKeyPickup) {
        EXPECT_EQ(tr.key_pickup_step, t);
        break;
      }
    }
    if (!tr.key_pickup_step) {
      for (auto ev : tr.episode.events) EXPECT_FALSE(ev & env::kKeyPickup);
    }
  }
  // A scripted episode where the key is certainly collected.
  const Trajectory expert = env::rollout(e, 5, [](const env::Environment& x) {
    return x.expert_action();
  });
  const auto series = aux_cost_series(full_model(ck), expert, 1);
  EXPECT_EQ(series.size(), expert.length());
  EXPECT_THROW(subgoal_trace(bc_train(data, BaselineKind::kRecurrentPolicy, tc), e, 0, 0),
               ContractError);
}

TEST(ChartTest, EmitsOnePolylinePerSeries) {
  std::ostringstream out;
  write_line_chart(out, "a < b", "x", "y",
                   {{"one", {0, 1, 2}, {1, 2, 3}}, {"two", {0, 1}, {NAN, 4}}});
  const std::string svg = out.str();
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t count = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos;
       p = svg.find("<polyline", p + 1)) {
    ++count;
  }
  EXPECT_EQ(count, 2u);
  EXPECT_NE(svg.find("a &lt; b"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(CliTest, TrainWritesArtifactsAndRerunsFromManifest) {
  const fs::path root = scratch("train");
  ASSERT_EQ(cli({"gen-data", "--episodes", "6", "--seed", "2", "--out", (root / "d").string()}).code,
            0);
  const std::string data = (root / "d" / "train.lhds").string();
  const auto r = cli({"train", "--data", data, "--kind", "full_model", "--epochs", "1", "--seed",
                      "7", "--hidden-dim", "8", "--out", (root / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.lhck", "metrics.csv", "manifest.txt", "loss.svg"}) {
    EXPECT_TRUE(fs::exists(root / "a" / f)) << f;
  }
  const auto again = cli({"train", "--config", (root / "a" / "manifest.txt").string(), "--out",
                          (root / "b").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(root / "a" / "checkpoint.lhck"), slurp(root / "b" / "checkpoint.lhck"));
  EXPECT_EQ(slurp(root / "a" / "metrics.csv"), slurp(root / "b" / "metrics.csv"));
}

TEST(CliTest, FlagsOverrideConfigValues) {
  const fs::path root = scratch("override");
  ASSERT_EQ(cli({"gen-data", "--episodes", "3", "--out", (root / "d").string()}).code, 0);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "run.cfg");
    cfg << "# comment\ndata=" << (root / "d" / "train.lhds").string()
        << "\nepochs=1\nhidden-dim=4\nseed=5\n";
  }
  ASSERT_EQ(cli({"train", "--config", (root / "run.cfg").string(), "--seed", "9", "--out",
                 (root / "o").string()})
                .code,
            0);
  const std::string manifest = slurp(root / "o" / "manifest.txt");
  EXPECT_NE(manifest.find("seed=9\n"), std::string::npos);
  EXPECT_NE(manifest.find("hidden-dim=4\n"), std::string::npos);
}

TEST(CliTest, UsageErrorsExitWithTwo) {
  const auto missing = cli({"train", "--data", "/no/such/dataset.lhds", "--out", "/tmp/x"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("/no/such/dataset.lhds"), std::string::npos);
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);
  EXPECT_EQ(cli({"train", "--frobnicate", "1"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"train", "--config", "/no/such.cfg", "--out", "/tmp/x"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(CliTest, NllIsIdenticalAcrossInvocations) {
  const fs::path root = scratch("nll");
  ASSERT_EQ(cli({"gen-data", "--episodes", "30", "--seed", "4", "--out", (root / "d").string()}).code,
            0);
  ASSERT_EQ(cli({"train", "--data", (root / "d" / "train.lhds").string(), "--epochs", "1",
                 "--hidden-dim", "8", "--out", (root / "t").string()})
                .code,
            0);
  std::vector<std::string> outs;
  for (int i = 0; i < 2; ++i) {
    const auto r = cli({"nll", "--checkpoint", (root / "t" / "checkpoint.lhck").string(), "--data",
                        (root / "d" / "train.lhds").string(), "--samples", "5", "--seed", "3",
                        "--out", (root / ("n" + std::to_string(i))).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    outs.push_back(r.out);
  }
  EXPECT_EQ(outs[0], outs[1]);
  EXPECT_NE(outs[0].find("obs_nll="), std::string::npos);
}

TEST(CliTest, OtherSubcommandsProduceArtifacts) {
  const fs::path root = scratch("others");
  ASSERT_EQ(cli({"gen-data", "--episodes", "5", "--out", (root / "d").string()}).code, 0);
  ASSERT_EQ(cli({"train", "--data", (root / "d" / "train.lhds").string(), "--epochs", "1",
                 "--hidden-dim", "8", "--out", (root / "t").string()})
                .code,
            0);
  const std::string ck = (root / "t" / "checkpoint.lhck").string();
  EXPECT_EQ(cli({"eval", "--checkpoint", ck, "--episodes", "2", "--out", (root / "e").string()}).code,
            0);
  EXPECT_TRUE(fs::exists(root / "e" / "report.txt"));
  EXPECT_EQ(cli({"trace", "--checkpoint", ck, "--out", (root / "tr").string()}).code, 0);
  EXPECT_TRUE(fs::exists(root / "tr" / "trace.svg"));
  EXPECT_EQ(cli({"plan", "--checkpoint", ck, "--m", "4", "--k", "2", "--steps", "4", "--out",
                 (root / "p").string()})
                .code,
            0);
  EXPECT_TRUE(fs::exists(root / "p" / "plan.csv"));
  const auto ex = cli({"explore", "--iterations", "1", "--warmup", "2", "--warmup-model-steps",
                       "1", "--per-iteration", "2", "--model-steps", "1", "--mpc-steps", "3",
                       "--m", "2", "--k", "1", "--hidden-dim", "4", "--latent-dim", "2",
                       "--out", (root / "x").string()});
  EXPECT_EQ(ex.code, 0) << ex.err;
  for (const char* f : {"metrics.csv", "checkpoint.lhck", "buffer.lhds", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(root / "x" / f)) << f;
  }
}
