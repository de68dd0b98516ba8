#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lhz/diffcore/adam.hpp"
#include "lhz/seqmodel/model.hpp"

namespace lhz::obj {

using diff::Graph;
using diff::Var;
using seq::DiagGaussian;
using seq::SequenceModel;
using seq::StepRecord;

struct ObjectiveConfig {
  double beta = 0.0005;
  double kl_start = 0.2;
  double kl_increment = 0.0005;
  double kl_cap = 1.0;
  double learning_rate = 1e-3;
  // Steps per chunk when unrolling long trajectories; 0 disables chunking.
  std::size_t chunk_length = 250;

  // Throws ContractError unless beta >= 0, 0 < kl_start <= kl_cap, kl_increment >= 0.
  void validate() const;
};

// min(kl_start + kl_increment * iteration, kl_cap)
double kl_schedule(std::uint64_t iteration, const ObjectiveConfig& config);

// Closed-form KL(q || p) summed over dimensions.
Var kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p);

struct LossBreakdown {
  double obs_recon = 0.0;
  double act_recon = 0.0;
  double kl_total = 0.0;
  double aux_total = 0.0;
  double total = 0.0;
  double kl_weight_used = 0.0;
  double beta_used = 0.0;
  Var total_var;  // differentiable handle for `total`
};

// Reconstruction minus weighted KL; aux_total is left at zero.
LossBreakdown elbo(Graph& g, const std::vector<StepRecord>& records, double kl_weight);

// Σ_t log p_ζ(b_t | z_t) with every b_t detached.
Var aux_cost(Graph& g, const SequenceModel& model, const std::vector<Var>& latents,
             const std::vector<seq::BackwardState>& backward_states);
Var aux_cost(Graph& g, const SequenceModel& model, const std::vector<StepRecord>& records);

// total = −(obs_recon + act_recon + β·aux_total − w·kl_total), w = kl_schedule(iteration).
LossBreakdown total_loss(Graph& g, const SequenceModel& model, const Trajectory& traj,
                         const ObjectiveConfig& config, std::uint64_t iteration, Rng& rng,
                         const seq::PassOptions& pass = {});
// Same, with an explicit KL weight instead of the schedule.
LossBreakdown weighted_loss(Graph& g, const SequenceModel& model, const Trajectory& traj,
                            double beta, double kl_weight, Rng& rng,
                            const seq::PassOptions& pass = {});

// Backward-state values b_1..b_T as the teacher-forced pass computes them.
// Passing these as PassOptions::frozen_backward turns the stop-gradient into
// an explicit constant, which is what finite-difference checks must perturb
// around.
std::vector<diff::Tensor> backward_state_values(const SequenceModel& model, const Trajectory& traj,
                                                std::size_t chunk_length);

struct SequenceNll {
  double combined = 0.0;  // observations and actions
  double obs_only = 0.0;
};

// Importance-weighted bound with posterior proposals and sampled latent terms.
SequenceNll sequence_nll(const SequenceModel& model, const Trajectory& traj,
                         std::size_t num_samples, Rng& rng, std::size_t chunk_length = 0);

// Single-sample negated ELBO with analytic KL at weight 1 and no auxiliary term.
double negated_elbo(const SequenceModel& model, const Trajectory& traj, Rng& rng,
                    std::size_t chunk_length = 0);

std::string metrics_header();
std::string metrics_row(std::uint64_t iteration, const LossBreakdown& loss);

// Adam over a model's parameters; batch losses are averaged over trajectories.
class Trainer {
 public:
  Trainer(SequenceModel& model, ObjectiveConfig config, std::uint64_t seed);

  // One optimizer step on the batch; returns the batch-mean breakdown
  // evaluated before the update.
  LossBreakdown step(const std::vector<const Trajectory*>& batch);

  std::uint64_t iteration() const { return adam_.step; }
  const ObjectiveConfig& config() const { return config_; }
  SequenceModel& model() { return model_; }

 private:
  SequenceModel& model_;
  ObjectiveConfig config_;
  diff::AdamState adam_;
  Rng rng_;
};

}  // namespace lhz::obj
