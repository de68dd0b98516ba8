#include "lhz/objective/objective.hpp"

#include <algorithm>
#include <cmath>

#include "lhz/diffcore/errors.hpp"
#include "lhz/format.hpp"

namespace lhz::obj {

using diff::Tensor;

void ObjectiveConfig::validate() const {
  if (!(beta >= 0.0)) throw ContractError("beta must be non-negative");
  if (!(kl_start > 0.0) || !(kl_start <= kl_cap)) {
    throw ContractError("kl_start must lie in (0, kl_cap]");
  }
  if (!(kl_increment >= 0.0)) throw ContractError("kl_increment must be non-negative");
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
}

double kl_schedule(std::uint64_t iteration, const ObjectiveConfig& config) {
  return std::min(config.kl_start + config.kl_increment * static_cast<double>(iteration),
                  config.kl_cap);
}

Var kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
  const std::size_t n = q.dim();
  if (p.dim() != n || q.log_std.size() != n || p.log_std.size() != n) {
    throw DimensionError("kl_diag_gaussian between dimensions " + std::to_string(n) + " and " +
                         std::to_string(p.dim()));
  }
  Graph& g = *q.mean.graph;
  const Tensor& mq = q.mean.value();
  const Tensor& sq = q.log_std.value();
  const Tensor& mp = p.mean.value();
  const Tensor& sp = p.log_std.value();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = mq[i] - mp[i];
    total += (sp[i] - sq[i]) + 0.5 * std::expm1(2.0 * (sq[i] - sp[i])) +
             0.5 * d * d * std::exp(-2.0 * sp[i]);
  }
  const std::uint32_t mqi = q.mean.id, sqi = q.log_std.id, mpi = p.mean.id, spi = p.log_std.id;
  return g.make(Tensor::scalar(total), {q.mean, q.log_std, p.mean, p.log_std},
                [mqi, sqi, mpi, spi](Graph& gr, const Tensor& gy) {
                  const Tensor& mq = gr.value(mqi);
                  const Tensor& sq = gr.value(sqi);
                  const Tensor& mp = gr.value(mpi);
                  const Tensor& sp = gr.value(spi);
                  Tensor* gmq = gr.grad_target(mqi);
                  Tensor* gsq = gr.grad_target(sqi);
                  Tensor* gmp = gr.grad_target(mpi);
                  Tensor* gsp = gr.grad_target(spi);
                  for (std::size_t i = 0; i < mq.size(); ++i) {
                    const double inv_vp = std::exp(-2.0 * sp[i]);
                    const double vq = std::exp(2.0 * sq[i]);
                    const double d = mq[i] - mp[i];
                    if (gmq) (*gmq)[i] += gy[0] * d * inv_vp;
                    if (gmp) (*gmp)[i] -= gy[0] * d * inv_vp;
                    if (gsq) (*gsq)[i] += gy[0] * (vq * inv_vp - 1.0);
                    if (gsp) (*gsp)[i] += gy[0] * (1.0 - (vq + d * d) * inv_vp);
                  }
                });
}

namespace {

Var sum_vars(Graph& g, const std::vector<Var>& xs) {
  if (xs.empty()) return g.scalar(0.0);
  return diff::sum(diff::concat(xs));
}

}  // namespace

LossBreakdown elbo(Graph& g, const std::vector<StepRecord>& records, double kl_weight) {
  if (records.empty()) throw ContractError("elbo needs at least one step record");
  std::vector<Var> obs, act, kl;
  for (const auto& r : records) {
    obs.push_back(r.obs_loglik);
    act.push_back(r.act_loglik);
    kl.push_back(kl_diag_gaussian(r.posterior, r.prior));
  }
  Var obs_sum = sum_vars(g, obs), act_sum = sum_vars(g, act), kl_sum = sum_vars(g, kl);
  LossBreakdown out;
  out.obs_recon = obs_sum.item();
  out.act_recon = act_sum.item();
  out.kl_total = kl_sum.item();
  out.kl_weight_used = kl_weight;
  out.total_var = -((obs_sum + act_sum) - kl_weight * kl_sum);
  out.total = out.total_var.item();
  return out;
}

Var aux_cost(Graph& g, const SequenceModel& model, const std::vector<Var>& latents,
             const std::vector<seq::BackwardState>& backward_states) {
  if (latents.size() != backward_states.size()) {
    throw DimensionError("aux_cost got " + std::to_string(latents.size()) + " latents and " +
                         std::to_string(backward_states.size()) + " backward states");
  }
  std::vector<Var> terms;
  terms.reserve(latents.size());
  for (std::size_t t = 0; t < latents.size(); ++t) {
    terms.push_back(model.aux_decode(g, latents[t]).log_prob(diff::detach(backward_states[t].b)));
  }
  return sum_vars(g, terms);
}

Var aux_cost(Graph& g, const SequenceModel& model, const std::vector<StepRecord>& records) {
  std::vector<Var> terms;
  terms.reserve(records.size());
  for (const auto& r : records) {
    terms.push_back(model.aux_decode(g, r.z_aux).log_prob(r.b_target));
  }
  return sum_vars(g, terms);
}

LossBreakdown weighted_loss(Graph& g, const SequenceModel& model, const Trajectory& traj,
                            double beta, double kl_weight, Rng& rng,
                            const seq::PassOptions& pass) {
  seq::PassOptions p = pass;
  p.aux_chain = true;
  const auto records = model.teacher_forced_pass(g, traj, rng, p);
  std::vector<Var> obs, act, kl;
  for (const auto& r : records) {
    obs.push_back(r.obs_loglik);
    act.push_back(r.act_loglik);
    kl.push_back(kl_diag_gaussian(r.posterior, r.prior));
  }
  Var obs_sum = sum_vars(g, obs), act_sum = sum_vars(g, act), kl_sum = sum_vars(g, kl);
  Var aux_sum = aux_cost(g, model, records);
  LossBreakdown out;
  out.obs_recon = obs_sum.item();
  out.act_recon = act_sum.item();
  out.kl_total = kl_sum.item();
  out.aux_total = aux_sum.item();
  out.kl_weight_used = kl_weight;
  out.beta_used = beta;
  out.total_var = -(((obs_sum + act_sum) + beta * aux_sum) - kl_weight * kl_sum);
  out.total = out.total_var.item();
  return out;
}

LossBreakdown total_loss(Graph& g, const SequenceModel& model, const Trajectory& traj,
                         const ObjectiveConfig& config, std::uint64_t iteration, Rng& rng,
                         const seq::PassOptions& pass) {
  seq::PassOptions p = pass;
  if (p.chunk_length == 0) p.chunk_length = config.chunk_length;
  return weighted_loss(g, model, traj, config.beta, kl_schedule(iteration, config), rng, p);
}

std::vector<Tensor> backward_state_values(const SequenceModel& model, const Trajectory& traj,
                                          std::size_t chunk_length) {
  Graph g(false);
  Rng rng = make_rng(0);
  std::vector<Tensor> out;
  for (const auto& r : model.teacher_forced_pass(g, traj, rng, {.chunk_length = chunk_length})) {
    out.push_back(r.b.b.value());
  }
  return out;
}

SequenceNll sequence_nll(const SequenceModel& model, const Trajectory& traj,
                         std::size_t num_samples, Rng& rng, std::size_t chunk_length) {
  if (num_samples < 1) throw ContractError("sequence_nll needs at least one sample");
  std::vector<double> log_w_all, log_w_obs;
  for (std::size_t k = 0; k < num_samples; ++k) {
    Graph g(false);
    const auto records = model.teacher_forced_pass(g, traj, rng, {.chunk_length = chunk_length});
    double obs = 0.0, act = 0.0, latent = 0.0;
    for (const auto& r : records) {
      obs += r.obs_loglik.item();
      act += r.act_loglik.item();
      latent += r.prior.log_prob(r.z.z).item() - r.posterior.log_prob(r.z.z).item();
    }
    log_w_all.push_back(obs + act + latent);
    log_w_obs.push_back(obs + latent);
  }
  auto neg_log_mean_exp = [](const std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return -(mx + std::log(acc / static_cast<double>(v.size())));
  };
  return {neg_log_mean_exp(log_w_all), neg_log_mean_exp(log_w_obs)};
}

double negated_elbo(const SequenceModel& model, const Trajectory& traj, Rng& rng,
                    std::size_t chunk_length) {
  Graph g(false);
  return weighted_loss(g, model, traj, 0.0, 1.0, rng, {.chunk_length = chunk_length}).total;
}

std::string metrics_header() {
  return "iteration,total,obs_recon,act_recon,kl_total,aux_total,kl_weight";
}

std::string metrics_row(std::uint64_t iteration, const LossBreakdown& l) {
  return std::to_string(iteration) + "," + format_double(l.total) + "," +
         format_double(l.obs_recon) + "," + format_double(l.act_recon) + "," +
         format_double(l.kl_total) + "," + format_double(l.aux_total) + "," +
         format_double(l.kl_weight_used);
}

Trainer::Trainer(SequenceModel& model, ObjectiveConfig config, std::uint64_t seed)
    : model_(model), config_(config), rng_(make_rng(seed, 0x7a11)) {
  config_.validate();
  adam_.learning_rate = config_.learning_rate;
}

LossBreakdown Trainer::step(const std::vector<const Trajectory*>& batch) {
  if (batch.empty()) throw ContractError("training batch is empty");
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossBreakdown mean;
  for (const Trajectory* traj : batch) {
    Graph g;
    const LossBreakdown l = total_loss(g, model_, *traj, config_, adam_.step, rng_);
    g.backward(inv * l.total_var);
    model_.params().accumulate_grads(g);
    mean.obs_recon += inv * l.obs_recon;
    mean.act_recon += inv * l.act_recon;
    mean.kl_total += inv * l.kl_total;
    mean.aux_total += inv * l.aux_total;
    mean.total += inv * l.total;
    mean.kl_weight_used = l.kl_weight_used;
    mean.beta_used = l.beta_used;
  }
  diff::adam_step(model_.params(), adam_);
  return mean;
}

}  // namespace lhz::obj
