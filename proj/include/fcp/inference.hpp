#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/parallel.hpp"
#include "fcp/policy.hpp"
#include "fcp/random.hpp"
#include "fcp/sampler.hpp"
#include "fcp/semantics.hpp"
#include "fcp/stats.hpp"

namespace fcp {

/// Free (data-independent) variational parameters: a diagonal Gaussian over
/// the preference vector w and a log-normal over the inverse temperature
/// beta, plus the semantic parameter store and the score-function baseline.
struct VariationalState {
  std::vector<double> w_mean;
  std::vector<double> w_log_scale;
  double beta_loc = 0.0;
  double beta_log_scale = 0.0;
  std::shared_ptr<SemanticBinding> binding;
  double baseline = 0.0;
  double baseline_decay = 0.9;
  long step = 0;
};

inline VariationalState make_variational_state(int policy_dim,
                                               std::shared_ptr<SemanticBinding> binding) {
  VariationalState vs;
  vs.w_mean.assign(static_cast<std::size_t>(policy_dim), 0.0);
  vs.w_log_scale.assign(static_cast<std::size_t>(policy_dim), 0.0);
  vs.binding = std::move(binding);
  return vs;
}

/// One proposed latent configuration: structure, globals (inside sm), latent
/// trace z, and the reparameterization noises needed for pathwise gradients.
struct WeightedSample {
  SampledMorphism sm;
  ConcreteMap map;
  std::vector<double> z;
  std::vector<double> eps_w;
  double eps_beta = 0.0;
  double log_weight = kNegInf;
};

/// Draws (w, beta) from the proposal by location-scale reparameterization,
/// then the structure from the prior conditional and z from its standard
/// normal. Sampler dead-ends are retried up to the restart budget.
inline WeightedSample propose(const VariationalState& vs,
                              const std::shared_ptr<const PolicyContext>& ctx, const Quiver& q,
                              const Diagram& d, const SampleConfig& cfg, Rng& rng) {
  WeightedSample ws;
  ws.eps_beta = rng.normal();
  double beta = std::exp(vs.beta_loc + std::exp(vs.beta_log_scale) * ws.eps_beta);
  ws.eps_w = rng.normal_vector(vs.w_mean.size());
  std::vector<double> w(vs.w_mean.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = vs.w_mean[i] + std::exp(vs.w_log_scale[i]) * ws.eps_w[i];

  PolicyState ps = make_policy_state(ctx, std::move(w), beta);
  int budget = cfg.max_restarts;
  for (;;) {
    try {
      ws.sm = sample_morphism(ps, q, d, cfg, rng);
      break;
    } catch (const DeadEndError&) {
      if (budget-- <= 0) throw;
    } catch (const RestartsExhaustedError&) {
      if (budget-- <= 0) throw;
    }
  }
  ws.map = apply_functor(*vs.binding, ws.sm.morphism);
  ws.z = rng.normal_vector(static_cast<std::size_t>(ws.map.latent_dim));
  return ws;
}

namespace detail {

inline double proposal_log_density_globals(const VariationalState& vs,
                                           std::span<const double> w, double beta) {
  double lq = lognormal_logpdf(beta, vs.beta_loc, std::exp(vs.beta_log_scale));
  for (std::size_t i = 0; i < w.size(); ++i)
    lq += normal_logpdf(w[i], vs.w_mean[i], std::exp(vs.w_log_scale[i]));
  return lq;
}

inline double prior_log_density_globals(std::span<const double> w, double beta) {
  return exp1_logpdf(beta) + std_normal_logpdf(w);
}

}  // namespace detail

/// Importance weight in the cancelled form: the proposal's structure factor
/// equals the generative conditional and q(z) equals p(z), so
///   log w = log p(x | F(f), z) + log p(beta) + log p(w)
///           - log q(beta) - log q(w).
/// Debug mode recomputes the full uncancelled ratio (structure term and
/// z-density on both sides, structure freshly re-evaluated) and checks the
/// two agree to 1e-9.
inline double log_weight(WeightedSample& ws, const VariationalState& vs,
                         const std::shared_ptr<const PolicyContext>& ctx, const Quiver& q,
                         std::span<const double> x, bool debug = false) {
  const SemanticBinding& b = *vs.binding;
  std::vector<double> mean = map_forward(b, ws.map, {}, ws.z);
  if (mean.size() != x.size()) throw DimensionError("log_weight: data dimension mismatch");
  double gauss = gaussian_logpdf(x, mean, b.tau());
  double lw = gauss + detail::prior_log_density_globals(ws.sm.w, ws.sm.beta) -
              detail::proposal_log_density_globals(vs, ws.sm.w, ws.sm.beta);
  if (debug) {
    PolicyState ps = make_policy_state(ctx, ws.sm.w, ws.sm.beta);
    double structure = structure_log_prob(ps, q, ws.sm.morphism);
    if (std::abs(structure - ws.sm.log_prob_structure) > 1e-9)
      throw NumericalError("log_weight: stored structure log-prob does not recompute");
    double lz = std_normal_logpdf(ws.z);
    double log_p_joint = gauss + lz + structure +
                         detail::prior_log_density_globals(ws.sm.w, ws.sm.beta);
    double log_q_joint = lz + structure +
                         detail::proposal_log_density_globals(vs, ws.sm.w, ws.sm.beta);
    double uncancelled = log_p_joint - log_q_joint;
    if (std::isfinite(lw) && std::abs(uncancelled - lw) > 1e-9)
      throw NumericalError("log_weight: cancelled and uncancelled forms disagree");
  }
  ws.log_weight = lw;
  return lw;
}

/// Stable log-mean-exp of the weights: the marginal-density estimator.
inline double estimate_log_evidence(std::span<const double> log_weights) {
  if (log_weights.empty()) throw ValidationError("estimate_log_evidence: need K >= 1");
  return log_mean_exp(log_weights);
}

inline double estimate_log_evidence(std::span<const WeightedSample> samples) {
  std::vector<double> lw;
  lw.reserve(samples.size());
  for (const auto& s : samples) lw.push_back(s.log_weight);
  return estimate_log_evidence(lw);
}

/// Mean log-weight: the ELBO estimator (never exceeds log-mean-exp).
inline double elbo_estimate(std::span<const double> log_weights) {
  if (log_weights.empty()) throw ValidationError("elbo_estimate: need K >= 1");
  return mean(log_weights);
}

inline double elbo_estimate(std::span<const WeightedSample> samples) {
  std::vector<double> lw;
  lw.reserve(samples.size());
  for (const auto& s : samples) lw.push_back(s.log_weight);
  return elbo_estimate(lw);
}

/// Normalized weights (softmax of log-weights); all -inf is an error.
inline std::vector<double> normalized_weights(std::span<const double> log_weights) {
  double lse = log_sum_exp(log_weights);
  if (lse == kNegInf) throw NumericalError("weights: every log-weight is -inf");
  std::vector<double> p(log_weights.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_weights[i] - lse);
  return p;
}

inline double effective_sample_size(std::span<const double> log_weights) {
  std::vector<double> p = normalized_weights(log_weights);
  double s2 = 0.0;
  for (double x : p) s2 += x * x;
  return 1.0 / s2;
}

/// Systematic resampling proportional to the normalized weights.
inline std::vector<Morphism> resample_posterior(std::span<const WeightedSample> samples, int m,
                                                Rng& rng) {
  if (m <= 0) throw ValidationError("resample_posterior: m must be positive");
  std::vector<double> lw;
  lw.reserve(samples.size());
  for (const auto& s : samples) lw.push_back(s.log_weight);
  std::vector<double> p = normalized_weights(lw);
  std::vector<Morphism> out;
  out.reserve(static_cast<std::size_t>(m));
  double u = rng.uniform() / static_cast<double>(m);
  std::size_t i = 0;
  double cum = p[0];
  for (int k = 0; k < m; ++k) {
    double point = u + static_cast<double>(k) / static_cast<double>(m);
    while (point > cum && i + 1 < p.size()) cum += p[++i];
    out.push_back(samples[i].sm.morphism);
  }
  return out;
}

/// d log P(f | w, beta) / d(beta, w): the score pieces of the hybrid
/// gradient estimator, expansions included.
struct StructureGrad {
  double dbeta = 0.0;
  std::vector<double> dw;
};

namespace detail {

inline void structure_grad_rec(const PolicyState& ps, const Quiver& q, const Morphism& m,
                               StructureGrad& g) {
  for (const auto& factor : m.factors) {
    VertexId at = factor.src;
    for (const auto& step : factor.steps) {
      LocalPolicy lp = local_policy(ps, at, factor.dst);
      int idx = lp.find(step.edge);
      if (idx < 0) throw TypeError("structure grad: edge not available at vertex");
      double beta = ps.beta;
      // d log pi / d beta = (sum_e' pi a' - a_chosen) / beta^2 over live edges.
      double mean_a = 0.0;
      double mean_da = 0.0;
      for (std::size_t e = 0; e < lp.edges.size(); ++e) {
        if (lp.a[e] == kNegInf) continue;
        mean_a += lp.probs[e] * lp.a[e];
        mean_da += lp.probs[e] * lp.da_dw_target[e];
      }
      std::size_t ui = static_cast<std::size_t>(idx);
      g.dbeta += (mean_a - lp.a[ui]) / (beta * beta);
      int col = ps.graph().object_index(factor.dst);
      g.dw[static_cast<std::size_t>(col)] += (lp.da_dw_target[ui] - mean_da) / beta;
      if (step.expansion) structure_grad_rec(ps, q, *step.expansion, g);
      at = q.edge(step.edge).cod;
    }
  }
}

}  // namespace detail

inline StructureGrad structure_log_prob_grad(const PolicyState& ps, const Quiver& q,
                                             const Morphism& m) {
  StructureGrad g;
  g.dw.assign(static_cast<std::size_t>(ps.graph().size()), 0.0);
  detail::structure_grad_rec(ps, q, m, g);
  return g;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int particles = 8;
  bool train_theta = true;
  SampleConfig sample;
};

struct StepDiagnostics {
  double elbo = kNegInf;
  double grad_norm = 0.0;
  double ess = 0.0;
  bool skipped = false;
};

namespace detail {

/// Per-(datum, particle) contribution to the step gradient.
struct ParticleResult {
  double lw = kNegInf;
  double g_beta_loc = 0.0, g_beta_log_scale = 0.0;
  std::vector<double> g_w_mean, g_w_log_scale;
  std::vector<double> g_theta;
  double score_dbeta_loc = 0.0, score_dbeta_log_scale = 0.0;
  std::vector<double> score_dw_mean, score_dw_log_scale;
  bool failed = false;
};

}  // namespace detail

/// One stochastic-gradient ascent step on the ELBO: pathwise gradients for
/// q_w, q_beta and theta, a baseline-subtracted score-function term for the
/// discrete path choices, and an EMA baseline update. Non-finite gradients
/// skip the update (step counter still advances).
inline StepDiagnostics train_step(VariationalState& vs,
                                  const std::vector<std::vector<double>>& batch,
                                  const std::shared_ptr<const PolicyContext>& ctx,
                                  const Quiver& q, const Diagram& d, const TrainConfig& cfg,
                                  std::uint64_t seed) {
  const std::size_t n_data = batch.size();
  const std::size_t k = static_cast<std::size_t>(cfg.particles);
  const std::size_t total = n_data * k;
  const std::size_t dim = vs.w_mean.size();
  const SemanticBinding& b = *vs.binding;
  const double tau = b.tau();

  std::vector<detail::ParticleResult> results(total);
  parallel_for(total, [&](std::size_t idx) {
    detail::ParticleResult& r = results[idx];
    std::size_t datum = idx / k;
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(vs.step) * 1000003ULL + idx);
    try {
      WeightedSample ws = propose(vs, ctx, q, d, cfg.sample, rng);
      const std::vector<double>& x = batch[datum];
      LikelihoodGrad lg = log_likelihood_grad(b, ws.map, x, ws.z, tau);
      double gauss = lg.log_likelihood - std_normal_logpdf(ws.z);
      r.lw = gauss + detail::prior_log_density_globals(ws.sm.w, ws.sm.beta) -
             detail::proposal_log_density_globals(vs, ws.sm.w, ws.sm.beta);
      r.g_theta = std::move(lg.grad_theta);

      // Pathwise terms. With w = mu + sigma eps and beta = exp(loc + s eps):
      // d lw / d mu_i         = -w_i
      // d lw / d log sigma_i  = -w_i sigma_i eps_i + 1
      // d lw / d loc          = 1 - beta
      // d lw / d log s        = (1 - beta) s eps + 1
      r.g_w_mean.resize(dim);
      r.g_w_log_scale.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        double sigma = std::exp(vs.w_log_scale[i]);
        r.g_w_mean[i] = -ws.sm.w[i];
        r.g_w_log_scale[i] = -ws.sm.w[i] * sigma * ws.eps_w[i] + 1.0;
      }
      double s_beta = std::exp(vs.beta_log_scale);
      r.g_beta_loc = 1.0 - ws.sm.beta;
      r.g_beta_log_scale = (1.0 - ws.sm.beta) * s_beta * ws.eps_beta + 1.0;

      // Score pieces: grad of log P(f | w, beta) through the reparameterized
      // globals; multiplied by the centered weight during the reduction.
      PolicyState ps = make_policy_state(ctx, ws.sm.w, ws.sm.beta);
      StructureGrad sg = structure_log_prob_grad(ps, q, ws.sm.morphism);
      r.score_dbeta_loc = sg.dbeta * ws.sm.beta;
      r.score_dbeta_log_scale = sg.dbeta * ws.sm.beta * s_beta * ws.eps_beta;
      r.score_dw_mean = sg.dw;
      r.score_dw_log_scale.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        double sigma = std::exp(vs.w_log_scale[i]);
        r.score_dw_log_scale[i] = sg.dw[i] * sigma * ws.eps_w[i];
      }
    } catch (const Error&) {
      r.failed = true;
    }
  });

  // Serial reduction in index order keeps the update bit-deterministic for
  // any concurrency width.
  std::vector<double> lws;
  lws.reserve(total);
  double inv = 0.0;
  std::size_t ok = 0;
  for (const auto& r : results)
    if (!r.failed) ++ok;
  if (ok == 0) throw NumericalError("train_step: every particle failed");
  inv = 1.0 / static_cast<double>(ok);

  std::vector<double> g_w_mean(dim, 0.0), g_w_log_scale(dim, 0.0);
  double g_beta_loc = 0.0, g_beta_log_scale = 0.0;
  std::vector<double> g_theta(b.theta_size(), 0.0);
  for (const auto& r : results) {
    if (r.failed) continue;
    lws.push_back(r.lw);
    double c = r.lw - vs.baseline;
    g_beta_loc += inv * (r.g_beta_loc + c * r.score_dbeta_loc);
    g_beta_log_scale += inv * (r.g_beta_log_scale + c * r.score_dbeta_log_scale);
    for (std::size_t i = 0; i < dim; ++i) {
      g_w_mean[i] += inv * (r.g_w_mean[i] + c * r.score_dw_mean[i]);
      g_w_log_scale[i] += inv * (r.g_w_log_scale[i] + c * r.score_dw_log_scale[i]);
    }
    for (std::size_t i = 0; i < g_theta.size(); ++i) g_theta[i] += inv * r.g_theta[i];
  }

  StepDiagnostics diag;
  diag.elbo = elbo_estimate(lws);
  diag.ess = effective_sample_size(lws);
  double norm2 = g_beta_loc * g_beta_loc + g_beta_log_scale * g_beta_log_scale;
  for (std::size_t i = 0; i < dim; ++i)
    norm2 += g_w_mean[i] * g_w_mean[i] + g_w_log_scale[i] * g_w_log_scale[i];
  if (cfg.train_theta)
    for (double gt : g_theta) norm2 += gt * gt;
  diag.grad_norm = std::sqrt(norm2);

  bool finite = std::isfinite(diag.grad_norm);
  if (finite) {
    double lr = cfg.learning_rate;
    vs.beta_loc += lr * g_beta_loc;
    vs.beta_log_scale += lr * g_beta_log_scale;
    for (std::size_t i = 0; i < dim; ++i) {
      vs.w_mean[i] += lr * g_w_mean[i];
      vs.w_log_scale[i] += lr * g_w_log_scale[i];
    }
    if (cfg.train_theta) {
      auto& theta = vs.binding->theta();
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += lr * g_theta[i];
    }
  } else {
    diag.skipped = true;
  }
  vs.baseline = vs.baseline_decay * vs.baseline + (1.0 - vs.baseline_decay) * diag.elbo;
  ++vs.step;
  return diag;
}

}  // namespace fcp
