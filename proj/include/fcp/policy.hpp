#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/freecat.hpp"
#include "fcp/matrix.hpp"
#include "fcp/quiver.hpp"
#include "fcp/random.hpp"
#include "fcp/stats.hpp"

namespace fcp {

/// Which row of C + A'diag(w) an edge's energy reads: the edge's codomain
/// object vertex (the printed closed form) or the edge's own bipartite vertex.
enum class EnergyRow { cod, edge };

struct PolicyOptions {
  EnergyRow energy_row = EnergyRow::cod;
  double clamp_eps = 1e-12;
};

/// Everything derived from the quiver alone: bipartite graph, adjacency, and
/// its matrix exponential. Built once and shared across policy states.
struct PolicyContext {
  BipartiteGraph graph;
  Matrix adjacency;
  Matrix comm;  // exp(adjacency)
  PolicyOptions options;
};

inline std::shared_ptr<const PolicyContext> make_policy_context(const Quiver& q,
                                                                PolicyOptions options = {}) {
  auto report = validate_points_condition(q);
  if (!report.ok()) {
    std::string msg = "policy: quiver fails the points condition; offenders:";
    for (VertexId v : report.offenders) msg += " " + q.vertex(v).label.str();
    throw ValidationError(msg);
  }
  auto ctx = std::make_shared<PolicyContext>();
  ctx->graph = to_bipartite(q);
  ctx->adjacency = adjacency_matrix(ctx->graph);
  ctx->comm = expm(ctx->adjacency);
  ctx->options = options;
  // Verify the exponential: finite nonnegative walk counts, diagonal >= 1,
  // and agreement with the half-argument route exp(A/2)^2.
  for (int i = 0; i < ctx->comm.rows(); ++i) {
    if (!(ctx->comm(i, i) >= 1.0 - 1e-9)) throw NumericalError("policy: bad communicability diagonal");
    for (int j = 0; j < ctx->comm.cols(); ++j)
      if (!std::isfinite(ctx->comm(i, j)) || ctx->comm(i, j) < -1e-12)
        throw NumericalError("policy: bad communicability entry");
  }
  Matrix half = expm(ctx->adjacency * 0.5);
  double residual = (half * half).max_abs_diff(ctx->comm);
  if (residual > 1e-8 * std::max(1.0, ctx->comm.inf_norm()))
    throw NumericalError("policy: communicability failed the half-argument check");
  return ctx;
}

/// Communicability matrix of a {0,1} adjacency matrix: exp(A). The series in
/// the defining sum starts at n=1; the full exponential adds the n=0 identity
/// on the diagonal, which keeps the final hop of a walk well-defined
/// (C[t,t] >= 1), and is what the closed form equals.
inline Matrix communicability(const Matrix& a) {
  if (!a.square()) throw DimensionError("communicability: matrix must be square");
  return expm(a);
}

/// Quasimetric of intuitive distance: -log C[s,t]; +inf when unreachable.
inline double intuitive_distance(const Matrix& comm, int s, int t) {
  double c = comm(s, t);
  if (!(c > 0.0)) return kPosInf;
  double d = -std::log(c);
  return d == 0.0 ? 0.0 : d;  // no negative zero in tables
}

/// Policy state: the communicability context plus one draw of the globals
/// (w, beta) and the preference-shifted matrix C + A'diag(w).
struct PolicyState {
  std::shared_ptr<const PolicyContext> ctx;
  std::vector<double> w;
  double beta = 1.0;
  Matrix pref;  // comm + adjacency * diag(w)

  const BipartiteGraph& graph() const { return ctx->graph; }
};

inline PolicyState make_policy_state(std::shared_ptr<const PolicyContext> ctx,
                                     std::vector<double> w, double beta) {
  if (!(beta > 0.0)) throw ValidationError("policy: beta must be positive");
  if (static_cast<int>(w.size()) != ctx->graph.size())
    throw DimensionError("policy: w must have one entry per bipartite vertex");
  for (double x : w)
    if (!std::isfinite(x)) throw ValidationError("policy: w must be finite");
  PolicyState ps;
  ps.pref = ctx->comm;
  const Matrix& a = ctx->adjacency;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) ps.pref(i, j) += a(i, j) * w[static_cast<std::size_t>(j)];
  ps.ctx = std::move(ctx);
  ps.w = std::move(w);
  ps.beta = beta;
  return ps;
}

/// Draws the global random variables of the prior: beta ~ Gamma(1,1), then
/// w ~ N(0,1) per bipartite vertex.
inline std::pair<std::vector<double>, double> sample_globals(Rng& rng, int dim) {
  double beta = rng.exponential();
  std::vector<double> w = rng.normal_vector(static_cast<std::size_t>(dim));
  return {std::move(w), beta};
}

namespace detail {

inline int energy_row_index(const PolicyState& ps, EdgeId e) {
  const auto& g = ps.graph();
  const auto& m = g.morphisms[static_cast<std::size_t>(e)];
  return ps.ctx->options.energy_row == EnergyRow::cod ? g.object_index(m.cod)
                                                      : g.morphism_index(e);
}

}  // namespace detail

/// Surprisal-scaled energy of taking edge e while heading for `target`:
/// -(1/beta) log(clamp((C + A'diag(w))[row, target], eps)). Dead directions
/// (zero communicability and nonpositive entry) get +inf.
inline double edge_energy(const PolicyState& ps, EdgeId e, VertexId target) {
  const auto& g = ps.graph();
  int row = detail::energy_row_index(ps, e);
  int col = g.object_index(target);
  double raw = ps.pref(row, col);
  double comm = ps.ctx->comm(row, col);
  if (raw <= 0.0 && comm <= 0.0) return kPosInf;
  double clamped = std::max(raw, ps.ctx->options.clamp_eps);
  return -std::log(clamped) / ps.beta;
}

/// Per-vertex policy internals. `a` holds log of the clamped matrix entries
/// (the unnormalized log-preferences, -inf for dead directions); log_probs is
/// the stabilized log-softmin of a/beta.
struct LocalPolicy {
  VertexId source = -1;
  VertexId target = -1;
  std::vector<EdgeId> edges;
  std::vector<double> a;
  std::vector<double> da_dw_target;  // d a_e / d w_target (clamp-aware)
  std::vector<double> log_probs;
  std::vector<double> probs;

  int find(EdgeId e) const {
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (edges[i] == e) return static_cast<int>(i);
    return -1;
  }
};

inline LocalPolicy local_policy(const PolicyState& ps, VertexId v, VertexId target) {
  const auto& g = ps.graph();
  LocalPolicy lp;
  lp.source = v;
  lp.target = target;
  lp.edges = g.out_edges.at(static_cast<std::size_t>(v));
  if (lp.edges.empty())
    throw DeadEndError("policy: vertex " + g.object_labels[static_cast<std::size_t>(v)].str() +
                       " has no out-edges");
  int col = g.object_index(target);
  bool any_live = false;
  for (EdgeId e : lp.edges) {
    int row = detail::energy_row_index(ps, e);
    double raw = ps.pref(row, col);
    double comm = ps.ctx->comm(row, col);
    if (raw <= 0.0 && comm <= 0.0) {
      lp.a.push_back(kNegInf);
      lp.da_dw_target.push_back(0.0);
      continue;
    }
    any_live = true;
    double eps = ps.ctx->options.clamp_eps;
    double clamped = std::max(raw, eps);
    lp.a.push_back(std::log(clamped));
    double da = 0.0;
    if (raw > eps) {
      double arc = ps.ctx->adjacency(row, col);
      if (arc != 0.0) da = arc / clamped;
    }
    lp.da_dw_target.push_back(da);
  }
  if (!any_live)
    throw DeadEndError("policy: all out-edges of " +
                       g.object_labels[static_cast<std::size_t>(v)].str() +
                       " are dead toward " +
                       g.object_labels[static_cast<std::size_t>(target)].str());

  // Softmin over energies == softmax over a/beta, max-shifted.
  std::vector<double> logits(lp.a.size());
  for (std::size_t i = 0; i < lp.a.size(); ++i)
    logits[i] = lp.a[i] == kNegInf ? kNegInf : lp.a[i] / ps.beta;
  double lse = log_sum_exp(logits);
  lp.log_probs.resize(logits.size());
  lp.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    lp.log_probs[i] = logits[i] == kNegInf ? kNegInf : logits[i] - lse;
    lp.probs[i] = std::exp(lp.log_probs[i]);
  }
  return lp;
}

/// Normalized distribution over the out-edges of v, softmin of their energies.
struct EdgeDistribution {
  VertexId source = -1;
  std::vector<EdgeId> edges;
  std::vector<double> probabilities;
};

inline EdgeDistribution policy_distribution(const PolicyState& ps, VertexId v, VertexId target) {
  LocalPolicy lp = local_policy(ps, v, target);
  return EdgeDistribution{v, std::move(lp.edges), std::move(lp.probs)};
}

/// Exact log-probability of a stepwise-sampled path from src to tgt: the sum
/// of per-step policy log-probabilities.
inline double path_log_prob(const PolicyState& ps, const Path& path, VertexId src, VertexId tgt) {
  if (path.src != src || path.dst != tgt)
    throw TypeError("path_log_prob: path endpoints do not match");
  const auto& g = ps.graph();
  double total = 0.0;
  VertexId at = src;
  for (const auto& step : path.steps) {
    const auto& edge = g.morphisms.at(static_cast<std::size_t>(step.edge));
    if (edge.dom != at) throw TypeError("path_log_prob: path is not connected");
    LocalPolicy lp = local_policy(ps, at, tgt);
    int idx = lp.find(step.edge);
    if (idx < 0) throw TypeError("path_log_prob: edge not available at vertex");
    total += lp.log_probs[static_cast<std::size_t>(idx)];
    at = edge.cod;
  }
  if (at != tgt) throw TypeError("path_log_prob: path does not end at the target");
  return total;
}

}  // namespace fcp
