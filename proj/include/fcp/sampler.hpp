#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/freecat.hpp"
#include "fcp/policy.hpp"
#include "fcp/quiver.hpp"
#include "fcp/random.hpp"
#include "fcp/stats.hpp"
#include "fcp/wiring.hpp"

namespace fcp {

struct SampleConfig {
  int max_path_len = 64;
  int max_restarts = 100;
  std::uint64_t seed = 0;
  int max_macro_depth = 8;
};

/// A sampled structure together with its exact structural log-probability,
/// the globals it was sampled under, and restart accounting.
struct SampledMorphism {
  Morphism morphism;
  double log_prob_structure = 0.0;
  std::vector<double> w;
  double beta = 1.0;
  int restarts_used = 0;
};

/// Expands a synthesized point into a product object as a parallel composite
/// of unit-domain boxes, one per component symbol, left to right.
inline DiagramPtr macro_expand(const Edge& e, const Quiver& q) {
  if (e.kind != EdgeKind::point_macro)
    throw TypeError("macro_expand: edge \"" + e.name + "\" is not a point");
  const ObjectLabel& label = q.vertex(e.cod).label;
  if (label.size() < 2)
    throw TypeError("macro_expand: point \"" + e.name + "\" has a non-product codomain");
  DiagramPtr d = identity({});
  for (const auto& s : label.symbols)
    d = par(d, box(PortList{}, PortList{Port{ObjectLabel{{s}}}}));
  return d;
}

/// Unit-aware sequential composition: factors whose boundary sits at the
/// monoidal unit are padded with identity factors so that mixed unit
/// factorizations compose (unit coherence). Strict slot matches behave
/// exactly like compose().
inline Morphism compose_through_unit(const Quiver& q, const Morphism& f, const Morphism& g) {
  const ObjectLabel unit_label = q.vertex(q.unit()).label;
  Morphism r;
  std::size_t i = 0, j = 0;
  auto pair_up = [&](const Path& a, const Path& b, const ObjectLabel& dom_slot,
                     const ObjectLabel& cod_slot) {
    if (a.dst != b.src) throw TypeError("compose: path endpoints do not meet");
    Path p{a.src, b.dst, a.steps};
    p.steps.insert(p.steps.end(), b.steps.begin(), b.steps.end());
    r.factors.push_back(std::move(p));
    r.dom.push_back(dom_slot);
    r.cod.push_back(cod_slot);
  };
  const Path unit_id{q.unit(), q.unit(), {}};
  while (i < f.factors.size() || j < g.factors.size()) {
    bool fl = i < f.factors.size();
    bool gl = j < g.factors.size();
    if (fl && gl && f.cod[i] == g.dom[j]) {
      pair_up(f.factors[i], g.factors[j], f.dom[i], g.cod[j]);
      ++i;
      ++j;
    } else if (fl && f.cod[i] == unit_label) {
      pair_up(f.factors[i], unit_id, f.dom[i], unit_label);
      ++i;
    } else if (gl && g.dom[j] == unit_label) {
      pair_up(unit_id, g.factors[j], unit_label, g.cod[j]);
      ++j;
    } else {
      throw TypeError("compose: boundary mismatch");
    }
  }
  return r;
}

namespace detail {

struct SamplerCarrier {
  Morphism morphism;
  double log_prob = 0.0;
  int restarts = 0;
};

/// Resolves a box side to a single walk vertex: empty or unit-labeled port
/// lists mean the unit; one port resolves by label; more is an error (factor
/// the box with Parallel instead).
inline VertexId resolve_box_side(const Quiver& q, const PortList& ports, const char* side) {
  if (ports.empty()) return q.unit();
  if (ports.size() > 1)
    throw TypeError(std::string("sampler: box ") + side + " has " +
                    std::to_string(ports.size()) +
                    " ports; factor multi-port boxes with Parallel");
  return q.resolve_vertex(ports[0].type);
}

SamplerCarrier sample_diagram(const PolicyState& ps, const Quiver& q, const Diagram& d,
                              const SampleConfig& cfg, Rng& rng, int macro_depth);

/// Stepwise walk from the box's dom to its cod, choosing out-edges by the
/// policy; synthesized points are macro-expanded and their expansion sampled
/// recursively. Length overflows restart the walk.
inline SamplerCarrier walk_box(const PolicyState& ps, const Quiver& q, const WBox& wbox,
                               const SampleConfig& cfg, Rng& rng, int macro_depth) {
  VertexId start = resolve_box_side(q, wbox.dom, "dom");
  VertexId target = resolve_box_side(q, wbox.cod, "cod");

  SamplerCarrier out;
  int restarts = 0;
  for (;;) {
    Path path{start, target, {}};
    double log_prob = 0.0;
    int sub_restarts = 0;
    bool overflow = false;
    try {
      VertexId at = start;
      while (at != target) {
        if (static_cast<int>(path.steps.size()) >= cfg.max_path_len) {
          overflow = true;
          break;
        }
        LocalPolicy lp = local_policy(ps, at, target);
        std::size_t idx = rng.discrete(lp.probs);
        EdgeId eid = lp.edges[idx];
        log_prob += lp.log_probs[idx];
        PathStep step{eid, nullptr};
        const Edge& e = q.edge(eid);
        if (e.kind == EdgeKind::point_macro) {
          if (macro_depth >= cfg.max_macro_depth)
            throw Error("sampler: macro expansion exceeded depth " +
                        std::to_string(cfg.max_macro_depth));
          DiagramPtr expansion = macro_expand(e, q);
          SamplerCarrier sub = sample_diagram(ps, q, *expansion, cfg, rng, macro_depth + 1);
          log_prob += sub.log_prob;
          sub_restarts += sub.restarts;
          step.expansion = std::make_shared<Morphism>(std::move(sub.morphism));
        }
        path.steps.push_back(std::move(step));
        at = e.cod;
      }
      if (!overflow) {
        out.restarts += restarts + sub_restarts;
        out.log_prob = log_prob;
        out.morphism.factors.push_back(std::move(path));
        out.morphism.dom.push_back(q.vertex(start).label);
        out.morphism.cod.push_back(q.vertex(target).label);
        return out;
      }
    } catch (const DeadEndError&) {
      if (restarts >= cfg.max_restarts) throw;
      ++restarts;
      continue;
    }
    if (restarts >= cfg.max_restarts)
      throw RestartsExhaustedError("sampler: walk " + q.vertex(start).label.str() + " -> " +
                                   q.vertex(target).label.str() + " exceeded max_path_len " +
                                   std::to_string(cfg.max_path_len) + " after " +
                                   std::to_string(cfg.max_restarts) + " restarts");
    ++restarts;
  }
}

inline SamplerCarrier sample_diagram(const PolicyState& ps, const Quiver& q, const Diagram& d,
                                     const SampleConfig& cfg, Rng& rng, int macro_depth) {
  return collapse<SamplerCarrier>(
      d,
      [&](const PortList& ports) {
        SamplerCarrier c;
        std::vector<ObjectLabel> labels;
        for (const auto& p : ports) labels.push_back(p.type);
        c.morphism = identity_morphism(q, labels);
        return c;
      },
      [&](const WBox& b) { return walk_box(ps, q, b, cfg, rng, macro_depth); },
      [&](SamplerCarrier l, SamplerCarrier r) {
        SamplerCarrier c;
        c.morphism = compose_through_unit(q, l.morphism, r.morphism);
        c.log_prob = l.log_prob + r.log_prob;
        c.restarts = l.restarts + r.restarts;
        return c;
      },
      [&](SamplerCarrier l, SamplerCarrier r) {
        SamplerCarrier c;
        c.morphism = product(l.morphism, r.morphism);
        c.log_prob = l.log_prob + r.log_prob;
        c.restarts = l.restarts + r.restarts;
        return c;
      });
}

}  // namespace detail

/// The generative model applied to a wiring diagram: the sampling F-algebra
/// (Identity -> identity morphism, Box -> policy walk, Sequential -> compose,
/// Parallel -> product).
inline SampledMorphism sample_morphism(const PolicyState& ps, const Quiver& q, const Diagram& d,
                                       const SampleConfig& cfg, Rng& rng) {
  detail::SamplerCarrier c = detail::sample_diagram(ps, q, d, cfg, rng, 0);
  const std::string& unit = q.unit_symbol();
  std::vector<ObjectLabel> want_dom, want_cod;
  for (const auto& p : d.dom()) want_dom.push_back(p.type);
  for (const auto& p : d.cod()) want_cod.push_back(p.type);
  if (!same_object(c.morphism.dom, want_dom, unit) ||
      !same_object(c.morphism.cod, want_cod, unit))
    throw TypeError("sampler: sampled morphism does not match the diagram boundary");
  SampledMorphism sm;
  sm.morphism = std::move(c.morphism);
  sm.log_prob_structure = c.log_prob;
  sm.w = ps.w;
  sm.beta = ps.beta;
  sm.restarts_used = c.restarts;
  return sm;
}

/// Recomputes the structural log-probability of a morphism (all factors, all
/// macro expansions) under the given policy state.
inline double structure_log_prob(const PolicyState& ps, const Quiver& q, const Morphism& m) {
  double total = 0.0;
  for (const auto& factor : m.factors) {
    total += path_log_prob(ps, factor, factor.src, factor.dst);
    for (const auto& step : factor.steps)
      if (step.expansion) total += structure_log_prob(ps, q, *step.expansion);
  }
  return total;
}

/// Exact joint log-density of the generative model:
/// log p(beta) + log p(w) + the structural term, reproducible from stored fields.
inline double log_joint(const SampledMorphism& sm, const Diagram& d, const Quiver& q) {
  std::vector<ObjectLabel> want_dom, want_cod;
  for (const auto& p : d.dom()) want_dom.push_back(p.type);
  for (const auto& p : d.cod()) want_cod.push_back(p.type);
  if (!same_object(sm.morphism.dom, want_dom, q.unit_symbol()) ||
      !same_object(sm.morphism.cod, want_cod, q.unit_symbol()))
    throw TypeError("log_joint: morphism does not fit the diagram");
  double lp = exp1_logpdf(sm.beta);
  lp += std_normal_logpdf(std::span<const double>(sm.w));
  lp += sm.log_prob_structure;
  return lp;
}

inline json sampled_morphism_to_json(const Quiver& q, const SampledMorphism& sm) {
  json j;
  j["morphism"] = morphism_to_json(q, sm.morphism);
  j["log_prob_structure"] = sm.log_prob_structure;
  j["beta"] = sm.beta;
  j["restarts"] = sm.restarts_used;
  return j;
}

}  // namespace fcp
