#pragma once

// Shared test fixtures: small quivers with hand-derived exact values.

#include <string>

#include "fcp/fcp.hpp"

namespace fixtures {

// Q4: four object vertices (vA is the unit), five edges, two hops from vA to
// vD along three paths. Exact policy values at w=0, beta=1:
//   C[vB,vD] = 2/2! = 1, C[vC,vD] = 1/2! = 1/2,
//   pi(f|vA) = 2/3, pi(g|vA) = 1/3, pi(h1|vB) = pi(h2|vB) = 1/2,
//   every vA->vD path has probability 1/3.
inline const char* kQ4 = R"({
  "format": "fcp/1",
  "symbols": ["vA", "vB", "vC", "vD"],
  "unit": "vA",
  "vertices": [{"label": ["vA"]}, {"label": ["vB"]}, {"label": ["vC"]}, {"label": ["vD"]}],
  "edges": [
    {"name": "f", "dom": ["vA"], "cod": ["vB"]},
    {"name": "g", "dom": ["vA"], "cod": ["vC"]},
    {"name": "h1", "dom": ["vB"], "cod": ["vD"]},
    {"name": "h2", "dom": ["vB"], "cod": ["vD"]},
    {"name": "k", "dom": ["vC"], "cod": ["vD"]}
  ]
})";

// Two pointed generators; the monoidal closure adds AA, AB, BA, BB.
inline const char* kPointPair = R"({
  "format": "fcp/1",
  "symbols": ["U", "A", "B"],
  "unit": "U",
  "vertices": [{"label": ["U"]}, {"label": ["A"]}, {"label": ["B"]}],
  "edges": [
    {"name": "pA", "dom": ["U"], "cod": ["A"]},
    {"name": "pB", "dom": ["U"], "cod": ["B"]}
  ]
})";

// Condition-1 violator: A has an out-edge but no path from the unit.
inline const char* kUnpointed = R"({
  "format": "fcp/1",
  "symbols": ["I", "A", "B"],
  "unit": "I",
  "vertices": [{"label": ["I"]}, {"label": ["A"]}, {"label": ["B"]}],
  "edges": [{"name": "f", "dom": ["A"], "cod": ["B"]}]
})";

// Structure-learning toy: one box U -> X fillable by the direct edge a
// (true structure) or the three-hop detour b;c;e.
inline const char* kChainToy = R"({
  "format": "fcp/1",
  "symbols": ["U", "M1", "M2", "X"],
  "unit": "U",
  "vertices": [{"label": ["U"]}, {"label": ["M1"]}, {"label": ["M2"]}, {"label": ["X"]}],
  "edges": [
    {"name": "a", "dom": ["U"], "cod": ["X"]},
    {"name": "b", "dom": ["U"], "cod": ["M1"]},
    {"name": "c", "dom": ["M1"], "cod": ["M2"]},
    {"name": "e", "dom": ["M2"], "cod": ["X"]}
  ]
})";

inline fcp::Quiver q4() { return fcp::parse_quiver(kQ4); }
inline fcp::Quiver point_pair() { return fcp::parse_quiver(kPointPair); }
inline fcp::Quiver chain_toy() { return fcp::parse_quiver(kChainToy); }

inline fcp::ObjectLabel L(std::initializer_list<std::string> syms) {
  return fcp::ObjectLabel(std::vector<std::string>(syms));
}

inline fcp::PortList P(std::initializer_list<std::string> labels) {
  fcp::PortList ports;
  for (const auto& l : labels) ports.push_back(fcp::Port{fcp::ObjectLabel{{l}}});
  return ports;
}

/// Policy state at fixed globals over a fresh context for `q`.
inline fcp::PolicyState state_at(const fcp::Quiver& q, double w_const, double beta,
                                 fcp::PolicyOptions opt = {}) {
  auto ctx = fcp::make_policy_context(q, opt);
  std::vector<double> w(static_cast<std::size_t>(ctx->graph.size()), w_const);
  return fcp::make_policy_state(ctx, std::move(w), beta);
}

}  // namespace fixtures
