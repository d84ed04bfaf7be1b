#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/json_util.hpp"
#include "fcp/quiver.hpp"

namespace fcp {

struct Morphism;

/// One hop of a path. Steps over synthesized point-macro edges carry the
/// recursively sampled expansion that the sampler spliced in; plain generator
/// steps leave it null.
struct PathStep {
  EdgeId edge = -1;
  std::shared_ptr<const Morphism> expansion;
};

/// Edge-path in the quiver. The empty path is the identity at src (== dst).
struct Path {
  VertexId src = -1;
  VertexId dst = -1;
  std::vector<PathStep> steps;

  std::size_t length() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

/// Morphism of the free monoidal category: an ordered tuple of paths, with
/// dom/cod slots carrying the endpoint labels factor by factor.
struct Morphism {
  std::vector<Path> factors;
  std::vector<ObjectLabel> dom;
  std::vector<ObjectLabel> cod;
};

/// Flattened object: symbol sequence with unit symbols dropped. Two label
/// lists denote the same monoidal object iff their flattenings agree.
inline std::vector<std::string> flatten_object(std::span<const ObjectLabel> labels,
                                               const std::string& unit_symbol) {
  std::vector<std::string> out;
  for (const auto& label : labels)
    for (const auto& s : label.symbols)
      if (s != unit_symbol) out.push_back(s);
  return out;
}

inline bool same_object(std::span<const ObjectLabel> a, std::span<const ObjectLabel> b,
                        const std::string& unit_symbol) {
  return flatten_object(a, unit_symbol) == flatten_object(b, unit_symbol);
}

inline Morphism identity_morphism(const Quiver& q, const std::vector<ObjectLabel>& labels) {
  Morphism m;
  m.dom = labels;
  m.cod = labels;
  for (const auto& label : labels) {
    VertexId v = q.resolve_vertex(label);
    m.factors.push_back(Path{v, v, {}});
  }
  return m;
}

/// Sequential composition: factorwise path concatenation. Boundaries must
/// match componentwise (same factor count, same slot labels).
inline Morphism compose(const Morphism& f, const Morphism& g) {
  if (f.factors.size() != g.factors.size() || f.cod != g.dom)
    throw TypeError("compose: boundary mismatch");
  Morphism r;
  r.dom = f.dom;
  r.cod = g.cod;
  r.factors.reserve(f.factors.size());
  for (std::size_t i = 0; i < f.factors.size(); ++i) {
    const Path& a = f.factors[i];
    const Path& b = g.factors[i];
    if (a.dst != b.src) throw TypeError("compose: path endpoints do not meet");
    Path p{a.src, b.dst, a.steps};
    p.steps.insert(p.steps.end(), b.steps.begin(), b.steps.end());
    r.factors.push_back(std::move(p));
  }
  return r;
}

/// Monoidal product: factor-list and boundary concatenation.
inline Morphism product(const Morphism& f, const Morphism& g) {
  Morphism r = f;
  r.factors.insert(r.factors.end(), g.factors.begin(), g.factors.end());
  r.dom.insert(r.dom.end(), g.dom.begin(), g.dom.end());
  r.cod.insert(r.cod.end(), g.cod.begin(), g.cod.end());
  return r;
}

/// Drops identity factors sitting at the unit vertex (monoidal unit law).
inline Morphism normalize_morphism(const Quiver& q, const Morphism& m) {
  Morphism r;
  for (std::size_t i = 0; i < m.factors.size(); ++i) {
    const Path& p = m.factors[i];
    if (p.empty() && p.src == q.unit()) continue;
    r.factors.push_back(p);
    r.dom.push_back(m.dom[i]);
    r.cod.push_back(m.cod[i]);
  }
  return r;
}

inline bool paths_equal(const Path& a, const Path& b);

inline bool morphisms_equal(const Morphism& a, const Morphism& b) {
  if (a.dom != b.dom || a.cod != b.cod || a.factors.size() != b.factors.size()) return false;
  for (std::size_t i = 0; i < a.factors.size(); ++i)
    if (!paths_equal(a.factors[i], b.factors[i])) return false;
  return true;
}

inline bool paths_equal(const Path& a, const Path& b) {
  if (a.src != b.src || a.dst != b.dst || a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].edge != b.steps[i].edge) return false;
    const auto& ea = a.steps[i].expansion;
    const auto& eb = b.steps[i].expansion;
    if (static_cast<bool>(ea) != static_cast<bool>(eb)) return false;
    if (ea && !morphisms_equal(*ea, *eb)) return false;
  }
  return true;
}

/// All edge-paths a -> b of length <= max_len, lexicographic in edge ids.
/// Paths may revisit vertices; used as the exhaustive testing oracle.
inline std::vector<Path> enumerate_paths(const Quiver& q, VertexId a, VertexId b, int max_len) {
  if (max_len < 0) throw ValidationError("enumerate_paths: max_len must be >= 0");
  std::vector<Path> out;
  std::vector<PathStep> steps;
  struct Rec {
    const Quiver& q;
    VertexId target;
    int max_len;
    std::vector<Path>& out;
    std::vector<PathStep>& steps;
    void operator()(VertexId at, VertexId src) {
      if (at == target) out.push_back(Path{src, target, steps});
      if (static_cast<int>(steps.size()) == max_len) return;
      for (EdgeId e : q.out_edges(at)) {
        steps.push_back(PathStep{e, nullptr});
        (*this)(q.edge(e).cod, src);
        steps.pop_back();
      }
    }
  } rec{q, b, max_len, out, steps};
  rec(a, a);
  return out;
}

// --- serialization ---------------------------------------------------------

inline json labels_to_json(std::span<const ObjectLabel> labels) {
  json j = json::array();
  for (const auto& l : labels) j.push_back(l.symbols);
  return j;
}

inline std::vector<ObjectLabel> labels_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array of labels");
  std::vector<ObjectLabel> out;
  for (const auto& jl : j) out.push_back(label_from_json(jl, what));
  return out;
}

inline json morphism_to_json(const Quiver& q, const Morphism& m) {
  json j;
  j["dom"] = labels_to_json(m.dom);
  j["cod"] = labels_to_json(m.cod);
  json factors = json::array();
  for (const auto& p : m.factors) {
    json steps = json::array();
    for (const auto& step : p.steps) {
      const Edge& e = q.edge(step.edge);
      if (step.expansion) {
        steps.push_back(json{{"point", e.name}, {"expansion", morphism_to_json(q, *step.expansion)}});
      } else {
        steps.push_back(e.name);
      }
    }
    factors.push_back(std::move(steps));
  }
  j["factors"] = std::move(factors);
  return j;
}

inline Morphism morphism_from_json(const Quiver& q, const json& j) {
  if (!j.is_object()) throw ParseError("morphism: expected an object");
  reject_unknown_fields(j, {"dom", "cod", "factors"}, "morphism");
  Morphism m;
  m.dom = labels_from_json(require_field(j, "dom", "morphism"), "morphism dom");
  m.cod = labels_from_json(require_field(j, "cod", "morphism"), "morphism cod");
  const json& jf = require_field(j, "factors", "morphism");
  if (!jf.is_array()) throw ParseError("morphism: \"factors\" must be an array");
  if (jf.size() != m.dom.size() || jf.size() != m.cod.size())
    throw ParseError("morphism: factor count does not match dom/cod");
  for (std::size_t i = 0; i < jf.size(); ++i) {
    Path p;
    p.src = q.resolve_vertex(m.dom[i]);
    VertexId at = p.src;
    if (!jf[i].is_array()) throw ParseError("morphism: each factor must be an array of steps");
    for (const auto& js : jf[i]) {
      PathStep step;
      std::string name;
      if (js.is_string()) {
        name = js.get<std::string>();
      } else if (js.is_object()) {
        reject_unknown_fields(js, {"point", "expansion"}, "morphism step");
        const json& jn = require_field(js, "point", "morphism step");
        if (!jn.is_string()) throw ParseError("morphism step: \"point\" must be a string");
        name = jn.get<std::string>();
        step.expansion = std::make_shared<Morphism>(
            morphism_from_json(q, require_field(js, "expansion", "morphism step")));
      } else {
        throw ParseError("morphism: steps must be edge names or point objects");
      }
      auto e = q.find_edge(name);
      if (!e) throw ParseError("morphism: unknown edge \"" + name + "\"");
      if (q.edge(*e).dom != at)
        throw ParseError("morphism: edge \"" + name + "\" does not continue the path");
      step.edge = *e;
      at = q.edge(*e).cod;
      p.steps.push_back(std::move(step));
    }
    p.dst = at;
    if (q.vertex(p.dst).label != m.cod[i])
      throw ParseError("morphism: factor does not end at its declared codomain");
    m.factors.push_back(std::move(p));
  }
  return m;
}

inline json morphism_file_json(const Quiver& q, const Morphism& m) {
  return json{{"format", kFormatTag}, {"morphism", morphism_to_json(q, m)}};
}

inline Morphism parse_morphism(const Quiver& q, const std::string& text) {
  json j = parse_json(text, "morphism");
  require_format(j, "morphism");
  reject_unknown_fields(j, {"format", "morphism"}, "morphism");
  return morphism_from_json(q, require_field(j, "morphism", "morphism"));
}

// --- DOT export ------------------------------------------------------------

namespace detail {

inline void dot_escape_into(std::string& out, const std::string& s) {
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
}

inline void morphism_to_dot_rec(const Quiver& q, const Morphism& m, const std::string& prefix,
                                int indent, std::string& out) {
  std::string pad(static_cast<std::size_t>(indent), ' ');
  for (std::size_t i = 0; i < m.factors.size(); ++i) {
    const Path& p = m.factors[i];
    std::string fp = prefix + "f" + std::to_string(i);
    out += pad + "subgraph \"cluster_" + fp + "\" {\n";
    out += pad + "  label=\"" ;
    dot_escape_into(out, m.dom[i].str());
    out += " -> ";
    dot_escape_into(out, m.cod[i].str());
    out += "\";\n";
    std::string prev = fp + "_in";
    out += pad + "  \"" + prev + "\" [shape=plaintext,label=\"";
    dot_escape_into(out, m.dom[i].str());
    out += "\"];\n";
    for (std::size_t s = 0; s < p.steps.size(); ++s) {
      const Edge& e = q.edge(p.steps[s].edge);
      std::string node = fp + "_b" + std::to_string(s);
      out += pad + "  \"" + node + "\" [shape=box,label=\"";
      dot_escape_into(out, e.name);
      out += "\"];\n";
      out += pad + "  \"" + prev + "\" -> \"" + node + "\" [label=\"";
      dot_escape_into(out, q.vertex(e.dom).label.str());
      out += "\"];\n";
      if (p.steps[s].expansion) {
        morphism_to_dot_rec(q, *p.steps[s].expansion, node + "_x", indent + 2, out);
      }
      prev = node;
    }
    std::string sink = fp + "_out";
    out += pad + "  \"" + sink + "\" [shape=plaintext,label=\"";
    dot_escape_into(out, m.cod[i].str());
    out += "\"];\n";
    out += pad + "  \"" + prev + "\" -> \"" + sink + "\" [label=\"";
    dot_escape_into(out, m.cod[i].str());
    out += "\"];\n";
    out += pad + "}\n";
  }
}

}  // namespace detail

/// Renders the morphism as a string diagram: one cluster per factor, boxes in
/// path order, ports labeled with object labels.
inline std::string morphism_to_dot(const Quiver& q, const Morphism& m) {
  std::string out = "digraph morphism {\n  rankdir=LR;\n";
  detail::morphism_to_dot_rec(q, m, "", 2, out);
  out += "}\n";
  return out;
}

}  // namespace fcp
