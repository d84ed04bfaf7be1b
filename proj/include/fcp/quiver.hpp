#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/json_util.hpp"
#include "fcp/matrix.hpp"

namespace fcp {

using VertexId = int;
using EdgeId = int;

/// Object label: an ordered sequence of symbols, never a concatenated string,
/// so products of multi-character symbols stay unambiguous.
struct ObjectLabel {
  std::vector<std::string> symbols;

  ObjectLabel() = default;
  explicit ObjectLabel(std::vector<std::string> syms) : symbols(std::move(syms)) {}

  std::size_t size() const { return symbols.size(); }
  bool singleton() const { return symbols.size() == 1; }

  /// Display form, symbols joined by commas ("A,B").
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i) s += ',';
      s += symbols[i];
    }
    return s;
  }

  ObjectLabel concat(const ObjectLabel& o) const {
    ObjectLabel r = *this;
    r.symbols.insert(r.symbols.end(), o.symbols.begin(), o.symbols.end());
    return r;
  }

  auto operator<=>(const ObjectLabel&) const = default;
};

enum class EdgeKind { generator, point_macro };

struct Vertex {
  VertexId id = -1;
  ObjectLabel label;
};

struct Edge {
  EdgeId id = -1;
  std::string name;
  VertexId dom = -1;
  VertexId cod = -1;
  EdgeKind kind = EdgeKind::generator;
};

struct EdgeSpec {
  std::string name;
  ObjectLabel dom;
  ObjectLabel cod;
  EdgeKind kind = EdgeKind::generator;
};

namespace detail {

inline bool valid_symbol_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
              c == '_';
    if (!ok) return false;
  }
  return true;
}

inline bool valid_edge_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || static_cast<unsigned char>(c) < 0x20)
      return false;
  }
  return true;
}

}  // namespace detail

/// The generating directed multigraph. Immutable after construction; vertex
/// and edge ids are dense and follow declaration order, which fixes the order
/// of every matrix and sampler downstream.
class Quiver {
 public:
  /// Builds and validates a quiver from explicit parts. A vertex labeled with
  /// the unit symbol is appended when absent.
  static Quiver from_parts(std::vector<std::string> symbols, const std::string& unit_symbol,
                           std::vector<ObjectLabel> vertex_labels,
                           const std::vector<EdgeSpec>& edge_specs) {
    Quiver q;
    q.symbols_ = std::move(symbols);
    q.unit_symbol_ = unit_symbol;

    std::set<std::string> symbol_set;
    for (const auto& s : q.symbols_) {
      if (!detail::valid_symbol_token(s))
        throw ValidationError("quiver: invalid symbol token \"" + s + "\"");
      if (!symbol_set.insert(s).second)
        throw ValidationError("quiver: duplicate symbol \"" + s + "\"");
    }
    if (!symbol_set.count(unit_symbol))
      throw ValidationError("quiver: unit symbol \"" + unit_symbol + "\" not declared");

    bool unit_present = false;
    for (const auto& label : vertex_labels) {
      if (label.symbols.empty()) throw ValidationError("quiver: empty vertex label");
      for (const auto& s : label.symbols) {
        if (!symbol_set.count(s))
          throw ValidationError("quiver: label uses undeclared symbol \"" + s + "\"");
        if (s == unit_symbol && label.size() > 1)
          throw ValidationError("quiver: unit symbol may only appear as a singleton label");
      }
      if (label.singleton() && label.symbols[0] == unit_symbol) unit_present = true;
    }
    if (!unit_present) vertex_labels.push_back(ObjectLabel{{unit_symbol}});

    for (std::size_t i = 0; i < vertex_labels.size(); ++i) {
      Vertex v;
      v.id = static_cast<VertexId>(i);
      v.label = vertex_labels[i];
      if (!q.label_index_.emplace(v.label, v.id).second)
        throw ValidationError("quiver: duplicate vertex label \"" + v.label.str() + "\"");
      q.vertices_.push_back(std::move(v));
    }

    // Each declared symbol must appear on a singleton vertex (the unit was
    // just ensured above).
    for (const auto& s : q.symbols_) {
      if (!q.label_index_.count(ObjectLabel{{s}}))
        throw ValidationError("quiver: missing singleton-label vertex for symbol \"" + s + "\"");
    }

    q.unit_ = q.label_index_.at(ObjectLabel{{unit_symbol}});

    for (const auto& spec : edge_specs) {
      if (!detail::valid_edge_name(spec.name))
        throw ValidationError("quiver: invalid edge name \"" + spec.name + "\"");
      Edge e;
      e.id = static_cast<EdgeId>(q.edges_.size());
      e.name = spec.name;
      e.dom = q.resolve_vertex(spec.dom);
      e.cod = q.resolve_vertex(spec.cod);
      e.kind = spec.kind;
      if (e.kind == EdgeKind::point_macro && e.dom != q.unit_)
        throw ValidationError("quiver: point edge \"" + e.name + "\" must start at the unit");
      if (!q.edge_index_.emplace(e.name, e.id).second)
        throw ValidationError("quiver: duplicate edge name \"" + e.name + "\"");
      q.edges_.push_back(std::move(e));
    }

    q.out_edges_.assign(q.vertices_.size(), {});
    for (const auto& e : q.edges_) q.out_edges_[e.dom].push_back(e.id);
    return q;
  }

  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  VertexId unit() const { return unit_; }
  const std::string& unit_symbol() const { return unit_symbol_; }

  const Vertex& vertex(VertexId v) const { return vertices_.at(static_cast<std::size_t>(v)); }
  const Edge& edge(EdgeId e) const { return edges_.at(static_cast<std::size_t>(e)); }

  /// Out-edges of a vertex in edge-id (declaration) order.
  const std::vector<EdgeId>& out_edges(VertexId v) const {
    return out_edges_.at(static_cast<std::size_t>(v));
  }

  std::optional<VertexId> find_vertex(const ObjectLabel& label) const {
    auto it = label_index_.find(label);
    if (it == label_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<EdgeId> find_edge(const std::string& name) const {
    auto it = edge_index_.find(name);
    if (it == edge_index_.end()) return std::nullopt;
    return it->second;
  }

  VertexId resolve_vertex(const ObjectLabel& label) const {
    auto v = find_vertex(label);
    if (!v) throw ValidationError("quiver: unknown vertex \"" + label.str() + "\"");
    return *v;
  }

  bool is_unit_label(const ObjectLabel& label) const {
    return label.singleton() && label.symbols[0] == unit_symbol_;
  }

  json to_json() const {
    json j;
    j["format"] = kFormatTag;
    j["symbols"] = symbols_;
    j["unit"] = unit_symbol_;
    json verts = json::array();
    for (const auto& v : vertices_) verts.push_back(json{{"label", v.label.symbols}});
    j["vertices"] = std::move(verts);
    json edges = json::array();
    for (const auto& e : edges_) {
      json je{{"name", e.name},
              {"dom", vertex(e.dom).label.symbols},
              {"cod", vertex(e.cod).label.symbols}};
      if (e.kind == EdgeKind::point_macro) je["kind"] = "point";
      edges.push_back(std::move(je));
    }
    j["edges"] = std::move(edges);
    return j;
  }

 private:
  std::vector<std::string> symbols_;
  std::string unit_symbol_;
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  VertexId unit_ = -1;
  std::map<ObjectLabel, VertexId> label_index_;
  std::map<std::string, EdgeId> edge_index_;
  std::vector<std::vector<EdgeId>> out_edges_;
};

inline ObjectLabel label_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ParseError(std::string(what) + ": label must be a non-empty array of symbols");
  ObjectLabel label;
  for (const auto& s : j) {
    if (!s.is_string()) throw ParseError(std::string(what) + ": label entries must be strings");
    label.symbols.push_back(s.get<std::string>());
  }
  return label;
}

/// Parses the quiver file format. The unit vertex is added when the file
/// omits it; unknown fields are rejected.
inline Quiver parse_quiver(const std::string& text) {
  json j = parse_json(text, "quiver");
  require_format(j, "quiver");
  reject_unknown_fields(j, {"format", "symbols", "unit", "vertices", "edges"}, "quiver");

  const json& jsym = require_field(j, "symbols", "quiver");
  if (!jsym.is_array()) throw ParseError("quiver: \"symbols\" must be an array");
  std::vector<std::string> symbols;
  for (const auto& s : jsym) {
    if (!s.is_string()) throw ParseError("quiver: symbols must be strings");
    symbols.push_back(s.get<std::string>());
  }

  const json& junit = require_field(j, "unit", "quiver");
  if (!junit.is_string()) throw ParseError("quiver: \"unit\" must be a string");

  const json& jverts = require_field(j, "vertices", "quiver");
  if (!jverts.is_array()) throw ParseError("quiver: \"vertices\" must be an array");
  std::vector<ObjectLabel> labels;
  for (const auto& jv : jverts) {
    if (!jv.is_object()) throw ParseError("quiver: vertex entries must be objects");
    reject_unknown_fields(jv, {"label"}, "quiver vertex");
    labels.push_back(label_from_json(require_field(jv, "label", "quiver vertex"), "quiver vertex"));
  }

  const json& jedges = require_field(j, "edges", "quiver");
  if (!jedges.is_array()) throw ParseError("quiver: \"edges\" must be an array");
  std::vector<EdgeSpec> specs;
  for (const auto& je : jedges) {
    if (!je.is_object()) throw ParseError("quiver: edge entries must be objects");
    reject_unknown_fields(je, {"name", "dom", "cod", "kind"}, "quiver edge");
    EdgeSpec spec;
    const json& jname = require_field(je, "name", "quiver edge");
    if (!jname.is_string()) throw ParseError("quiver edge: \"name\" must be a string");
    spec.name = jname.get<std::string>();
    spec.dom = label_from_json(require_field(je, "dom", "quiver edge"), "quiver edge");
    spec.cod = label_from_json(require_field(je, "cod", "quiver edge"), "quiver edge");
    if (auto it = je.find("kind"); it != je.end()) {
      if (!it->is_string()) throw ParseError("quiver edge: \"kind\" must be a string");
      std::string k = it->get<std::string>();
      if (k == "generator")
        spec.kind = EdgeKind::generator;
      else if (k == "point")
        spec.kind = EdgeKind::point_macro;
      else
        throw ParseError("quiver edge: unknown kind \"" + k + "\"");
    }
    specs.push_back(std::move(spec));
  }

  try {
    return Quiver::from_parts(std::move(symbols), junit.get<std::string>(), std::move(labels),
                              specs);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
}

/// Report for the points condition: non-unit singleton generators with
/// outgoing edges must be reachable from the unit.
struct ValidationReport {
  std::vector<VertexId> offenders;
  bool ok() const { return offenders.empty(); }
};

inline ValidationReport validate_points_condition(const Quiver& q) {
  // Breadth-first reachability from the unit vertex.
  std::vector<char> reached(q.vertices().size(), 0);
  std::vector<VertexId> queue{q.unit()};
  reached[static_cast<std::size_t>(q.unit())] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    for (EdgeId e : q.out_edges(queue[head])) {
      VertexId c = q.edge(e).cod;
      if (!reached[static_cast<std::size_t>(c)]) {
        reached[static_cast<std::size_t>(c)] = 1;
        queue.push_back(c);
      }
    }
  }
  ValidationReport report;
  for (const auto& v : q.vertices()) {
    if (v.id == q.unit()) continue;
    if (!v.label.singleton()) continue;
    if (q.out_edges(v.id).empty()) continue;
    if (!reached[static_cast<std::size_t>(v.id)]) report.offenders.push_back(v.id);
  }
  return report;
}

/// One closure pass per `depth`: every ordered pair of pointed singleton
/// vertices gets a product vertex and a synthesized point into it. A pass
/// cannot create new pointed singletons, so the construction is idempotent at
/// any fixed depth.
inline Quiver monoidal_closure(const Quiver& q, int depth = 1) {
  if (depth < 1) throw ValidationError("monoidal_closure: depth must be positive");

  std::vector<ObjectLabel> labels;
  for (const auto& v : q.vertices()) labels.push_back(v.label);
  std::vector<EdgeSpec> specs;
  for (const auto& e : q.edges())
    specs.push_back({e.name, q.vertex(e.dom).label, q.vertex(e.cod).label, e.kind});

  std::set<ObjectLabel> label_set(labels.begin(), labels.end());
  std::set<std::string> edge_names;
  // Point-macro targets already present, by label.
  std::set<ObjectLabel> macro_targets;
  for (const auto& s : specs) {
    edge_names.insert(s.name);
    if (s.kind == EdgeKind::point_macro) macro_targets.insert(s.cod);
  }

  const ObjectLabel unit_label{{q.unit_symbol()}};
  for (int pass = 0; pass < depth; ++pass) {
    // Pointed singletons: a direct edge from the unit, any kind.
    std::vector<ObjectLabel> pointed;
    std::set<ObjectLabel> seen;
    for (const auto& s : specs) {
      if (s.dom != unit_label) continue;
      if (s.cod.size() != 1 || s.cod == unit_label) continue;
      if (seen.insert(s.cod).second) pointed.push_back(s.cod);
    }
    std::sort(pointed.begin(), pointed.end());

    for (const auto& a : pointed) {
      for (const auto& b : pointed) {
        ObjectLabel product = a.concat(b);
        if (!label_set.count(product)) {
          label_set.insert(product);
          labels.push_back(product);
        }
        if (macro_targets.count(product)) continue;
        std::string name = "pt:" + a.symbols[0] + "*" + b.symbols[0];
        while (edge_names.count(name)) name += "'";
        edge_names.insert(name);
        macro_targets.insert(product);
        specs.push_back({name, unit_label, product, EdgeKind::point_macro});
      }
    }
  }

  std::vector<std::string> symbols = q.symbols();
  return Quiver::from_parts(std::move(symbols), q.unit_symbol(), std::move(labels), specs);
}

/// Simple directed bipartite policy graph: one vertex per quiver vertex, one
/// per quiver edge, arcs dom(e) -> e -> cod(e). Indices: object vertex v at
/// row v, morphism vertex e at row |V| + e.
struct BipartiteGraph {
  struct MorphismVertex {
    EdgeId id;
    std::string name;
    VertexId dom;
    VertexId cod;
    EdgeKind kind;
  };

  int num_objects = 0;
  int num_morphisms = 0;
  std::vector<ObjectLabel> object_labels;
  std::vector<MorphismVertex> morphisms;
  std::vector<std::pair<int, int>> arcs;
  std::vector<std::vector<EdgeId>> out_edges;  // per object vertex, edge-id order
  VertexId unit = -1;

  int size() const { return num_objects + num_morphisms; }
  int object_index(VertexId v) const { return v; }
  int morphism_index(EdgeId e) const { return num_objects + e; }

  /// Row/column display name: object labels first, then edge names.
  std::string name_of(int index) const {
    if (index < num_objects) return object_labels[static_cast<std::size_t>(index)].str();
    return morphisms[static_cast<std::size_t>(index - num_objects)].name;
  }
};

inline BipartiteGraph to_bipartite(const Quiver& q) {
  BipartiteGraph g;
  g.num_objects = static_cast<int>(q.vertices().size());
  g.num_morphisms = static_cast<int>(q.edges().size());
  g.unit = q.unit();
  for (const auto& v : q.vertices()) g.object_labels.push_back(v.label);
  for (const auto& e : q.edges()) {
    g.morphisms.push_back({e.id, e.name, e.dom, e.cod, e.kind});
    g.arcs.emplace_back(g.object_index(e.dom), g.morphism_index(e.id));
    g.arcs.emplace_back(g.morphism_index(e.id), g.object_index(e.cod));
  }
  g.out_edges.assign(q.vertices().size(), {});
  for (const auto& v : q.vertices()) g.out_edges[static_cast<std::size_t>(v.id)] = q.out_edges(v.id);
  return g;
}

inline Matrix adjacency_matrix(const BipartiteGraph& g) {
  Matrix a(g.size(), g.size());
  for (const auto& [from, to] : g.arcs) a(from, to) = 1.0;
  return a;
}

/// Multigraph adjacency of the quiver itself: entry (i, j) counts edges i -> j.
inline Matrix quiver_adjacency(const Quiver& q) {
  int n = static_cast<int>(q.vertices().size());
  Matrix a(n, n);
  for (const auto& e : q.edges()) a(e.dom, e.cod) += 1.0;
  return a;
}

}  // namespace fcp
