#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/json_util.hpp"
#include "fcp/quiver.hpp"

namespace fcp {

struct Port {
  ObjectLabel type;
  bool operator==(const Port&) const = default;
};

using PortList = std::vector<Port>;

inline std::string ports_str(const PortList& ports) {
  std::string s = "[";
  for (std::size_t i = 0; i < ports.size(); ++i) {
    if (i) s += " ";
    s += ports[i].type.str();
  }
  return s + "]";
}

/// A blank box: a pair of typed port lists. Empty dom encodes the monoidal
/// unit as source.
struct WBox {
  PortList dom;
  PortList cod;
  bool operator==(const WBox&) const = default;
};

class Diagram;
using DiagramPtr = std::shared_ptr<const Diagram>;

/// Acyclic wiring diagram as the four-constructor algebraic data type:
/// Identity, Box, Sequential, Parallel. Values are immutable and shared;
/// dom/cod are cached at the root of every node.
class Diagram {
 public:
  enum class Kind { identity, box, sequential, parallel };

  static DiagramPtr make_identity(PortList ports) {
    auto d = std::shared_ptr<Diagram>(new Diagram(Kind::identity));
    d->dom_ = ports;
    d->cod_ = std::move(ports);
    return d;
  }

  static DiagramPtr make_box(WBox box) {
    auto d = std::shared_ptr<Diagram>(new Diagram(Kind::box));
    d->dom_ = box.dom;
    d->cod_ = box.cod;
    d->box_ = std::move(box);
    return d;
  }

  static DiagramPtr seq(DiagramPtr left, DiagramPtr right) {
    if (!left || !right) throw TypeError("seq: null diagram");
    if (left->cod() != right->dom())
      throw TypeError("seq: type mismatch, cod " + ports_str(left->cod()) + " vs dom " +
                      ports_str(right->dom()));
    auto d = std::shared_ptr<Diagram>(new Diagram(Kind::sequential));
    d->dom_ = left->dom();
    d->cod_ = right->cod();
    d->left_ = std::move(left);
    d->right_ = std::move(right);
    return d;
  }

  static DiagramPtr par(DiagramPtr top, DiagramPtr bottom) {
    if (!top || !bottom) throw TypeError("par: null diagram");
    auto d = std::shared_ptr<Diagram>(new Diagram(Kind::parallel));
    d->dom_ = top->dom();
    d->dom_.insert(d->dom_.end(), bottom->dom().begin(), bottom->dom().end());
    d->cod_ = top->cod();
    d->cod_.insert(d->cod_.end(), bottom->cod().begin(), bottom->cod().end());
    d->left_ = std::move(top);
    d->right_ = std::move(bottom);
    return d;
  }

  Kind kind() const { return kind_; }
  const PortList& dom() const { return dom_; }
  const PortList& cod() const { return cod_; }
  const WBox& box() const { return box_; }
  const DiagramPtr& left() const { return left_; }
  const DiagramPtr& right() const { return right_; }

  int leaf_count() const {
    switch (kind_) {
      case Kind::identity: return 0;
      case Kind::box: return 1;
      default: return left_->leaf_count() + right_->leaf_count();
    }
  }

  /// Box leaves in left-to-right depth-first order.
  std::vector<const WBox*> leaves() const {
    std::vector<const WBox*> out;
    collect_leaves(out);
    return out;
  }

 private:
  explicit Diagram(Kind k) : kind_(k) {}

  void collect_leaves(std::vector<const WBox*>& out) const {
    switch (kind_) {
      case Kind::identity: return;
      case Kind::box: out.push_back(&box_); return;
      default:
        left_->collect_leaves(out);
        right_->collect_leaves(out);
    }
  }

  Kind kind_;
  PortList dom_;
  PortList cod_;
  WBox box_;
  DiagramPtr left_;
  DiagramPtr right_;
};

inline DiagramPtr identity(PortList ports) { return Diagram::make_identity(std::move(ports)); }
inline DiagramPtr box(WBox b) { return Diagram::make_box(std::move(b)); }
inline DiagramPtr box(PortList dom, PortList cod) {
  return Diagram::make_box(WBox{std::move(dom), std::move(cod)});
}
inline DiagramPtr seq(DiagramPtr f, DiagramPtr g) { return Diagram::seq(std::move(f), std::move(g)); }
inline DiagramPtr par(DiagramPtr f, DiagramPtr g) { return Diagram::par(std::move(f), std::move(g)); }

/// Bottom-up fold with one handler per constructor; handlers are invoked
/// exactly once per node in dependency order.
template <class T, class FId, class FBox, class FSeq, class FPar>
T collapse(const Diagram& d, FId&& on_identity, FBox&& on_box, FSeq&& on_seq, FPar&& on_par) {
  switch (d.kind()) {
    case Diagram::Kind::identity:
      return on_identity(d.dom());
    case Diagram::Kind::box:
      return on_box(d.box());
    case Diagram::Kind::sequential: {
      T l = collapse<T>(*d.left(), on_identity, on_box, on_seq, on_par);
      T r = collapse<T>(*d.right(), on_identity, on_box, on_seq, on_par);
      return on_seq(std::move(l), std::move(r));
    }
    case Diagram::Kind::parallel: {
      T l = collapse<T>(*d.left(), on_identity, on_box, on_seq, on_par);
      T r = collapse<T>(*d.right(), on_identity, on_box, on_seq, on_par);
      return on_par(std::move(l), std::move(r));
    }
  }
  throw Error("collapse: unreachable");
}

/// Replaces box leaf `i` (left-to-right order) of `phi` by `psi`.
inline DiagramPtr partial_compose(const DiagramPtr& psi, int i, const DiagramPtr& phi) {
  if (!psi || !phi) throw TypeError("partial_compose: null diagram");
  int total = phi->leaf_count();
  if (i < 0 || i >= total)
    throw TypeError("partial_compose: box index " + std::to_string(i) + " out of range (" +
                    std::to_string(total) + " leaves)");
  int counter = 0;
  struct Rec {
    const DiagramPtr& psi;
    int target;
    int& counter;
    DiagramPtr operator()(const DiagramPtr& d) {
      switch (d->kind()) {
        case Diagram::Kind::identity:
          return d;
        case Diagram::Kind::box: {
          int idx = counter++;
          if (idx != target) return d;
          if (psi->dom() != d->dom() || psi->cod() != d->cod())
            throw TypeError("partial_compose: type mismatch at box " + std::to_string(idx) +
                            ": diagram " + ports_str(psi->dom()) + " -> " + ports_str(psi->cod()) +
                            " vs box " + ports_str(d->dom()) + " -> " + ports_str(d->cod()));
          return psi;
        }
        case Diagram::Kind::sequential: {
          DiagramPtr l = (*this)(d->left());
          DiagramPtr r = (*this)(d->right());
          if (l == d->left() && r == d->right()) return d;
          return Diagram::seq(l, r);
        }
        case Diagram::Kind::parallel: {
          DiagramPtr l = (*this)(d->left());
          DiagramPtr r = (*this)(d->right());
          if (l == d->left() && r == d->right()) return d;
          return Diagram::par(l, r);
        }
      }
      throw Error("partial_compose: unreachable");
    }
  } rec{psi, i, counter};
  return rec(phi);
}

/// Box-connection digraph: one node per box leaf, a wire from producer to
/// consumer whenever a box output feeds a box input.
struct ConnectionGraph {
  int boxes = 0;
  std::vector<std::pair<int, int>> wires;
};

inline ConnectionGraph connection_graph(const Diagram& d) {
  ConnectionGraph g;
  // Provider of a port: which leaf produced it, or -1 for an external input.
  struct Rec {
    ConnectionGraph& g;
    std::vector<int> operator()(const Diagram& d, std::vector<int> inputs) {
      switch (d.kind()) {
        case Diagram::Kind::identity:
          return inputs;
        case Diagram::Kind::box: {
          int leaf = g.boxes++;
          for (int p : inputs)
            if (p >= 0) g.wires.emplace_back(p, leaf);
          return std::vector<int>(d.cod().size(), leaf);
        }
        case Diagram::Kind::sequential: {
          auto mid = (*this)(*d.left(), std::move(inputs));
          return (*this)(*d.right(), std::move(mid));
        }
        case Diagram::Kind::parallel: {
          std::size_t split = d.left()->dom().size();
          std::vector<int> top(inputs.begin(), inputs.begin() + static_cast<long>(split));
          std::vector<int> bottom(inputs.begin() + static_cast<long>(split), inputs.end());
          auto out = (*this)(*d.left(), std::move(top));
          auto out2 = (*this)(*d.right(), std::move(bottom));
          out.insert(out.end(), out2.begin(), out2.end());
          return out;
        }
      }
      throw Error("connection_graph: unreachable");
    }
  } rec{g};
  rec(d, std::vector<int>(d.dom().size(), -1));
  return g;
}

inline bool is_acyclic(const ConnectionGraph& g) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.boxes));
  for (const auto& [a, b] : g.wires) adj[static_cast<std::size_t>(a)].push_back(b);
  // 0 = unseen, 1 = on stack, 2 = done
  std::vector<char> state(static_cast<std::size_t>(g.boxes), 0);
  struct Dfs {
    const std::vector<std::vector<int>>& adj;
    std::vector<char>& state;
    bool operator()(int v) {
      state[static_cast<std::size_t>(v)] = 1;
      for (int w : adj[static_cast<std::size_t>(v)]) {
        if (state[static_cast<std::size_t>(w)] == 1) return false;
        if (state[static_cast<std::size_t>(w)] == 0 && !(*this)(w)) return false;
      }
      state[static_cast<std::size_t>(v)] = 2;
      return true;
    }
  } dfs{adj, state};
  for (int v = 0; v < g.boxes; ++v)
    if (state[static_cast<std::size_t>(v)] == 0 && !dfs(v)) return false;
  return true;
}

/// Progress condition: the box-connection digraph has no directed cycle.
/// Always true for constructor-built diagrams; exercised on deserialized input.
inline bool check_progress(const Diagram& d) { return is_acyclic(connection_graph(d)); }

// --- normalization --------------------------------------------------------

namespace detail {

/// Collects an already-normalized diagram into a constructor chain, splicing
/// nested nodes of the same kind.
inline void splice(const DiagramPtr& d, Diagram::Kind kind, std::vector<DiagramPtr>& out) {
  if (d->kind() == kind) {
    splice(d->left(), kind, out);
    splice(d->right(), kind, out);
  } else {
    out.push_back(d);
  }
}

}  // namespace detail

/// Normal form: identity units removed, adjacent identities in a parallel
/// layer merged, sequential and parallel chains reassociated right-nested.
inline DiagramPtr normalize(const DiagramPtr& d) {
  switch (d->kind()) {
    case Diagram::Kind::identity:
    case Diagram::Kind::box:
      return d;
    case Diagram::Kind::sequential: {
      std::vector<DiagramPtr> chain;
      detail::splice(normalize(d->left()), Diagram::Kind::sequential, chain);
      detail::splice(normalize(d->right()), Diagram::Kind::sequential, chain);
      std::vector<DiagramPtr> kept;
      for (auto& part : chain)
        if (part->kind() != Diagram::Kind::identity) kept.push_back(std::move(part));
      if (kept.empty()) return Diagram::make_identity(d->dom());
      DiagramPtr acc = kept.back();
      for (auto it = kept.rbegin() + 1; it != kept.rend(); ++it) acc = Diagram::seq(*it, acc);
      return acc;
    }
    case Diagram::Kind::parallel: {
      std::vector<DiagramPtr> strands;
      detail::splice(normalize(d->left()), Diagram::Kind::parallel, strands);
      detail::splice(normalize(d->right()), Diagram::Kind::parallel, strands);
      std::vector<DiagramPtr> kept;
      for (auto& part : strands) {
        if (part->kind() == Diagram::Kind::identity && part->dom().empty()) continue;
        if (!kept.empty() && kept.back()->kind() == Diagram::Kind::identity &&
            part->kind() == Diagram::Kind::identity) {
          PortList merged = kept.back()->dom();
          merged.insert(merged.end(), part->dom().begin(), part->dom().end());
          kept.back() = Diagram::make_identity(std::move(merged));
          continue;
        }
        kept.push_back(std::move(part));
      }
      if (kept.empty()) return Diagram::make_identity({});
      DiagramPtr acc = kept.back();
      for (auto it = kept.rbegin() + 1; it != kept.rend(); ++it) acc = Diagram::par(*it, acc);
      return acc;
    }
  }
  throw Error("normalize: unreachable");
}

inline bool structurally_equal(const DiagramPtr& a, const DiagramPtr& b) {
  if (a->kind() != b->kind()) return false;
  switch (a->kind()) {
    case Diagram::Kind::identity:
      return a->dom() == b->dom();
    case Diagram::Kind::box:
      return a->box() == b->box();
    default:
      return structurally_equal(a->left(), b->left()) &&
             structurally_equal(a->right(), b->right());
  }
}

/// Equality after normalization (identity/unit laws and reassociation).
inline bool law_equal(const DiagramPtr& a, const DiagramPtr& b) {
  return structurally_equal(normalize(a), normalize(b));
}

// --- serialization ---------------------------------------------------------

inline json ports_to_json(const PortList& ports) {
  json j = json::array();
  for (const auto& p : ports) j.push_back(p.type.symbols);
  return j;
}

inline PortList ports_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": port list must be an array");
  PortList ports;
  for (const auto& jp : j) ports.push_back(Port{label_from_json(jp, what)});
  return ports;
}

inline json diagram_to_json(const Diagram& d) {
  switch (d.kind()) {
    case Diagram::Kind::identity:
      return json{{"id", ports_to_json(d.dom())}};
    case Diagram::Kind::box:
      return json{{"box", {{"dom", ports_to_json(d.box().dom)}, {"cod", ports_to_json(d.box().cod)}}}};
    case Diagram::Kind::sequential:
      return json{{"seq", json::array({diagram_to_json(*d.left()), diagram_to_json(*d.right())})}};
    case Diagram::Kind::parallel:
      return json{{"par", json::array({diagram_to_json(*d.left()), diagram_to_json(*d.right())})}};
  }
  throw Error("diagram_to_json: unreachable");
}

inline DiagramPtr diagram_from_json(const json& j) {
  if (!j.is_object() || j.size() != 1)
    throw ParseError("wiring: node must be an object with exactly one of id/box/seq/par");
  if (auto it = j.find("id"); it != j.end()) {
    PortList ports;
    if (!it->is_array()) throw ParseError("wiring id: expected an array of labels");
    for (const auto& jp : *it) ports.push_back(Port{label_from_json(jp, "wiring id")});
    return Diagram::make_identity(std::move(ports));
  }
  if (auto it = j.find("box"); it != j.end()) {
    if (!it->is_object()) throw ParseError("wiring box: expected an object");
    reject_unknown_fields(*it, {"dom", "cod"}, "wiring box");
    WBox b;
    b.dom = ports_from_json(require_field(*it, "dom", "wiring box"), "wiring box");
    b.cod = ports_from_json(require_field(*it, "cod", "wiring box"), "wiring box");
    return Diagram::make_box(std::move(b));
  }
  if (auto it = j.find("seq"); it != j.end()) {
    if (!it->is_array() || it->size() != 2) throw ParseError("wiring seq: expected a pair");
    return Diagram::seq(diagram_from_json((*it)[0]), diagram_from_json((*it)[1]));
  }
  if (auto it = j.find("par"); it != j.end()) {
    if (!it->is_array() || it->size() != 2) throw ParseError("wiring par: expected a pair");
    return Diagram::par(diagram_from_json((*it)[0]), diagram_from_json((*it)[1]));
  }
  throw ParseError("wiring: unknown node key");
}

/// Wiring diagram file: versioned wrapper around the sum-type encoding.
inline DiagramPtr parse_diagram(const std::string& text) {
  json j = parse_json(text, "wiring");
  require_format(j, "wiring");
  reject_unknown_fields(j, {"format", "diagram"}, "wiring");
  auto d = diagram_from_json(require_field(j, "diagram", "wiring"));
  if (!check_progress(*d)) throw ValidationError("wiring: diagram violates the progress condition");
  return d;
}

inline json diagram_file_json(const Diagram& d) {
  return json{{"format", kFormatTag}, {"diagram", diagram_to_json(d)}};
}

}  // namespace fcp
