#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/freecat.hpp"
#include "fcp/json_util.hpp"
#include "fcp/quiver.hpp"
#include "fcp/random.hpp"
#include "fcp/stats.hpp"

namespace fcp {

struct EdgeSemanticsSpec {
  int latent_dim = 0;
  enum class Init { zero, random } init = Init::zero;
};

/// Semantics file contents: the label -> dimension table, per-edge settings,
/// and the fixed likelihood variance tau. The dimension table is part of the
/// semantics, not the quiver, so one quiver can carry many semantics.
struct SemanticSpec {
  std::map<std::string, int> dims;  // key: label display form ("A" or "A,B")
  std::map<std::string, EdgeSemanticsSpec> edges;
  double tau = 0.1;
};

inline SemanticSpec parse_semantics(const std::string& text) {
  json j = parse_json(text, "semantics");
  require_format(j, "semantics");
  reject_unknown_fields(j, {"format", "dims", "edges", "tau"}, "semantics");
  SemanticSpec spec;
  const json& jd = require_field(j, "dims", "semantics");
  if (!jd.is_object()) throw ParseError("semantics: \"dims\" must be an object");
  for (auto it = jd.begin(); it != jd.end(); ++it) {
    if (!it->is_number_integer() || it->get<int>() < 0)
      throw ParseError("semantics: dimension of \"" + it.key() + "\" must be a nonnegative integer");
    spec.dims[it.key()] = it->get<int>();
  }
  if (auto it = j.find("edges"); it != j.end()) {
    if (!it->is_object()) throw ParseError("semantics: \"edges\" must be an object");
    for (auto je = it->begin(); je != it->end(); ++je) {
      reject_unknown_fields(*je, {"latent_dim", "init"}, "semantics edge");
      EdgeSemanticsSpec es;
      if (auto jl = je->find("latent_dim"); jl != je->end()) {
        if (!jl->is_number_integer() || jl->get<int>() < 0)
          throw ParseError("semantics edge: latent_dim must be a nonnegative integer");
        es.latent_dim = jl->get<int>();
      }
      if (auto ji = je->find("init"); ji != je->end()) {
        std::string s = ji->get<std::string>();
        if (s == "zero")
          es.init = EdgeSemanticsSpec::Init::zero;
        else if (s == "random")
          es.init = EdgeSemanticsSpec::Init::random;
        else
          throw ParseError("semantics edge: unknown init \"" + s + "\"");
      }
      spec.edges[je.key()] = es;
    }
  }
  if (auto it = j.find("tau"); it != j.end()) {
    if (!it->is_number() || !(it->get<double>() > 0.0))
      throw ParseError("semantics: tau must be a positive number");
    spec.tau = it->get<double>();
  }
  return spec;
}

/// Binds every generator edge to an affine-with-noise map
/// y = W [x; z_e] + b over real vectors; parameters live in one flat store.
class SemanticBinding {
 public:
  struct EdgeParams {
    EdgeId edge = -1;
    std::string name;
    int in_dim = 0;
    int out_dim = 0;
    int latent_dim = 0;
    std::size_t w_offset = 0;  // row-major out_dim x (in_dim + latent_dim)
    std::size_t b_offset = 0;
  };

  static SemanticBinding make(const Quiver& q, const SemanticSpec& spec, std::uint64_t seed = 0) {
    SemanticBinding b;
    b.spec_ = spec;
    b.unit_symbol_ = q.unit_symbol();
    for (const auto& [name, es] : spec.edges) {
      (void)es;
      if (!q.find_edge(name))
        throw ValidationError("semantics: edge \"" + name + "\" not in quiver");
    }
    b.by_edge_.assign(q.edges().size(), -1);
    for (const auto& e : q.edges()) {
      if (e.kind == EdgeKind::point_macro) continue;  // points expand, they carry no map
      EdgeParams p;
      p.edge = e.id;
      p.name = e.name;
      p.in_dim = b.dim_of_label(q.vertex(e.dom).label);
      p.out_dim = b.dim_of_label(q.vertex(e.cod).label);
      auto it = spec.edges.find(e.name);
      p.latent_dim = it == spec.edges.end() ? 0 : it->second.latent_dim;
      p.w_offset = b.theta_.size();
      std::size_t w_size = static_cast<std::size_t>(p.out_dim) *
                           static_cast<std::size_t>(p.in_dim + p.latent_dim);
      b.theta_.resize(b.theta_.size() + w_size, 0.0);
      p.b_offset = b.theta_.size();
      b.theta_.resize(b.theta_.size() + static_cast<std::size_t>(p.out_dim), 0.0);
      if (it != spec.edges.end() && it->second.init == EdgeSemanticsSpec::Init::random) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(e.id));
        double scale = 1.0 / std::sqrt(static_cast<double>(std::max(1, p.in_dim + p.latent_dim)));
        for (std::size_t k = 0; k < w_size; ++k) b.theta_[p.w_offset + k] = scale * rng.normal();
      }
      b.by_edge_[static_cast<std::size_t>(e.id)] = static_cast<int>(b.params_.size());
      b.params_.push_back(std::move(p));
    }
    return b;
  }

  /// Dimension of one vertex label: explicit table entry if present, else the
  /// sum over component symbols; the unit label maps to 0.
  int dim_of_label(const ObjectLabel& label) const {
    if (label.singleton() && label.symbols[0] == unit_symbol_) return 0;
    if (auto it = spec_.dims.find(label.str()); it != spec_.dims.end()) return it->second;
    int total = 0;
    for (const auto& s : label.symbols) {
      if (s == unit_symbol_) continue;
      auto it = spec_.dims.find(s);
      if (it == spec_.dims.end())
        throw DimensionError("semantics: no dimension for symbol \"" + s + "\"");
      total += it->second;
    }
    return total;
  }

  int dim_of_object(std::span<const ObjectLabel> labels) const {
    int total = 0;
    for (const auto& l : labels) total += dim_of_label(l);
    return total;
  }

  bool bound(EdgeId e) const {
    return e >= 0 && e < static_cast<EdgeId>(by_edge_.size()) &&
           by_edge_[static_cast<std::size_t>(e)] >= 0;
  }

  const EdgeParams& params(EdgeId e) const {
    if (!bound(e)) throw ValidationError("semantics: unbound edge id " + std::to_string(e));
    return params_[static_cast<std::size_t>(by_edge_[static_cast<std::size_t>(e)])];
  }

  const std::vector<EdgeParams>& all_params() const { return params_; }
  double tau() const { return spec_.tau; }
  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }
  std::size_t theta_size() const { return theta_.size(); }

 private:
  SemanticSpec spec_;
  std::string unit_symbol_;
  std::vector<double> theta_;
  std::vector<EdgeParams> params_;
  std::vector<int> by_edge_;
};

/// A compiled morphism: parallel strands of affine steps reflecting the
/// morphism tuple, plus the latent trace layout (per-edge-occurrence slices).
struct ConcreteMap {
  struct Step {
    EdgeId edge = -1;
    int in_dim = 0;
    int out_dim = 0;
    int latent_dim = 0;
    int z_offset = 0;
    int tape_index = -1;                        // plain steps only
    std::shared_ptr<const ConcreteMap> expansion;  // macro steps only
  };
  struct Strand {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<Step> steps;
  };
  std::vector<Strand> strands;
  int in_dim = 0;
  int out_dim = 0;
  int latent_dim = 0;
  int tape_size = 0;

  struct Slice {
    EdgeId edge;
    int offset;
    int len;
  };
  /// Flattened latent layout in traversal order.
  std::vector<Slice> latent_layout() const {
    std::vector<Slice> out;
    collect_slices(out);
    return out;
  }

 private:
  void collect_slices(std::vector<Slice>& out) const {
    for (const auto& strand : strands)
      for (const auto& step : strand.steps) {
        if (step.expansion)
          step.expansion->collect_slices(out);
        else if (step.latent_dim > 0)
          out.push_back({step.edge, step.z_offset, step.latent_dim});
      }
  }
};

namespace detail {

inline ConcreteMap build_map(const SemanticBinding& b, const Morphism& m, int& z_cursor,
                             int& tape_cursor) {
  ConcreteMap map;
  for (std::size_t i = 0; i < m.factors.size(); ++i) {
    ConcreteMap::Strand strand;
    strand.in_dim = b.dim_of_label(m.dom[i]);
    int at = strand.in_dim;
    for (const auto& step : m.factors[i].steps) {
      ConcreteMap::Step s;
      s.edge = step.edge;
      if (step.expansion) {
        auto sub = std::make_shared<ConcreteMap>(build_map(b, *step.expansion, z_cursor, tape_cursor));
        if (sub->in_dim != 0)
          throw DimensionError("semantics: macro expansion must start from the unit");
        s.in_dim = at;
        s.out_dim = sub->out_dim;
        if (s.in_dim != 0)
          throw DimensionError("semantics: macro step taken away from the unit");
        s.expansion = std::move(sub);
      } else {
        const auto& p = b.params(step.edge);
        if (p.in_dim != at)
          throw DimensionError("semantics: edge \"" + p.name + "\" input dimension mismatch");
        s.in_dim = p.in_dim;
        s.out_dim = p.out_dim;
        s.latent_dim = p.latent_dim;
        s.z_offset = z_cursor;
        z_cursor += p.latent_dim;
        s.tape_index = tape_cursor++;
      }
      at = s.out_dim;
      strand.steps.push_back(std::move(s));
    }
    strand.out_dim = at;
    int declared_out = b.dim_of_label(m.cod[i]);
    if (declared_out != strand.out_dim)
      throw DimensionError("semantics: factor codomain dimension mismatch");
    map.in_dim += strand.in_dim;
    map.out_dim += strand.out_dim;
    map.strands.push_back(std::move(strand));
  }
  return map;
}

}  // namespace detail

/// Functor action on morphisms: sequential composition becomes function
/// composition, parallel product becomes blockwise concatenation, identities
/// become identity maps; latent slices are laid out in traversal order.
inline ConcreteMap apply_functor(const SemanticBinding& b, const Morphism& m) {
  int z_cursor = 0;
  int tape_cursor = 0;
  ConcreteMap map = detail::build_map(b, m, z_cursor, tape_cursor);
  map.latent_dim = z_cursor;
  map.tape_size = tape_cursor;
  return map;
}

/// Forward evaluation record: the output plus each plain step's stacked
/// input [x; z_e] (needed by the backward pass).
struct Evaluation {
  std::vector<double> output;
  std::vector<std::vector<double>> step_inputs;
};

namespace detail {

inline std::vector<double> eval_strands(const SemanticBinding& b, const ConcreteMap& map,
                                        std::span<const double> input,
                                        std::span<const double> z, Evaluation* record) {
  if (static_cast<int>(input.size()) != map.in_dim)
    throw DimensionError("semantics eval: input dimension mismatch");
  std::vector<double> output;
  output.reserve(static_cast<std::size_t>(map.out_dim));
  std::size_t in_at = 0;
  const std::vector<double>& theta = b.theta();
  for (const auto& strand : map.strands) {
    std::vector<double> x(input.begin() + static_cast<long>(in_at),
                          input.begin() + static_cast<long>(in_at + strand.in_dim));
    in_at += static_cast<std::size_t>(strand.in_dim);
    for (const auto& step : strand.steps) {
      if (step.expansion) {
        x = eval_strands(b, *step.expansion, std::span<const double>{}, z, record);
        continue;
      }
      const auto& p = b.params(step.edge);
      std::vector<double> stacked = std::move(x);
      for (int k = 0; k < p.latent_dim; ++k)
        stacked.push_back(z[static_cast<std::size_t>(step.z_offset + k)]);
      std::vector<double> y(static_cast<std::size_t>(p.out_dim));
      int cols = p.in_dim + p.latent_dim;
      for (int r = 0; r < p.out_dim; ++r) {
        double acc = theta[p.b_offset + static_cast<std::size_t>(r)];
        const double* wrow = theta.data() + p.w_offset + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += wrow[c] * stacked[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = acc;
      }
      if (record) record->step_inputs[static_cast<std::size_t>(step.tape_index)] = std::move(stacked);
      x = std::move(y);
    }
    output.insert(output.end(), x.begin(), x.end());
  }
  return output;
}

inline void backward_strands(const SemanticBinding& b, const ConcreteMap& map,
                             const Evaluation& record, std::span<const double> dout,
                             std::vector<double>& grad_theta, std::vector<double>* dz) {
  const std::vector<double>& theta = b.theta();
  std::size_t out_at = 0;
  for (const auto& strand : map.strands) {
    std::vector<double> delta(dout.begin() + static_cast<long>(out_at),
                              dout.begin() + static_cast<long>(out_at + strand.out_dim));
    out_at += static_cast<std::size_t>(strand.out_dim);
    for (auto it = strand.steps.rbegin(); it != strand.steps.rend(); ++it) {
      const auto& step = *it;
      if (step.expansion) {
        backward_strands(b, *step.expansion, record, delta, grad_theta, dz);
        delta.assign(0, 0.0);
        continue;
      }
      const auto& p = b.params(step.edge);
      const auto& stacked = record.step_inputs[static_cast<std::size_t>(step.tape_index)];
      int cols = p.in_dim + p.latent_dim;
      std::vector<double> din(static_cast<std::size_t>(cols), 0.0);
      for (int r = 0; r < p.out_dim; ++r) {
        double d = delta[static_cast<std::size_t>(r)];
        grad_theta[p.b_offset + static_cast<std::size_t>(r)] += d;
        double* gwrow = grad_theta.data() + p.w_offset + static_cast<std::size_t>(r) * cols;
        const double* wrow = theta.data() + p.w_offset + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          gwrow[c] += d * stacked[static_cast<std::size_t>(c)];
          din[static_cast<std::size_t>(c)] += d * wrow[c];
        }
      }
      if (dz)
        for (int k = 0; k < p.latent_dim; ++k)
          (*dz)[static_cast<std::size_t>(step.z_offset + k)] += din[static_cast<std::size_t>(p.in_dim + k)];
      din.resize(static_cast<std::size_t>(p.in_dim));
      delta = std::move(din);
    }
  }
}

}  // namespace detail

inline Evaluation map_eval(const SemanticBinding& b, const ConcreteMap& map,
                           std::span<const double> input, std::span<const double> z) {
  if (static_cast<int>(z.size()) != map.latent_dim)
    throw DimensionError("semantics eval: latent dimension mismatch");
  Evaluation record;
  record.step_inputs.resize(static_cast<std::size_t>(map.tape_size));
  record.output = detail::eval_strands(b, map, input, z, &record);
  return record;
}

inline std::vector<double> map_forward(const SemanticBinding& b, const ConcreteMap& map,
                                       std::span<const double> input, std::span<const double> z) {
  if (static_cast<int>(z.size()) != map.latent_dim)
    throw DimensionError("semantics eval: latent dimension mismatch");
  return detail::eval_strands(b, map, input, z, nullptr);
}

/// Isotropic Gaussian log-density of x at the map's output (variance tau)
/// plus the standard-normal log-density of the injected latents.
inline double log_likelihood(const SemanticBinding& b, const ConcreteMap& map,
                             std::span<const double> x, std::span<const double> z, double tau,
                             std::span<const double> input = {}) {
  if (!(tau > 0.0)) throw ValidationError("log_likelihood: tau must be positive");
  std::vector<double> mean = map_forward(b, map, input, z);
  if (mean.size() != x.size()) throw DimensionError("log_likelihood: data dimension mismatch");
  return gaussian_logpdf(x, mean, tau) + std_normal_logpdf(z);
}

struct LikelihoodGrad {
  double log_likelihood = 0.0;
  std::vector<double> grad_theta;  // same layout as binding.theta()
  std::vector<double> grad_z;
};

/// Value and exact gradients of log_likelihood with respect to theta and z.
inline LikelihoodGrad log_likelihood_grad(const SemanticBinding& b, const ConcreteMap& map,
                                          std::span<const double> x, std::span<const double> z,
                                          double tau, std::span<const double> input = {}) {
  if (!(tau > 0.0)) throw ValidationError("log_likelihood: tau must be positive");
  Evaluation record = map_eval(b, map, input, z);
  if (record.output.size() != x.size())
    throw DimensionError("log_likelihood: data dimension mismatch");
  LikelihoodGrad out;
  out.log_likelihood = gaussian_logpdf(x, record.output, tau) + std_normal_logpdf(z);
  out.grad_theta.assign(b.theta_size(), 0.0);
  out.grad_z.assign(z.size(), 0.0);
  std::vector<double> dmean(record.output.size());
  for (std::size_t i = 0; i < dmean.size(); ++i)
    dmean[i] = (x[i] - record.output[i]) / tau;
  detail::backward_strands(b, map, record, dmean, out.grad_theta, &out.grad_z);
  for (std::size_t i = 0; i < z.size(); ++i) out.grad_z[i] -= z[i];  // d/dz of log p(z)
  return out;
}

// --- checkpointing ----------------------------------------------------------

/// Writes <prefix>.json (manifest) and <prefix>.bin (raw little-endian f64).
inline void save_checkpoint(const SemanticBinding& b, const std::string& prefix) {
  json manifest;
  manifest["format"] = kFormatTag;
  manifest["dtype"] = "float64";
  manifest["total"] = b.theta_size();
  manifest["data_file"] = prefix + ".bin";
  json edges = json::array();
  for (const auto& p : b.all_params()) {
    edges.push_back(json{{"name", p.name},
                         {"in_dim", p.in_dim},
                         {"out_dim", p.out_dim},
                         {"latent_dim", p.latent_dim},
                         {"w_offset", p.w_offset},
                         {"b_offset", p.b_offset}});
  }
  manifest["edges"] = std::move(edges);
  std::ofstream mf(prefix + ".json");
  if (!mf) throw Error("checkpoint: cannot write " + prefix + ".json");
  mf << manifest.dump(2) << "\n";
  std::ofstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw Error("checkpoint: cannot write " + prefix + ".bin");
  bf.write(reinterpret_cast<const char*>(b.theta().data()),
           static_cast<std::streamsize>(b.theta_size() * sizeof(double)));
}

inline void load_checkpoint(SemanticBinding& b, const std::string& prefix) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw Error("checkpoint: cannot read " + prefix + ".json");
  std::string text((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
  json manifest = parse_json(text, "checkpoint manifest");
  require_format(manifest, "checkpoint manifest");
  if (manifest.value("total", std::size_t{0}) != b.theta_size())
    throw ValidationError("checkpoint: parameter count mismatch");
  std::string data_file = manifest.value("data_file", prefix + ".bin");
  std::ifstream bf(data_file, std::ios::binary);
  if (!bf) throw Error("checkpoint: cannot read " + data_file);
  bf.read(reinterpret_cast<char*>(b.theta().data()),
          static_cast<std::streamsize>(b.theta_size() * sizeof(double)));
  if (static_cast<std::size_t>(bf.gcount()) != b.theta_size() * sizeof(double))
    throw Error("checkpoint: truncated data file");
}

}  // namespace fcp
