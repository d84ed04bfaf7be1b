// fcp: free category prior toolkit.
//
// Subcommands: validate, closure, distances, sample, evidence, train,
// export-dot. All file formats are documented in docs/formats.md. Every
// stochastic subcommand takes --seed and produces byte-identical output for
// identical invocations.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcp/fcp.hpp"
#include "fcp/parallel.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw fcp::Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::fwrite(content.data(), 1, content.size(), stdout);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw fcp::Error("cannot open output file: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<std::vector<double>> parse_data_file(const std::string& text) {
  fcp::json j = fcp::parse_json(text, "data");
  fcp::require_format(j, "data");
  fcp::reject_unknown_fields(j, {"format", "data"}, "data");
  const fcp::json& jd = fcp::require_field(j, "data", "data");
  if (!jd.is_array() || jd.empty()) throw fcp::ParseError("data: expected a non-empty array");
  std::vector<std::vector<double>> out;
  for (const auto& row : jd) {
    if (!row.is_array()) throw fcp::ParseError("data: rows must be arrays of numbers");
    std::vector<double> v;
    for (const auto& x : row) {
      if (!x.is_number()) throw fcp::ParseError("data: entries must be numbers");
      v.push_back(x.get<double>());
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string format_double(double x) {
  char buf[40];
  if (x == fcp::kPosInf) return "inf";
  if (x == fcp::kNegInf) return "-inf";
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

fcp::PolicyOptions policy_options_from(const std::string& energy_row) {
  fcp::PolicyOptions opt;
  opt.energy_row = energy_row == "edge" ? fcp::EnergyRow::edge : fcp::EnergyRow::cod;
  return opt;
}

struct CommonModel {
  fcp::Quiver quiver;
  fcp::DiagramPtr diagram;
  std::shared_ptr<const fcp::PolicyContext> ctx;
};

int run_validate(const std::string& quiver_path) {
  fcp::Quiver q = fcp::parse_quiver(read_file(quiver_path));
  fcp::ValidationReport report = fcp::validate_points_condition(q);
  if (report.ok()) {
    std::printf("valid\n");
    return 0;
  }
  for (fcp::VertexId v : report.offenders)
    std::printf("offender\t%s\n", q.vertex(v).label.str().c_str());
  return 1;
}

int run_closure(const std::string& quiver_path, int depth, const std::string& out) {
  fcp::Quiver q = fcp::parse_quiver(read_file(quiver_path));
  fcp::Quiver closed = fcp::monoidal_closure(q, depth);
  write_output(out, closed.to_json().dump(2) + "\n");
  return 0;
}

int run_distances(const std::string& quiver_path, const std::string& out) {
  fcp::Quiver q = fcp::parse_quiver(read_file(quiver_path));
  fcp::BipartiteGraph g = fcp::to_bipartite(q);
  fcp::Matrix c = fcp::communicability(fcp::adjacency_matrix(g));
  std::string text = "vertex";
  for (int j = 0; j < g.size(); ++j) text += "\t" + g.name_of(j);
  text += "\n";
  for (int i = 0; i < g.size(); ++i) {
    text += g.name_of(i);
    for (int j = 0; j < g.size(); ++j)
      text += "\t" + format_double(fcp::intuitive_distance(c, i, j));
    text += "\n";
  }
  write_output(out, text);
  return 0;
}

int run_sample(const std::string& quiver_path, const std::string& diagram_path, int n,
               std::uint64_t seed, std::optional<double> fixed_beta,
               std::optional<double> w_const, const fcp::SampleConfig& cfg,
               const std::string& energy_row, const std::string& out) {
  fcp::Quiver q = fcp::parse_quiver(read_file(quiver_path));
  fcp::DiagramPtr d = fcp::parse_diagram(read_file(diagram_path));
  auto report = fcp::validate_points_condition(q);
  if (!report.ok()) {
    for (fcp::VertexId v : report.offenders)
      std::fprintf(stderr, "offender\t%s\n", q.vertex(v).label.str().c_str());
    return 1;
  }
  auto ctx = fcp::make_policy_context(q, policy_options_from(energy_row));
  // One rng stream per emitted line, merged by index: output is identical
  // for any FCP_THREADS width.
  std::vector<std::string> lines(static_cast<std::size_t>(n));
  fcp::parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    fcp::Rng rng = fcp::Rng::stream(seed, i);
    auto [w, beta] = fcp::sample_globals(rng, ctx->graph.size());
    if (fixed_beta) beta = *fixed_beta;
    if (w_const) w.assign(w.size(), *w_const);
    fcp::PolicyState ps = fcp::make_policy_state(ctx, std::move(w), beta);
    fcp::SampledMorphism sm = fcp::sample_morphism(ps, q, *d, cfg, rng);
    lines[i] = fcp::sampled_morphism_to_json(q, sm).dump();
  });
  std::string text;
  for (const auto& line : lines) {
    text += line;
    text += "\n";
  }
  write_output(out, text);
  return 0;
}

struct InferenceSetup {
  fcp::Quiver quiver;
  fcp::DiagramPtr diagram;
  std::shared_ptr<const fcp::PolicyContext> ctx;
  std::shared_ptr<fcp::SemanticBinding> binding;
  fcp::VariationalState vs;
  std::vector<std::vector<double>> data;
};

InferenceSetup load_inference(const std::string& quiver_path, const std::string& diagram_path,
                              const std::string& semantics_path, const std::string& data_path,
                              std::uint64_t seed, const std::string& energy_row,
                              std::optional<double> tau_override,
                              const std::string& theta_checkpoint) {
  InferenceSetup s{fcp::parse_quiver(read_file(quiver_path)),
                   fcp::parse_diagram(read_file(diagram_path)),
                   nullptr,
                   nullptr,
                   {},
                   parse_data_file(read_file(data_path))};
  fcp::SemanticSpec spec = fcp::parse_semantics(read_file(semantics_path));
  if (tau_override) spec.tau = *tau_override;
  s.ctx = fcp::make_policy_context(s.quiver, policy_options_from(energy_row));
  s.binding = std::make_shared<fcp::SemanticBinding>(
      fcp::SemanticBinding::make(s.quiver, spec, seed));
  if (!theta_checkpoint.empty()) fcp::load_checkpoint(*s.binding, theta_checkpoint);
  s.vs = fcp::make_variational_state(s.ctx->graph.size(), s.binding);
  return s;
}

int run_evidence(InferenceSetup& s, int particles, std::uint64_t seed,
                 const fcp::SampleConfig& cfg, const std::string& out) {
  std::size_t k = static_cast<std::size_t>(particles);
  double total_log_z = 0.0;
  std::size_t dim = s.data.front().size();
  for (std::size_t di = 0; di < s.data.size(); ++di) {
    std::vector<double> lws(k, fcp::kNegInf);
    fcp::parallel_for(k, [&](std::size_t pi) {
      fcp::Rng rng = fcp::Rng::stream(seed, di * 0x100000000ULL + pi);
      fcp::WeightedSample ws = fcp::propose(s.vs, s.ctx, s.quiver, *s.diagram, cfg, rng);
      lws[pi] = fcp::log_weight(ws, s.vs, s.ctx, s.quiver, s.data[di]);
    });
    total_log_z += fcp::estimate_log_evidence(lws);
  }
  double log_z = total_log_z / static_cast<double>(s.data.size());
  char buf[128];
  std::string text;
  std::snprintf(buf, sizeof buf, "log_Z\t%.9f\n", log_z);
  text += buf;
  std::snprintf(buf, sizeof buf, "log_Z_per_dim\t%.9f\n", log_z / static_cast<double>(dim));
  text += buf;
  write_output(out, text);
  return 0;
}

int run_train(InferenceSetup& s, int steps, double lr, int particles, std::uint64_t seed,
              const fcp::SampleConfig& cfg, int checkpoint_every,
              const std::string& checkpoint_prefix, bool train_theta, const std::string& out) {
  fcp::TrainConfig tc;
  tc.learning_rate = lr;
  tc.particles = particles;
  tc.train_theta = train_theta;
  tc.sample = cfg;
  std::string text = "step\telbo\tess\tgrad_norm\n";
  char buf[160];
  for (int i = 0; i < steps; ++i) {
    fcp::StepDiagnostics diag = fcp::train_step(s.vs, s.data, s.ctx, s.quiver, *s.diagram, tc, seed);
    std::snprintf(buf, sizeof buf, "%ld\t%.9f\t%.6f\t%.9g\n", s.vs.step, diag.elbo, diag.ess,
                  diag.grad_norm);
    text += buf;
    if (checkpoint_every > 0 && !checkpoint_prefix.empty() && (i + 1) % checkpoint_every == 0)
      fcp::save_checkpoint(*s.binding, checkpoint_prefix + "_" + std::to_string(i + 1));
  }
  if (!checkpoint_prefix.empty()) fcp::save_checkpoint(*s.binding, checkpoint_prefix);
  write_output(out, text);
  return 0;
}

int run_export_dot(const std::string& quiver_path, const std::string& morphism_path,
                   const std::string& out) {
  fcp::Quiver q = fcp::parse_quiver(read_file(quiver_path));
  fcp::Morphism m = fcp::parse_morphism(q, read_file(morphism_path));
  write_output(out, fcp::morphism_to_dot(q, m));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"free category prior toolkit"};
  app.require_subcommand(1);

  std::string quiver_path, diagram_path, semantics_path, data_path, morphism_path;
  std::string out_path, checkpoint_prefix, theta_checkpoint;
  std::string energy_row = "cod";
  std::uint64_t seed = 0;
  int n = 1, depth = 1, evidence_particles = 1000, train_particles = 8, steps = 1200,
      checkpoint_every = 0;
  double lr = 1e-3;
  std::optional<double> fixed_beta, w_const, tau_override;
  bool no_train_theta = false;
  fcp::SampleConfig cfg;

  auto add_sampling_flags = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "rng seed (default 0)");
    cmd->parse_complete_callback([&] { cfg.seed = seed; });
    cmd->add_option("--max-path-len", cfg.max_path_len, "walk length cap before restart");
    cmd->add_option("--restarts", cfg.max_restarts, "restart budget");
    cmd->add_option("--energy-row", energy_row, "energy row index: cod (default) or edge")
        ->check(CLI::IsMember({"cod", "edge"}));
  };

  auto* validate = app.add_subcommand("validate", "check the points condition");
  validate->add_option("quiver", quiver_path, "quiver file")->required();

  auto* closure = app.add_subcommand("closure", "monoidal closure of a quiver");
  closure->add_option("quiver", quiver_path, "quiver file")->required();
  closure->add_option("--depth", depth, "closure passes (default 1)");
  closure->add_option("-o,--output", out_path, "output file (default stdout)");

  auto* distances = app.add_subcommand("distances", "intuitive distance table (TSV)");
  distances->add_option("quiver", quiver_path, "quiver file")->required();
  distances->add_option("-o,--output", out_path, "output file (default stdout)");

  auto* sample = app.add_subcommand("sample", "sample morphisms for a wiring diagram (JSONL)");
  sample->add_option("quiver", quiver_path, "quiver file")->required();
  sample->add_option("diagram", diagram_path, "wiring diagram file")->required();
  sample->add_option("-n,--samples", n, "number of samples");
  sample->add_option("--beta", fixed_beta, "fix the inverse temperature instead of drawing it");
  sample->add_option("--w-const", w_const, "fix every preference component instead of drawing w");
  sample->add_option("-o,--output", out_path, "output file (default stdout)");
  add_sampling_flags(sample);

  auto* evidence = app.add_subcommand("evidence", "importance estimate of log-evidence");
  evidence->add_option("quiver", quiver_path, "quiver file")->required();
  evidence->add_option("diagram", diagram_path, "wiring diagram file")->required();
  evidence->add_option("semantics", semantics_path, "semantics file")->required();
  evidence->add_option("data", data_path, "data file")->required();
  evidence->add_option("-k,--particles", evidence_particles, "importance particles per datum");
  evidence->add_option("--tau", tau_override, "override likelihood variance");
  evidence->add_option("--theta", theta_checkpoint, "load semantic parameters from checkpoint");
  evidence->add_option("-o,--output", out_path, "output file (default stdout)");
  add_sampling_flags(evidence);

  auto* train = app.add_subcommand("train", "stochastic-gradient ELBO ascent (TSV log)");
  train->add_option("quiver", quiver_path, "quiver file")->required();
  train->add_option("diagram", diagram_path, "wiring diagram file")->required();
  train->add_option("semantics", semantics_path, "semantics file")->required();
  train->add_option("data", data_path, "data file")->required();
  train->add_option("--steps", steps, "gradient steps (default 1200)");
  train->add_option("--lr", lr, "learning rate (default 1e-3)");
  train->add_option("-k,--particles", train_particles, "particles per datum per step");
  train->add_option("--tau", tau_override, "override likelihood variance");
  train->add_option("--theta", theta_checkpoint, "load semantic parameters from checkpoint");
  train->add_option("--checkpoint", checkpoint_prefix, "checkpoint path prefix");
  train->add_option("--checkpoint-every", checkpoint_every, "checkpoint period in steps");
  train->add_flag("--no-train-theta", no_train_theta, "freeze semantic parameters");
  train->add_option("-o,--output", out_path, "output file (default stdout)");
  add_sampling_flags(train);

  auto* export_dot = app.add_subcommand("export-dot", "render a morphism as DOT");
  export_dot->add_option("quiver", quiver_path, "quiver file")->required();
  export_dot->add_option("morphism", morphism_path, "morphism file")->required();
  export_dot->add_option("-o,--output", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(validate)) return run_validate(quiver_path);
    if (app.got_subcommand(closure)) return run_closure(quiver_path, depth, out_path);
    if (app.got_subcommand(distances)) return run_distances(quiver_path, out_path);
    if (app.got_subcommand(sample))
      return run_sample(quiver_path, diagram_path, n, seed, fixed_beta, w_const, cfg, energy_row,
                        out_path);
    if (app.got_subcommand(evidence)) {
      InferenceSetup s = load_inference(quiver_path, diagram_path, semantics_path, data_path,
                                        seed, energy_row, tau_override, theta_checkpoint);
      return run_evidence(s, evidence_particles, seed, cfg, out_path);
    }
    if (app.got_subcommand(train)) {
      InferenceSetup s = load_inference(quiver_path, diagram_path, semantics_path, data_path,
                                        seed, energy_row, tau_override, theta_checkpoint);
      return run_train(s, steps, lr, train_particles, seed, cfg, checkpoint_every,
                       checkpoint_prefix, !no_train_theta, out_path);
    }
    if (app.got_subcommand(export_dot)) return run_export_dot(quiver_path, morphism_path, out_path);
  } catch (const fcp::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const fcp::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
