#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fcp/fcp.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliEnv {
 public:
  CliEnv() {
    dir_ = fs::temp_directory_path() / ("fcp_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  ~CliEnv() { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& content) {
    fs::path p = dir_ / name;
    std::ofstream f(p, std::ios::binary);
    f << content;
    return p;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  CliRun run(const std::string& args, const std::string& env_prefix = "") const {
    fs::path out = dir_ / "stdout.txt";
    fs::path err = dir_ / "stderr.txt";
    std::string cmd = (env_prefix.empty() ? "" : env_prefix + " ") + std::string(FCP_CLI_PATH) +
                      " " + args + " > " + out.string() + " 2> " + err.string();
    int rc = std::system(cmd.c_str());
    CliRun r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

const char* kDiagramQ4 = R"({
  "format": "fcp/1",
  "diagram": {"box": {"dom": [["vA"]], "cod": [["vD"]]}}
})";

const char* kSemanticsQ4 = R"({
  "format": "fcp/1",
  "dims": {"vB": 2, "vC": 2, "vD": 2},
  "edges": {"f": {"init": "random"}, "k": {"latent_dim": 1, "init": "random"}},
  "tau": 0.5
})";

const char* kDataQ4 = R"({
  "format": "fcp/1",
  "data": [[0.2, 0.1], [0.0, -0.3], [0.4, 0.2]]
})";

}  // namespace

TEST_CASE("validate subcommand") {
  CliEnv env;
  auto good = env.write("q4.json", fixtures::kQ4);
  auto bad = env.write("bad.json", fixtures::kUnpointed);
  SECTION("valid quiver exits 0") {
    CliRun r = env.run("validate " + good.string());
    CHECK(r.exit_code == 0);
    CHECK(r.out == "valid\n");
  }
  SECTION("offender listed, exit 1") {
    CliRun r = env.run("validate " + bad.string());
    CHECK(r.exit_code == 1);
    CHECK(r.out == "offender\tA\n");
  }
  SECTION("parse failure exits 1") {
    auto broken = env.write("broken.json", "{");
    CliRun r = env.run("validate " + broken.string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("error") != std::string::npos);
  }
  SECTION("missing file is a runtime error, exit 2") {
    CliRun r = env.run("validate " + env.path("nope.json").string());
    CHECK(r.exit_code == 2);
  }
  SECTION("usage error exits nonzero") {
    CliRun r = env.run("validate");
    CHECK(r.exit_code != 0);
  }
}

TEST_CASE("closure subcommand round-trips through the parser") {
  CliEnv env;
  auto in = env.write("pp.json", fixtures::kPointPair);
  CliRun r = env.run("closure " + in.string());
  REQUIRE(r.exit_code == 0);
  fcp::Quiver closed = fcp::parse_quiver(r.out);
  CHECK(closed.vertices().size() == 7);
  CHECK(closed.edges().size() == 6);
  // Closing the closure changes nothing.
  auto again = env.write("closed.json", r.out);
  CliRun r2 = env.run("closure " + again.string());
  CHECK(r2.out == r.out);
}

TEST_CASE("distances subcommand prints the full quasimetric table") {
  CliEnv env;
  auto in = env.write("q4.json", fixtures::kQ4);
  CliRun r = env.run("distances " + in.string());
  REQUIRE(r.exit_code == 0);
  std::istringstream ss(r.out);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "vertex\tvA\tvB\tvC\tvD\tf\tg\th1\th2\tk");
  // 9 data rows follow; unreachable pairs print as inf.
  int rows = 0;
  std::string line;
  bool saw_inf = false, saw_zero = false;
  while (std::getline(ss, line)) {
    ++rows;
    if (line.find("\tinf") != std::string::npos) saw_inf = true;
    if (line.find("\t-0\t") != std::string::npos || line.find("\t0\t") != std::string::npos)
      saw_zero = true;
  }
  CHECK(rows == 9);
  CHECK(saw_inf);
  CHECK(saw_zero);
  SECTION("byte-identical on repetition") {
    CliRun r2 = env.run("distances " + in.string());
    CHECK(r2.out == r.out);
  }
}

TEST_CASE("sample subcommand frequencies match the exact Q4 values") {
  CliEnv env;
  auto q = env.write("q4.json", fixtures::kQ4);
  auto d = env.write("diagram.json", kDiagramQ4);
  CliRun r = env.run("sample " + q.string() + " " + d.string() +
                     " -n 100000 --seed 7 --beta 1 --w-const 0");
  REQUIRE(r.exit_code == 0);
  fcp::Quiver quiver = fixtures::q4();
  std::istringstream ss(r.out);
  std::string line;
  std::map<std::string, int> counts;
  int total = 0;
  while (std::getline(ss, line)) {
    fcp::json j = fcp::json::parse(line);
    REQUIRE(j.contains("morphism"));
    REQUIRE(j.contains("log_prob_structure"));
    REQUIRE(j.contains("beta"));
    REQUIRE(j.contains("restarts"));
    CHECK(j["beta"].get<double>() == 1.0);
    CHECK(j["restarts"].get<int>() == 0);
    if (total < 64) {
      // Round-trip a prefix of the stream through the morphism parser.
      fcp::Morphism m = fcp::morphism_from_json(quiver, j["morphism"]);
      double lp = fcp::path_log_prob(fixtures::state_at(quiver, 0.0, 1.0), m.factors[0],
                                     m.factors[0].src, m.factors[0].dst);
      CHECK(lp == Catch::Approx(j["log_prob_structure"].get<double>()).margin(1e-9));
    }
    std::string key;
    for (const auto& step : j["morphism"]["factors"][0]) key += step.get<std::string>() + ";";
    ++counts[key];
    ++total;
  }
  REQUIRE(total == 100000);
  REQUIRE(counts.size() == 3);
  std::vector<double> freq, exact;
  for (const auto& [k, c] : counts) {
    freq.push_back(static_cast<double>(c) / total);
    exact.push_back(1.0 / 3.0);
  }
  CHECK(oracles::total_variation(freq, exact) < 0.01);
}

TEST_CASE("sample subcommand is byte-deterministic under a fixed seed") {
  CliEnv env;
  auto q = env.write("q4.json", fixtures::kQ4);
  auto d = env.write("diagram.json", kDiagramQ4);
  CliRun a = env.run("sample " + q.string() + " " + d.string() + " -n 500 --seed 42");
  CliRun b = env.run("sample " + q.string() + " " + d.string() + " -n 500 --seed 42");
  REQUIRE(a.exit_code == 0);
  CHECK(a.out == b.out);
  CliRun c = env.run("sample " + q.string() + " " + d.string() + " -n 500 --seed 43");
  CHECK(a.out != c.out);
  SECTION("output does not depend on the concurrency width") {
    CliRun wide = env.run("sample " + q.string() + " " + d.string() + " -n 500 --seed 42",
                          "FCP_THREADS=4");
    CHECK(wide.out == a.out);
  }
}

TEST_CASE("evidence is independent of FCP_THREADS") {
  CliEnv env;
  auto q = env.write("q4.json", fixtures::kQ4);
  auto d = env.write("diagram.json", kDiagramQ4);
  auto s = env.write("semantics.json", kSemanticsQ4);
  auto x = env.write("data.json", kDataQ4);
  std::string args = "evidence " + q.string() + " " + d.string() + " " + s.string() + " " +
                     x.string() + " -k 300 --seed 5";
  CliRun narrow = env.run(args);
  CliRun wide = env.run(args, "FCP_THREADS=4");
  REQUIRE(narrow.exit_code == 0);
  CHECK(narrow.out == wide.out);
}

TEST_CASE("sample subcommand rejects an invalid quiver with exit 1") {
  CliEnv env;
  auto q = env.write("bad.json", fixtures::kUnpointed);
  auto d = env.write("diagram.json", kDiagramQ4);
  CliRun r = env.run("sample " + q.string() + " " + d.string() + " -n 5");
  CHECK(r.exit_code == 1);
}

TEST_CASE("evidence subcommand") {
  CliEnv env;
  auto q = env.write("q4.json", fixtures::kQ4);
  auto d = env.write("diagram.json", kDiagramQ4);
  auto s = env.write("semantics.json", kSemanticsQ4);
  auto x = env.write("data.json", kDataQ4);
  std::string args = "evidence " + q.string() + " " + d.string() + " " + s.string() + " " +
                     x.string() + " -k 200 --seed 5";
  CliRun r = env.run(args);
  REQUIRE(r.exit_code == 0);
  std::istringstream ss(r.out);
  std::string l1, l2;
  std::getline(ss, l1);
  std::getline(ss, l2);
  CHECK(l1.rfind("log_Z\t", 0) == 0);
  CHECK(l2.rfind("log_Z_per_dim\t", 0) == 0);
  double log_z = std::stod(l1.substr(6));
  double per_dim = std::stod(l2.substr(14));
  CHECK(per_dim == Catch::Approx(log_z / 2.0).margin(1e-6));
  SECTION("deterministic") {
    CliRun r2 = env.run(args);
    CHECK(r2.out == r.out);
  }
}

TEST_CASE("train subcommand") {
  CliEnv env;
  auto q = env.write("q4.json", fixtures::kQ4);
  auto d = env.write("diagram.json", kDiagramQ4);
  auto s = env.write("semantics.json", kSemanticsQ4);
  auto x = env.write("data.json", kDataQ4);
  std::string ckpt = env.path("theta").string();
  std::string args = "train " + q.string() + " " + d.string() + " " + s.string() + " " +
                     x.string() + " --steps 5 -k 4 --seed 5 --checkpoint " + ckpt;
  CliRun r = env.run(args);
  REQUIRE(r.exit_code == 0);
  std::istringstream ss(r.out);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "step\telbo\tess\tgrad_norm");
  int rows = 0;
  std::string line;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == 5);
  CHECK(fs::exists(ckpt + ".json"));
  CHECK(fs::exists(ckpt + ".bin"));
  SECTION("deterministic log") {
    CliRun r2 = env.run(args);
    CHECK(r2.out == r.out);
  }
  SECTION("checkpoint loads back into evidence") {
    CliRun r2 = env.run("evidence " + q.string() + " " + d.string() + " " + s.string() + " " +
                        x.string() + " -k 50 --seed 1 --theta " + ckpt);
    CHECK(r2.exit_code == 0);
  }
}

TEST_CASE("export-dot subcommand") {
  CliEnv env;
  auto q = env.write("q4.json", fixtures::kQ4);
  auto m = env.write("m.json", R"({"format": "fcp/1", "morphism":
    {"dom": [["vA"]], "cod": [["vD"]], "factors": [["f", "h1"]]}})");
  CliRun r = env.run("export-dot " + q.string() + " " + m.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.rfind("digraph morphism {", 0) == 0);
  CHECK(r.out.find("label=\"f\"") != std::string::npos);
  CHECK(r.out.find("label=\"h1\"") != std::string::npos);
  // Braces balance.
  int depth = 0;
  for (char c : r.out) {
    if (c == '{') ++depth;
    if (c == '}') --depth;
    REQUIRE(depth >= 0);
  }
  CHECK(depth == 0);
}
