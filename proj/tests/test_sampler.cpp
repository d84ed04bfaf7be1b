#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "fcp/sampler.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fcp;
using fixtures::L;
using fixtures::P;

namespace {

std::string path_key(const Quiver& q, const Path& p) {
  std::string s;
  for (const auto& step : p.steps) {
    s += q.edge(step.edge).name;
    s += ";";
  }
  return s;
}

}  // namespace

TEST_CASE("a forced box samples its only path deterministically") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(1);
  SampleConfig cfg;
  auto d = box(P({"vC"}), P({"vD"}));
  for (int i = 0; i < 20; ++i) {
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    REQUIRE(sm.morphism.factors.size() == 1);
    REQUIRE(sm.morphism.factors[0].length() == 1);
    CHECK(q.edge(sm.morphism.factors[0].steps[0].edge).name == "k");
    CHECK(sm.log_prob_structure == Catch::Approx(0.0).margin(1e-12));
    CHECK(sm.restarts_used == 0);
  }
}

TEST_CASE("identity diagrams sample identity morphisms with zero log-prob") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(2);
  SampleConfig cfg;
  SampledMorphism sm = sample_morphism(ps, q, *identity(P({"vB"})), cfg, rng);
  REQUIRE(sm.morphism.factors.size() == 1);
  CHECK(sm.morphism.factors[0].empty());
  CHECK(sm.morphism.factors[0].src == *q.find_vertex(L({"vB"})));
  CHECK(sm.log_prob_structure == 0.0);
  CHECK(sm.restarts_used == 0);
}

TEST_CASE("parallel point boxes sample independent factors with additive log-prob") {
  Quiver q = fixtures::point_pair();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(4);
  SampleConfig cfg;
  auto d = par(box(PortList{}, P({"A"})), box(PortList{}, P({"A"})));
  SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
  REQUIRE(sm.morphism.factors.size() == 2);
  for (const auto& factor : sm.morphism.factors) {
    CHECK(factor.src == q.unit());
    CHECK(q.vertex(factor.dst).label == L({"A"}));
  }
  double each = path_log_prob(ps, sm.morphism.factors[0], q.unit(), sm.morphism.factors[0].dst);
  double other = path_log_prob(ps, sm.morphism.factors[1], q.unit(), sm.morphism.factors[1].dst);
  CHECK(sm.log_prob_structure == Catch::Approx(each + other).margin(1e-12));
}

TEST_CASE("empirical path frequencies match the exact Q4 distribution") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(7);
  SampleConfig cfg;
  auto d = box(P({"vA"}), P({"vD"}));
  const int kN = 100000;
  std::map<std::string, int> counts;
  for (int i = 0; i < kN; ++i) {
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    ++counts[path_key(q, sm.morphism.factors[0])];
    REQUIRE(sm.restarts_used == 0);  // acyclic and L_max is generous
  }
  REQUIRE(counts.size() == 3);
  std::vector<double> freq, exact;
  for (const auto& [key, c] : counts) {
    freq.push_back(static_cast<double>(c) / kN);
    exact.push_back(1.0 / 3.0);
  }
  CHECK(oracles::total_variation(freq, exact) < 0.01);
}

TEST_CASE("unreachable codomain dead-ends") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(3);
  SampleConfig cfg;
  cfg.max_restarts = 3;
  auto d = box(P({"vD"}), P({"vA"}));
  CHECK_THROWS_AS(sample_morphism(ps, q, *d, cfg, rng), DeadEndError);
}

TEST_CASE("length overflow on a cyclic quiver exhausts restarts") {
  Quiver q = parse_quiver(R"({
    "format": "fcp/1", "symbols": ["U", "A", "B"], "unit": "U",
    "vertices": [{"label": ["U"]}, {"label": ["A"]}, {"label": ["B"]}],
    "edges": [
      {"name": "p", "dom": ["U"], "cod": ["A"]},
      {"name": "loop", "dom": ["A"], "cod": ["A"]},
      {"name": "f", "dom": ["A"], "cod": ["B"]}
    ]
  })");
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(5);
  SampleConfig cfg;
  cfg.max_path_len = 0;
  cfg.max_restarts = 4;
  auto d = box(P({"A"}), P({"B"}));
  CHECK_THROWS_AS(sample_morphism(ps, q, *d, cfg, rng), RestartsExhaustedError);
}

TEST_CASE("macro_expand") {
  Quiver q = monoidal_closure(fixtures::point_pair());
  SECTION("point into AB becomes Box(I->A) parallel Box(I->B)") {
    const Edge& e = q.edge(*q.find_edge("pt:A*B"));
    DiagramPtr d = macro_expand(e, q);
    CHECK(d->dom().empty());
    CHECK(d->cod() == P({"A", "B"}));
    auto leaves = d->leaves();
    REQUIRE(leaves.size() == 2);
    CHECK(leaves[0]->cod == P({"A"}));
    CHECK(leaves[1]->cod == P({"B"}));
  }
  SECTION("point into AA") {
    const Edge& e = q.edge(*q.find_edge("pt:A*A"));
    DiagramPtr d = macro_expand(e, q);
    auto leaves = d->leaves();
    REQUIRE(leaves.size() == 2);
    CHECK(leaves[0]->cod == P({"A"}));
    CHECK(leaves[1]->cod == P({"A"}));
  }
  SECTION("generator edges are not expandable") {
    const Edge& e = q.edge(*q.find_edge("pA"));
    CHECK_THROWS_AS(macro_expand(e, q), TypeError);
  }
}

TEST_CASE("sampling a box into a product walks the synthesized point") {
  Quiver q = monoidal_closure(fixtures::point_pair());
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(11);
  SampleConfig cfg;
  auto d = box(PortList{}, PortList{Port{L({"A", "B"})}});
  for (int i = 0; i < 50; ++i) {
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    REQUIRE(sm.morphism.factors.size() == 1);
    const Path& p = sm.morphism.factors[0];
    REQUIRE(p.length() == 1);
    const PathStep& step = p.steps[0];
    CHECK(q.edge(step.edge).name == "pt:A*B");
    REQUIRE(step.expansion);
    REQUIRE(step.expansion->factors.size() == 2);
    CHECK(q.vertex(step.expansion->factors[0].dst).label == L({"A"}));
    CHECK(q.vertex(step.expansion->factors[1].dst).label == L({"B"}));
    // Stored log-prob equals recomputation through the expansion.
    CHECK(sm.log_prob_structure ==
          Catch::Approx(structure_log_prob(ps, q, sm.morphism)).margin(1e-9));
  }
}

TEST_CASE("identity composition leaves the sampled distribution unchanged") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  SampleConfig cfg;
  auto bare = box(P({"vA"}), P({"vD"}));
  auto framed = seq(box(P({"vA"}), P({"vD"})), identity(P({"vD"})));
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng r1(s), r2(s);
    SampledMorphism a = sample_morphism(ps, q, *bare, cfg, r1);
    SampledMorphism b = sample_morphism(ps, q, *framed, cfg, r2);
    CHECK(morphisms_equal(a.morphism, b.morphism));
    CHECK(a.log_prob_structure == b.log_prob_structure);
  }
}

TEST_CASE("parallel factors are independent and their log-probs add") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  Rng rng(13);
  SampleConfig cfg;
  auto d = par(box(P({"vA"}), P({"vD"})), box(P({"vA"}), P({"vD"})));
  const int kN = 20000;
  std::map<std::pair<std::string, std::string>, int> joint;
  std::map<std::string, int> top, bottom;
  for (int i = 0; i < kN; ++i) {
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    REQUIRE(sm.morphism.factors.size() == 2);
    double lp0 = path_log_prob(ps, sm.morphism.factors[0], sm.morphism.factors[0].src,
                               sm.morphism.factors[0].dst);
    double lp1 = path_log_prob(ps, sm.morphism.factors[1], sm.morphism.factors[1].src,
                               sm.morphism.factors[1].dst);
    CHECK(sm.log_prob_structure == Catch::Approx(lp0 + lp1).margin(1e-9));
    std::string a = path_key(q, sm.morphism.factors[0]);
    std::string b = path_key(q, sm.morphism.factors[1]);
    ++joint[{a, b}];
    ++top[a];
    ++bottom[b];
  }
  // Chi-square independence test on the 3x3 contingency table, alpha = 0.01.
  double stat = 0.0;
  for (const auto& [ka, ca] : top) {
    for (const auto& [kb, cb] : bottom) {
      double expected = static_cast<double>(ca) * cb / kN;
      auto it = joint.find({ka, kb});
      double observed = it == joint.end() ? 0.0 : it->second;
      stat += (observed - expected) * (observed - expected) / expected;
    }
  }
  CHECK(stat < oracles::chi2_crit_01(4));
}

TEST_CASE("walks may pass through the unit vertex") {
  Quiver q = parse_quiver(R"({
    "format": "fcp/1", "symbols": ["U", "A", "B"], "unit": "U",
    "vertices": [{"label": ["U"]}, {"label": ["A"]}, {"label": ["B"]}],
    "edges": [
      {"name": "pA", "dom": ["U"], "cod": ["A"]},
      {"name": "drop", "dom": ["A"], "cod": ["U"]},
      {"name": "pB", "dom": ["U"], "cod": ["B"]}
    ]
  })");
  PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
  SampleConfig cfg;
  SECTION("single chain A -> U -> B") {
    Rng rng(2);
    auto d = box(P({"A"}), P({"B"}));
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    REQUIRE(sm.morphism.factors.size() == 1);
    CHECK(sm.morphism.factors[0].length() >= 2);
    CHECK(q.edge(sm.morphism.factors[0].steps[0].edge).name == "drop");
    CHECK(q.edge(sm.morphism.factors[0].steps.back().edge).name == "pB");
  }
  SECTION("unit-boundary diagrams compose via padding") {
    Rng rng(2);
    auto d = seq(box(P({"A"}), PortList{}), identity({}));
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    REQUIRE(sm.morphism.factors.size() == 1);
    CHECK(q.edge(sm.morphism.factors[0].steps[0].edge).name == "drop");
  }
  SECTION("merging two unit-ending strands into one consumer") {
    Rng rng(2);
    auto d = seq(par(box(P({"A"}), PortList{}), box(P({"A"}), PortList{})),
                 box(PortList{}, P({"B"})));
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    REQUIRE(sm.morphism.factors.size() == 2);
    CHECK(same_object(sm.morphism.dom, std::vector<ObjectLabel>{L({"A"}), L({"A"})},
                      q.unit_symbol()));
    CHECK(same_object(sm.morphism.cod, std::vector<ObjectLabel>{L({"B"})}, q.unit_symbol()));
  }
}

TEST_CASE("log_joint closed form") {
  Quiver q = fixtures::q4();
  SampleConfig cfg;
  const int kDim = 9;
  SECTION("forced single-edge morphism at w=0, beta=1") {
    PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
    Rng rng(1);
    auto d = box(P({"vC"}), P({"vD"}));
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    double expected = -1.0 + kDim * std::log(1.0 / std::sqrt(2.0 * M_PI));
    CHECK(log_joint(sm, *d, q) == Catch::Approx(expected).margin(1e-10));
  }
  SECTION("path (f, h1) adds log(1/3)") {
    PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
    auto d = box(P({"vA"}), P({"vD"}));
    for (std::uint64_t s = 0;; ++s) {
      Rng rng(s);
      SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
      if (path_key(q, sm.morphism.factors[0]) != "f;h1;") continue;
      double expected = -1.0 + kDim * std::log(1.0 / std::sqrt(2.0 * M_PI)) + std::log(1.0 / 3.0);
      CHECK(log_joint(sm, *d, q) == Catch::Approx(expected).margin(1e-10));
      break;
    }
  }
  SECTION("structure term is additive over boxes") {
    PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
    Rng rng(17);
    auto d2 = par(box(P({"vA"}), P({"vD"})), box(P({"vA"}), P({"vD"})));
    SampledMorphism sm = sample_morphism(ps, q, *d2, cfg, rng);
    double base = -1.0 + kDim * std::log(1.0 / std::sqrt(2.0 * M_PI));
    CHECK(log_joint(sm, *d2, q) == Catch::Approx(base + sm.log_prob_structure).margin(1e-10));
  }
  SECTION("morphism inconsistent with the diagram is rejected") {
    PolicyState ps = fixtures::state_at(q, 0.0, 1.0);
    Rng rng(1);
    auto d = box(P({"vC"}), P({"vD"}));
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    auto other = box(P({"vB"}), P({"vD"}));
    CHECK_THROWS_AS(log_joint(sm, *other, q), TypeError);
  }
}

TEST_CASE("sampler/density consistency across random globals") {
  Quiver q = monoidal_closure(fixtures::point_pair());
  auto ctx = make_policy_context(q);
  Rng rng(101);
  SampleConfig cfg;
  auto d = par(box(PortList{}, PortList{Port{L({"A", "B"})}}), box(P({"B"}), P({"B"})));
  for (int trial = 0; trial < 200; ++trial) {
    auto [w, beta] = sample_globals(rng, ctx->graph.size());
    PolicyState ps = make_policy_state(ctx, std::move(w), beta);
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    CHECK(sm.log_prob_structure ==
          Catch::Approx(structure_log_prob(ps, q, sm.morphism)).margin(1e-9));
    CHECK(same_object(sm.morphism.dom, std::vector<ObjectLabel>{L({"B"})}, q.unit_symbol()));
  }
}

TEST_CASE("small beta concentrates walks on the shortest-energy branch") {
  Quiver q = fixtures::q4();
  PolicyState ps = fixtures::state_at(q, 0.0, 1e-3);
  Rng rng(23);
  SampleConfig cfg;
  auto d = box(P({"vA"}), P({"vD"}));
  int f_paths = 0;
  const int kN = 2000;
  for (int i = 0; i < kN; ++i) {
    SampledMorphism sm = sample_morphism(ps, q, *d, cfg, rng);
    if (q.edge(sm.morphism.factors[0].steps[0].edge).name == "f") ++f_paths;
  }
  CHECK(f_paths == kN);
}
