#include "doctest.h"
#include "grail/error.hpp"
#include "grail/logic.hpp"
#include "grail/rng.hpp"
#include "oracles.hpp"

using namespace grail;

namespace {

// u=0, z=1, v=2; u->z (r1), z->v (r2); rule head r0.
KnowledgeGraph chain() { return oracle::make_graph(3, 3, {{0, 1, 1}, {1, 2, 2}}); }

}  // namespace

TEST_CASE("rule satisfaction on a chain") {
  const auto g = chain();
  const PathRule fwd{0, {1, 2}}, rev{0, {2, 1}};
  const auto m = rule_satisfied(g, fwd, 0, 2);
  CHECK(m.satisfied);
  CHECK(m.witness == std::vector<EntityId>{1});
  CHECK(!rule_satisfied(g, rev, 0, 2).satisfied);
  CHECK(count_satisfied(g, std::vector<PathRule>{}, 0, 2) == 0);
  CHECK(count_satisfied(g, std::vector<PathRule>{fwd, rev}, 0, 2) == 1);
  CHECK_THROWS_AS(count_satisfied(g, std::vector<PathRule>{fwd, PathRule{1, {1}}}, 0, 2), Error);
  CHECK(fwd.to_string(&g.relations()) == "r0(X,Y) <- r1(X,Z1) ^ r2(Z1,Y)");
}

TEST_CASE("rule satisfaction and walk counts agree with enumeration") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = oracle::random_graph(rng, 10, 3, rng.uniform_index(25));
    PathRule rule{0, {}};
    const std::size_t len = 1 + rng.uniform_index(3);
    for (std::size_t i = 0; i < len; ++i) rule.body.push_back(static_cast<RelationId>(rng.uniform_index(3)));
    const auto u = static_cast<EntityId>(rng.uniform_index(10));
    const auto v = static_cast<EntityId>(rng.uniform_index(10));
    const double walks = oracle::count_walks(g, rule.body, u, v);
    const auto m = rule_satisfied(g, rule, u, v);
    REQUIRE(m.satisfied == (walks > 0));
    CHECK(count_walks(g, rule.body, u, v) == walks);
    if (m.satisfied) {
      REQUIRE(m.witness.size() == len - 1);
      std::vector<EntityId> path{u};
      path.insert(path.end(), m.witness.begin(), m.witness.end());
      path.push_back(v);
      for (std::size_t i = 0; i < len; ++i) CHECK(g.contains({path[i], rule.body[i], path[i + 1]}));
    }
  }
}

TEST_CASE("count_satisfied sums the individual verdicts") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_graph(rng, 8, 3, 16);
    std::vector<PathRule> rules;
    int expect = 0;
    const auto u = static_cast<EntityId>(rng.uniform_index(8));
    const auto v = static_cast<EntityId>(rng.uniform_index(8));
    for (int i = 0; i < 4; ++i) {
      PathRule r{2, {static_cast<RelationId>(rng.uniform_index(3)), static_cast<RelationId>(rng.uniform_index(3))}};
      expect += oracle::count_walks(g, r.body, u, v) > 0;
      rules.push_back(r);
    }
    CHECK(count_satisfied(g, rules, u, v) == expect);
  }
}

TEST_CASE("constructed model detects the rule on a chain") {
  const auto g = chain();
  const auto fwd = construct_rule_params({0, {1, 2}}, 3);
  CHECK(fwd.config.num_layers == 2);
  CHECK(fwd.config.hidden_dim == 1);
  CHECK(rule_model_score(fwd, g, 0, 2) == doctest::Approx(1.0).epsilon(1e-12));
  const auto cut = oracle::make_graph(3, 3, {{0, 1, 1}});
  CHECK(rule_model_score(fwd, cut, 0, 2) == 0.0);
  const auto swapped = oracle::make_graph(3, 3, {{0, 2, 1}, {1, 1, 2}});
  CHECK(rule_model_score(fwd, swapped, 0, 2) == 0.0);
  CHECK(rule_model_score(fwd, oracle::make_graph(3, 3, {}), 0, 2) == 0.0);
  CHECK_THROWS_AS(construct_rule_params({0, {1, 2, 1, 2}}, 3), Error);
  CHECK_THROWS_AS(construct_rule_params({0, {5}}, 3), Error);
  CHECK_THROWS_AS(construct_rule_params({0, {}}, 3), Error);
}

TEST_CASE("constructed scores count walks exactly") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t R = 1 + rng.uniform_index(4);
    const auto g = oracle::random_graph(rng, 8, R, rng.uniform_index(30));
    PathRule rule{0, {}};
    const std::size_t len = 1 + rng.uniform_index(3);
    for (std::size_t i = 0; i < len; ++i) rule.body.push_back(static_cast<RelationId>(rng.uniform_index(R)));
    const auto model = construct_rule_params(rule, R);
    const auto u = static_cast<EntityId>(rng.uniform_index(8));
    const auto v = static_cast<EntityId>(rng.uniform_index(8));
    const double walks = oracle::count_walks(g, rule.body, u, v);
    const double score = rule_model_score(model, g, u, v);
    CHECK(std::abs(score - walks) <= 1e-9 * std::max(1.0, walks));
    CHECK((score != 0.0) == (walks > 0));
  }
}

TEST_CASE("summed rule-set scores scale with the number of satisfied rules") {
  // Three rules with disjoint bodies; instance b satisfies the first b of them
  // via one path each.
  const std::vector<PathRule> rules{{0, {1, 2}}, {0, {3}}, {0, {2, 2}}};
  std::vector<RuleModel> models;
  for (const auto& r : rules) models.push_back(construct_rule_params(r, 4));
  std::vector<double> scores;
  for (int beta = 1; beta <= 3; ++beta) {
    std::vector<Triple> ts{{0, 1, 2}, {2, 2, 1}};
    if (beta >= 2) ts.push_back({0, 3, 1});
    if (beta >= 3) {
      ts.push_back({0, 2, 3});
      ts.push_back({3, 2, 1});
    }
    const auto g = oracle::make_graph(4, 4, ts);
    CHECK(count_satisfied(g, rules, 0, 1) == beta);
    scores.push_back(rule_set_score(models, g, 0, 1));
  }
  CHECK(scores[1] == doctest::Approx(2 * scores[0]).epsilon(1e-12));
  CHECK(scores[2] == doctest::Approx(3 * scores[0]).epsilon(1e-12));
}

TEST_CASE("constructed parameters depend only on the rule and relation count") {
  const PathRule rule{1, {0, 2, 1}};
  const auto a = construct_rule_params(rule, 3);
  const auto b = construct_rule_params(rule, 3);
  CHECK(oracle::flatten(a.params) == oracle::flatten(b.params));
  Rng rng(4);
  const auto g1 = oracle::random_graph(rng, 6, 3, 10);
  const auto g2 = oracle::random_graph(rng, 9, 3, 30);
  rule_model_score(a, g1, 0, 1);
  rule_model_score(a, g2, 0, 1);
  CHECK(oracle::flatten(a.params) == oracle::flatten(b.params));
}

TEST_CASE("verifier input labels only the head node") {
  const auto g = chain();
  const auto s = verifier_input(g, 0, 2, 0);
  CHECK(s.features == std::vector<double>{1, 0, 0});
  CHECK(s.nodes[s.target_v] == 2);
  CHECK(s.edges.size() == 2);
  const auto loop = verifier_input(g, 1, 1, 0);
  CHECK(loop.target_v == 0);
  CHECK(loop.nodes.size() == 3);
}

TEST_CASE("a short verification run passes") {
  VerifyOptions opt;
  opt.trials = 60;
  opt.seed = 5;
  const auto rep = verify_theorem1(opt);
  CHECK(rep.trials == 60);
  CHECK(rep.checks > 0);
  CHECK(rep.agreements == rep.checks);
  CHECK(rep.set_checks > 0);
  CHECK(rep.passed());
  CHECK(rep.to_text().find("agreements") != std::string::npos);
}
