#include <algorithm>
#include <set>

#include "doctest.h"
#include "grail/error.hpp"
#include "grail/rng.hpp"
#include "grail/subgraph.hpp"
#include "oracles.hpp"

using namespace grail;

namespace {

std::set<std::string> node_names(const KnowledgeGraph& g, const LabeledSubgraph& s) {
  std::set<std::string> out;
  for (auto id : s.nodes) out.insert(g.entities().name(id));
  return out;
}

EntityId id(const KnowledgeGraph& g, const char* name) { return *g.entities().find(name); }

// u->a(r1), a->v(r2), u->b(r1), b->c(r2)
KnowledgeGraph branch_graph() { return load_triples("u\tr1\ta\na\tr2\tv\nu\tr1\tb\nb\tr2\tc\n"); }

}  // namespace

TEST_CASE("enclosing extraction drops the dead-end branch") {
  const auto g = branch_graph();
  const auto s = extract_enclosing(g, id(g, "u"), id(g, "v"), 0, 2);
  CHECK(node_names(g, s) == std::set<std::string>{"u", "a", "v"});
  const auto full = extract_enclosing(g, id(g, "u"), id(g, "v"), 0, 2, ExtractionMode::full_khop);
  CHECK(node_names(g, full) == std::set<std::string>{"u", "a", "v", "b", "c"});
}

TEST_CASE("no path within k+1 leaves only the targets and the target edge") {
  const auto g = load_triples("u\tr\tx\nx\tr\ty\ny\tr\tz\nz\tr\tv\n");
  const auto s = extract_enclosing(g, id(g, "u"), id(g, "v"), 0, 1);
  CHECK(s.nodes.size() == 2);
  REQUIRE(s.edges.size() == 1);
  CHECK(s.edges[0] == LocalEdge{0, 0, 1});
  CHECK(s.target_edge == 0);
}

TEST_CASE("pruning keeps only nodes whose two distances sum to at most k+1") {
  // Every node is within 3 hops of both targets, but i and p only sit on
  // u-v walks of length 5.
  const auto g = load_triples("u\tr\ta\na\tr\ti\ni\tr\tp\np\tr\tq\nq\tr\tv\na\tr\tq\n");
  const auto s = extract_enclosing(g, id(g, "u"), id(g, "v"), 0, 3);
  CHECK(node_names(g, s) == std::set<std::string>{"u", "v", "a", "q"});
  CHECK(oracle::enclosing_nodes(g, id(g, "u"), id(g, "v"), 3) ==
        std::set<EntityId>{id(g, "u"), id(g, "v"), id(g, "a"), id(g, "q")});
}

TEST_CASE("local order is u, v, then ascending entity id") {
  const auto g = load_triples("v\tr\tz\nz\tr\tu\nv\tr\ty\ny\tr\tu\n");
  const auto s = extract_enclosing(g, id(g, "u"), id(g, "v"), 0, 2);
  REQUIRE(s.nodes.size() == 4);
  CHECK(s.nodes[0] == id(g, "u"));
  CHECK(s.nodes[1] == id(g, "v"));
  CHECK(s.nodes[2] < s.nodes[3]);
  for (std::uint32_t i = 0; i < s.nodes.size(); ++i) CHECK(s.local_index.at(s.nodes[i]) == i);
}

TEST_CASE("extraction errors") {
  const auto g = branch_graph();
  CHECK_THROWS_AS(extract_enclosing(g, 0, 0, 0, 2), Error);
  CHECK_THROWS_AS(extract_enclosing(g, 0, 99, 0, 2), Error);
  CHECK_THROWS_AS(extract_enclosing(g, 0, 1, 9, 2), Error);
  CHECK_THROWS_AS(extract_enclosing(g, 0, 1, 0, 0), Error);
}

TEST_CASE("enclosing node set equals the walk oracle on random graphs") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(11);
    const auto g = oracle::random_graph(rng, n, 2, rng.uniform_index(2 * n + 2));
    const auto u = static_cast<EntityId>(rng.uniform_index(n));
    auto v = static_cast<EntityId>(rng.uniform_index(n - 1));
    if (v >= u) ++v;
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    const auto s = extract_enclosing(g, u, v, 0, k);
    REQUIRE(std::set<EntityId>(s.nodes.begin(), s.nodes.end()) == oracle::enclosing_nodes(g, u, v, k));
  }
}

TEST_CASE("target edge appears exactly once and induced edges keep direction") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = oracle::random_graph(rng, 8, 2, 16);
    const auto t = g.triples()[rng.uniform_index(g.num_triples())];
    if (t.head == t.tail) continue;
    for (auto mode : {ExtractionMode::enclosing, ExtractionMode::full_khop}) {
      const auto s = extract_enclosing(g, t.head, t.tail, t.rel, 2, mode);
      CHECK(std::count(s.edges.begin(), s.edges.end(), LocalEdge{0, t.rel, 1}) == 1);
      CHECK(s.edges[s.target_edge] == LocalEdge{0, t.rel, 1});
      for (const auto& e : s.edges) CHECK(g.contains({s.nodes[e.head], e.rel, s.nodes[e.tail]}));
      std::size_t induced = 0;
      for (const auto& x : g.triples()) induced += s.local_index.count(x.head) && s.local_index.count(x.tail);
      CHECK(s.edges.size() == induced);
    }
  }
}

TEST_CASE("pruning is a fixpoint") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_graph(rng, 12, 2, 20);
    const EntityId u = 0, v = 1;
    const auto s = extract_enclosing(g, u, v, 0, 3);
    std::vector<Triple> induced;
    for (const auto& t : g.triples()) {
      if (s.local_index.count(t.head) && s.local_index.count(t.tail)) induced.push_back(t);
    }
    const auto again = extract_enclosing(g.with_triples(induced), u, v, 0, 3);
    CHECK(again.nodes == s.nodes);
  }
}

TEST_CASE("double-radius labels on a triangle") {
  const auto g = load_triples("u\tr1\ta\na\tr2\tv\n");
  const auto s = make_labeled_subgraph(g, {id(g, "u"), 0, id(g, "v")}, 3, ExtractionMode::enclosing,
                                       LabelScheme::double_radius);
  const auto a = s.local_index.at(id(g, "a"));
  CHECK(s.dist_u[a] == 1);
  CHECK(s.dist_v[a] == 1);
  CHECK(s.dist_u[0] == 0);
  CHECK(s.dist_v[0] == 1);
  CHECK(s.dist_u[1] == 1);
  CHECK(s.dist_v[1] == 0);
  CHECK(s.feature_dim == 10);
  const std::vector<double> row(s.features.begin() + a * 10, s.features.begin() + a * 10 + 10);
  CHECK(row == std::vector<double>{0, 1, 0, 0, 0, 0, 1, 0, 0, 0});
}

TEST_CASE("distances ignore paths through the other target; unreachable nodes are capped") {
  // b hangs off v only; with v removed it cannot reach u.
  const auto g = load_triples("u\tr\ta\na\tr\tv\nv\tr\tb\n");
  const auto s = make_labeled_subgraph(g, {id(g, "u"), 0, id(g, "v")}, 2, ExtractionMode::full_khop,
                                       LabelScheme::double_radius);
  const auto b = s.local_index.at(id(g, "b"));
  CHECK(s.dist_u[b] == 3);
  CHECK(s.dist_v[b] == 1);
}

TEST_CASE("constant labels give every node (1,1)") {
  const auto g = branch_graph();
  const auto s = make_labeled_subgraph(g, {id(g, "u"), 0, id(g, "v")}, 2, ExtractionMode::full_khop,
                                       LabelScheme::constant);
  for (std::size_t i = 0; i < s.num_nodes(); ++i) {
    CHECK(s.dist_u[i] == 1);
    CHECK(s.dist_v[i] == 1);
  }
}

TEST_CASE("labeling invariants on random subgraphs") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = oracle::random_graph(rng, 12, 3, 18);
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    const auto mode = rng.bernoulli(0.5) ? ExtractionMode::enclosing : ExtractionMode::full_khop;
    const auto s = make_labeled_subgraph(g, {0, 0, 1}, k, mode, LabelScheme::double_radius);
    CHECK(s.feature_dim == structural_feature_dim(k));
    CHECK(s.features.size() == s.num_nodes() * s.feature_dim);
    CHECK(s.dist_u[0] == 0);
    CHECK(s.dist_v[0] == 1);
    CHECK(s.dist_u[1] == 1);
    CHECK(s.dist_v[1] == 0);
    for (std::size_t i = 0; i < s.num_nodes(); ++i) {
      CHECK(s.dist_u[i] <= k + 1);
      CHECK(s.dist_v[i] <= k + 1);
      if (mode == ExtractionMode::enclosing && i >= 2) {
        CHECK(std::max(s.dist_u[i], s.dist_v[i]) <= k);
        CHECK(s.dist_u[i] + s.dist_v[i] <= k + 1);
      }
      double ones = 0;
      for (std::size_t j = 0; j < s.feature_dim; ++j) ones += s.features[i * s.feature_dim + j];
      CHECK(ones == 2.0);
    }
  }
}

TEST_CASE("labels do not depend on triple storage order") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = oracle::random_graph(rng, 10, 2, 20);
    auto shuffled = g.triples();
    rng.shuffle(shuffled);
    const auto h = g.with_triples(shuffled);
    const auto a = make_labeled_subgraph(g, {0, 0, 1}, 2, ExtractionMode::enclosing, LabelScheme::double_radius);
    const auto b = make_labeled_subgraph(h, {0, 0, 1}, 2, ExtractionMode::enclosing, LabelScheme::double_radius);
    CHECK(a.nodes == b.nodes);
    CHECK(a.features == b.features);
  }
}

TEST_CASE("auxiliary features are appended") {
  const auto g = load_triples("u\tr1\ta\na\tr2\tv\n");
  const auto table = NodeFeatureTable::parse("u\t1,2\na\t3,4\nv\t5,6\n");
  AuxFeatures aux{&table, &g.entities()};
  const auto s = make_labeled_subgraph(g, {id(g, "u"), 0, id(g, "v")}, 1, ExtractionMode::enclosing,
                                       LabelScheme::double_radius, &aux);
  CHECK(s.feature_dim == 8);
  CHECK(s.features[6] == 1.0);
  CHECK(s.features[7] == 2.0);
  const auto partial = NodeFeatureTable::parse("u\t1,2\nv\t5,6\n");
  AuxFeatures missing{&partial, &g.entities()};
  try {
    make_labeled_subgraph(g, {id(g, "u"), 0, id(g, "v")}, 1, ExtractionMode::enclosing, LabelScheme::double_radius,
                          &missing);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }
  CHECK_THROWS_AS(NodeFeatureTable::parse("u\t1,2\nv\t5\n"), Error);
}
