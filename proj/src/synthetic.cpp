#include "grail/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "grail/error.hpp"
#include "grail/rng.hpp"

namespace grail {

RuleGraph generate_rule_graph(const RuleGraphConfig& cfg) {
  if (cfg.num_entities < 2 || cfg.body_edges < 1 || cfg.num_distractors < 0 || cfg.distractor_edges < 0) {
    throw ConfigError("rule graph: need >= 2 entities, >= 1 body edge, non-negative distractor counts");
  }
  Rng rng = make_stream(cfg.seed, "rule-graph");
  const auto n = static_cast<std::uint64_t>(cfg.num_entities);
  std::vector<std::string> ents, rels{"r1", "r2", "rt"};
  for (std::uint64_t i = 0; i < n; ++i) ents.push_back(cfg.entity_prefix + std::to_string(i));
  for (int d = 0; d < cfg.num_distractors; ++d) rels.push_back("d" + std::to_string(d));

  std::unordered_set<Triple, TripleHash> seen;
  std::vector<Triple> triples;
  auto random_edges = [&](RelationId r, int count) {
    for (int placed = 0; placed < count;) {
      const auto h = static_cast<EntityId>(rng.uniform_index(n));
      const auto t = static_cast<EntityId>(rng.uniform_index(n));
      if (h == t || !seen.insert({h, r, t}).second) continue;
      triples.push_back({h, r, t});
      ++placed;
    }
  };
  random_edges(0, cfg.body_edges);
  random_edges(1, cfg.body_edges);
  for (int d = 0; d < cfg.num_distractors; ++d) random_edges(static_cast<RelationId>(3 + d), cfg.distractor_edges);

  std::vector<std::vector<EntityId>> r1_out(n), r2_out(n);
  for (const auto& t : triples) {
    if (t.rel == 0) r1_out[t.head].push_back(t.tail);
    if (t.rel == 1) r2_out[t.head].push_back(t.tail);
  }
  RuleGraph out;
  for (EntityId x = 0; x < n; ++x) {
    std::vector<EntityId> ys;
    for (EntityId z : r1_out[x]) ys.insert(ys.end(), r2_out[z].begin(), r2_out[z].end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    for (EntityId y : ys) {
      if (y != x) out.rule_edges.push_back({x, 2, y});
    }
  }
  triples.insert(triples.end(), out.rule_edges.begin(), out.rule_edges.end());
  out.graph = KnowledgeGraph(std::make_shared<Vocabulary>(std::move(ents)), std::make_shared<Vocabulary>(std::move(rels)),
                             std::move(triples));
  return out;
}

EdgeSplit holdout_rule_edges(const RuleGraph& rg, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout: fraction must be in (0, 1)");
  const auto& g = rg.graph;
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rg.rule_edges.size())));
  std::vector<std::size_t> incident(g.num_entities(), 0);
  for (const auto& t : g.triples()) {
    ++incident[t.head];
    if (t.tail != t.head) ++incident[t.tail];
  }
  std::vector<Triple> candidates = rg.rule_edges;
  rng.shuffle(candidates);
  EdgeSplit out;
  std::unordered_set<Triple, TripleHash> held;
  for (const auto& t : candidates) {
    if (out.test_edges.size() == want) break;
    if (incident[t.head] < 2 || incident[t.tail] < 2) continue;
    --incident[t.head];
    --incident[t.tail];
    held.insert(t);
    out.test_edges.push_back(t);
  }
  std::vector<Triple> kept;
  for (const auto& t : g.triples()) {
    if (!held.count(t)) kept.push_back(t);
  }
  out.message = g.with_triples(std::move(kept));
  return out;
}

}  // namespace grail
