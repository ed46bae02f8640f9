#include "grail/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "grail/error.hpp"
#include "grail/rng.hpp"

namespace grail {

void SamplerConfig::validate() const {
  if (num_roots < 1 || hops < 1 || max_new_per_hop < 1 || target_edges < 1) {
    throw ConfigError("sampler: num_roots, hops, max_new_per_hop and target_edges must all be >= 1");
  }
}

namespace {

std::size_t induced_edge_count(const KnowledgeGraph& g, const std::vector<char>& in) {
  std::size_t n = 0;
  for (const auto& t : g.triples()) n += in[t.head] && in[t.tail];
  return n;
}

// Rebuilds the triples over a compact entity vocabulary (first appearance in
// triple order) and the given relation vocabulary.
KnowledgeGraph compact(const KnowledgeGraph& g, const std::vector<Triple>& triples,
                       std::shared_ptr<const Vocabulary> relations,
                       const std::vector<RelationId>& rel_map) {
  auto entities = std::make_shared<Vocabulary>();
  std::vector<Triple> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    const EntityId h = entities->intern(g.entities().name(t.head));
    const EntityId tl = entities->intern(g.entities().name(t.tail));
    out.push_back({h, rel_map[t.rel], tl});
  }
  return KnowledgeGraph(std::move(entities), std::move(relations), std::move(out));
}

}  // namespace

std::vector<EntityId> sample_entities(const KnowledgeGraph& g, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = g.num_entities();
  std::vector<char> visited(n, 0);
  std::vector<EntityId> candidates;
  for (EntityId e = 0; e < n; ++e) {
    if (g.degree(e) > 0) candidates.push_back(e);
  }
  rng.shuffle(candidates);
  std::size_t next_root = 0;
  while (next_root < candidates.size()) {
    std::vector<EntityId> frontier;
    for (int i = 0; i < cfg.num_roots && next_root < candidates.size(); ++next_root) {
      const EntityId r = candidates[next_root];
      if (visited[r]) continue;
      visited[r] = 1;
      frontier.push_back(r);
      ++i;
    }
    for (int hop = 0; hop < cfg.hops && !frontier.empty(); ++hop) {
      std::vector<EntityId> next;
      for (EntityId x : frontier) {
        std::vector<EntityId> fresh;
        for (EntityId y : g.neighbors(x)) {
          if (!visited[y]) fresh.push_back(y);
        }
        const auto cap = std::min(fresh.size(), static_cast<std::size_t>(cfg.max_new_per_hop));
        for (std::size_t idx : rng.sample_without_replacement(fresh.size(), cap)) {
          visited[fresh[idx]] = 1;
          next.push_back(fresh[idx]);
        }
      }
      frontier = std::move(next);
    }
    if (induced_edge_count(g, visited) >= static_cast<std::size_t>(cfg.target_edges)) break;
  }
  std::vector<EntityId> out;
  for (EntityId e = 0; e < n; ++e) {
    if (visited[e]) out.push_back(e);
  }
  return out;
}

InductivePair sample_inductive_pair(const KnowledgeGraph& g, const SamplerConfig& cfg_train,
                                    const SamplerConfig& cfg_test) {
  cfg_train.validate();
  cfg_test.validate();
  if (g.num_triples() == 0) throw Error("sample_inductive_pair: input graph has no triples");

  Rng train_rng = make_stream(cfg_train.seed, "split-train");
  const auto train_nodes = sample_entities(g, cfg_train, train_rng);
  std::vector<char> in_train(g.num_entities(), 0);
  for (EntityId e : train_nodes) in_train[e] = 1;

  std::vector<Triple> train_triples, rest;
  for (const auto& t : g.triples()) {
    if (in_train[t.head] && in_train[t.tail]) train_triples.push_back(t);
    else if (!in_train[t.head] && !in_train[t.tail]) rest.push_back(t);
  }
  if (train_triples.empty()) throw Error("sample_inductive_pair: train sample has no edges");
  if (rest.empty()) {
    throw Error("sample_inductive_pair: nothing left for the test graph after removing the train sample; "
                "use fewer roots, hops or neighbors per hop for the train graph");
  }

  const KnowledgeGraph remainder = g.with_triples(std::move(rest));
  Rng test_rng = make_stream(cfg_test.seed, "split-test");
  const auto test_nodes = sample_entities(remainder, cfg_test, test_rng);
  std::vector<char> in_test(g.num_entities(), 0);
  for (EntityId e : test_nodes) in_test[e] = 1;

  std::vector<char> train_rel(g.num_relations(), 0);
  for (const auto& t : train_triples) train_rel[t.rel] = 1;
  std::vector<Triple> test_triples;
  for (const auto& t : remainder.triples()) {
    if (in_test[t.head] && in_test[t.tail] && train_rel[t.rel]) test_triples.push_back(t);
  }
  if (test_triples.empty()) throw Error("sample_inductive_pair: test sample has no edges with train relations");

  auto relations = std::make_shared<Vocabulary>();
  std::vector<RelationId> rel_map(g.num_relations(), 0);
  for (RelationId r = 0; r < g.num_relations(); ++r) {
    if (train_rel[r]) rel_map[r] = relations->intern(g.relations().name(r));
  }
  InductivePair pair{compact(g, train_triples, relations, rel_map),
                     compact(g, test_triples, relations, rel_map)};
  check_inductive_pair(pair);
  return pair;
}

void check_inductive_pair(const InductivePair& pair) {
  std::unordered_set<std::string> train_entities(pair.train.entities().names().begin(),
                                                 pair.train.entities().names().end());
  for (const auto& name : pair.ind_test.entities().names()) {
    if (train_entities.count(name)) throw Error("inductive pair: entity '" + name + "' appears in both graphs");
  }
  std::unordered_set<std::string> train_rels;
  for (const auto& t : pair.train.triples()) train_rels.insert(pair.train.relations().name(t.rel));
  for (const auto& t : pair.ind_test.triples()) {
    const auto& name = pair.ind_test.relations().name(t.rel);
    if (!train_rels.count(name)) throw Error("inductive pair: test relation '" + name + "' is not in the train graph");
  }
}

EdgeSplit split_test_edges(const KnowledgeGraph& g, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split_test_edges: fraction must be in (0, 1)");
  const auto& triples = g.triples();
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(triples.size())));
  if (want >= triples.size()) throw Error("split_test_edges: fraction leaves an empty message graph");

  std::vector<std::size_t> incident(g.num_entities(), 0);
  for (const auto& t : triples) {
    ++incident[t.head];
    if (t.tail != t.head) ++incident[t.tail];
  }
  std::vector<std::size_t> order(triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<char> held(triples.size(), 0);
  std::size_t taken = 0;
  for (std::size_t i : order) {
    if (taken == want) break;
    const auto& t = triples[i];
    if (t.head == t.tail || incident[t.head] < 2 || incident[t.tail] < 2) continue;
    --incident[t.head];
    if (t.tail != t.head) --incident[t.tail];
    held[i] = 1;
    ++taken;
  }
  EdgeSplit out;
  std::vector<Triple> kept;
  for (std::size_t i : order) {
    if (held[i]) out.test_edges.push_back(triples[i]);
  }
  for (std::size_t i = 0; i < triples.size(); ++i) {
    if (!held[i]) kept.push_back(triples[i]);
  }
  out.message = g.with_triples(std::move(kept));
  return out;
}

GraphStats graph_stats(const KnowledgeGraph& g) {
  std::vector<char> rel(g.num_relations(), 0);
  std::vector<char> node(g.num_entities(), 0);
  GraphStats s;
  for (const auto& t : g.triples()) {
    rel[t.rel] = 1;
    node[t.head] = node[t.tail] = 1;
  }
  s.relations = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), 1));
  s.nodes = static_cast<std::size_t>(std::count(node.begin(), node.end(), 1));
  s.links = g.num_triples();
  return s;
}

}  // namespace grail
