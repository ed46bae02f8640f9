#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grail/kg.hpp"

namespace grail {

class Rng;

struct SamplerConfig {
  int num_roots = 100;
  int hops = 3;
  // Per frontier node: at most this many unvisited neighbors join the sample.
  int max_new_per_hop = 50;
  // Rounds of num_roots fresh roots continue until the induced edge count
  // reaches this (or no candidate roots remain).
  int target_edges = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct InductivePair {
  KnowledgeGraph train;
  KnowledgeGraph ind_test;
};

// Entities of the sample around uniform roots (capped BFS), sorted.
std::vector<EntityId> sample_entities(const KnowledgeGraph& g, const SamplerConfig& cfg, Rng& rng);

// Train graph from g, then a test graph from what is left after removing the
// train entities. Both graphs get compact entity vocabularies and share one
// relation vocabulary (the train graph's relations, in g's id order).
InductivePair sample_inductive_pair(const KnowledgeGraph& g, const SamplerConfig& cfg_train,
                                    const SamplerConfig& cfg_test);

// Throws if the pair shares entities or the test graph uses a relation that
// the train graph lacks.
void check_inductive_pair(const InductivePair& pair);

struct EdgeSplit {
  KnowledgeGraph message;
  std::vector<Triple> test_edges;
};

// Withholds ceil(fraction * |E|) uniformly chosen edges whose endpoints keep
// at least one edge in the remaining graph. Self-loops and edges that would
// isolate an endpoint are skipped, so fewer may be returned on very sparse graphs.
EdgeSplit split_test_edges(const KnowledgeGraph& g, double fraction, Rng& rng);

struct GraphStats {
  std::size_t relations = 0;  // distinct relations used by the triples
  std::size_t nodes = 0;      // entities with at least one edge
  std::size_t links = 0;
};

GraphStats graph_stats(const KnowledgeGraph& g);

}  // namespace grail
