#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grail/benchgen.hpp"
#include "grail/kg.hpp"

namespace grail {

class Rng;

// Random graph whose target relation "rt" is exactly the composition of "r1"
// then "r2": for x != y, rt(x, y) holds iff some z has r1(x, z) and r2(z, y). Distractor
// relations "d0", "d1", ... are random and imply nothing.
struct RuleGraphConfig {
  int num_entities = 200;
  int body_edges = 200;  // per body relation
  int num_distractors = 1;
  int distractor_edges = 200;  // per distractor relation
  std::string entity_prefix = "e";
  std::uint64_t seed = 0;
};

struct RuleGraph {
  KnowledgeGraph graph;
  std::vector<Triple> rule_edges;  // the rt triples
};

// Relation ids are fixed: r1 = 0, r2 = 1, rt = 2, then the distractors.
RuleGraph generate_rule_graph(const RuleGraphConfig& cfg);

// Withholds ceil(fraction * |rule_edges|) rule edges, skipping any whose
// removal would isolate an endpoint.
EdgeSplit holdout_rule_edges(const RuleGraph& rg, double fraction, Rng& rng);

}  // namespace grail
