#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "grail/kg.hpp"

namespace grail {

enum class ExtractionMode { enclosing, full_khop };
enum class LabelScheme { double_radius, constant };

struct LocalEdge {
  std::uint32_t head = 0;
  RelationId rel = 0;
  std::uint32_t tail = 0;

  friend bool operator==(const LocalEdge&, const LocalEdge&) = default;
};

// Enclosing subgraph around a candidate triple. Local node 0 is the head
// target u and local node 1 is the tail target v; remaining nodes follow in
// ascending entity-id order.
struct LabeledSubgraph {
  std::vector<EntityId> nodes;
  std::unordered_map<EntityId, std::uint32_t> local_index;
  std::vector<LocalEdge> edges;
  std::uint32_t target_u = 0;
  std::uint32_t target_v = 1;
  RelationId target_rel = 0;
  // Index into `edges` of the (u, r_t, v) edge; never dropped during training.
  std::size_t target_edge = 0;
  int hops = 0;

  std::vector<int> dist_u;
  std::vector<int> dist_v;
  // Row-major num_nodes x feature_dim.
  std::vector<double> features;
  std::size_t feature_dim = 0;

  std::size_t num_nodes() const { return nodes.size(); }
  bool labeled() const { return feature_dim > 0 && features.size() == feature_dim * nodes.size(); }
};

// Width of the structural one-hot features: two blocks over distances 0..k+1.
inline std::size_t structural_feature_dim(int k) { return 2 * static_cast<std::size_t>(k + 2); }

// Per-entity auxiliary vectors appended to structural features (early fusion).
class NodeFeatureTable {
 public:
  // Parses `entity<TAB>f1,f2,...` lines; every line must have the same width.
  static NodeFeatureTable parse(std::string_view text);

  std::size_t dim() const { return dim_; }
  const std::vector<double>* find(const std::string& entity) const;
  std::size_t size() const { return rows_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> rows_;
};

struct AuxFeatures {
  const NodeFeatureTable* table = nullptr;
  const Vocabulary* entities = nullptr;  // resolves subgraph entity ids to names
};

// Returns the unlabeled subgraph (nodes, induced directed edges, appended target edge).
LabeledSubgraph extract_enclosing(const KnowledgeGraph& g, EntityId u, EntityId v, RelationId r_t,
                                  int k, ExtractionMode mode = ExtractionMode::enclosing);

// Undirected BFS distances inside the subgraph, skipping `blocked` (pass
// num_nodes() for none). Unreachable nodes get -1.
std::vector<int> subgraph_distances(const LabeledSubgraph& sub, std::uint32_t source,
                                    std::uint32_t blocked);

LabeledSubgraph label_nodes(LabeledSubgraph sub, LabelScheme scheme,
                            const AuxFeatures* aux = nullptr);

// Convenience: extract and label in one call.
LabeledSubgraph make_labeled_subgraph(const KnowledgeGraph& g, const Triple& target, int k,
                                      ExtractionMode mode, LabelScheme scheme,
                                      const AuxFeatures* aux = nullptr);

}  // namespace grail
