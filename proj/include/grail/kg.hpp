#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grail {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t x = (std::uint64_t{t.head} << 32) ^ (std::uint64_t{t.rel} << 16) ^ t.tail;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

// Bidirectional string <-> dense id map; ids follow insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

// CSR adjacency: for each node, (relation, neighbor) pairs sorted lexicographically.
struct AdjacencyIndex {
  std::vector<std::size_t> offsets;
  std::vector<RelationId> rels;
  std::vector<EntityId> nbrs;

  friend bool operator==(const AdjacencyIndex&, const AdjacencyIndex&) = default;
};

// Directed multi-relational graph. Immutable after construction.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Validates ids, drops exact duplicate triples (keeping first occurrence order)
  // and builds all indices.
  KnowledgeGraph(std::shared_ptr<const Vocabulary> entities,
                 std::shared_ptr<const Vocabulary> relations,
                 std::vector<Triple> triples);

  // Same vocabularies, different edge set.
  KnowledgeGraph with_triples(std::vector<Triple> triples) const;

  std::size_t num_entities() const { return entities_->size(); }
  std::size_t num_relations() const { return relations_->size(); }
  std::size_t num_triples() const { return triples_.size(); }
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

  const Vocabulary& entities() const { return *entities_; }
  const Vocabulary& relations() const { return *relations_; }
  const std::shared_ptr<const Vocabulary>& entity_vocab() const { return entities_; }
  const std::shared_ptr<const Vocabulary>& relation_vocab() const { return relations_; }
  const std::vector<Triple>& triples() const { return triples_; }

  std::span<const EntityId> out_neighbors(EntityId node, RelationId rel) const;
  std::span<const EntityId> in_neighbors(EntityId node, RelationId rel) const;
  // Sorted, de-duplicated neighbors ignoring direction and relation.
  std::span<const EntityId> neighbors(EntityId node) const;

  const AdjacencyIndex& out_index() const { return out_index_; }
  const AdjacencyIndex& in_index() const { return in_index_; }
  const AdjacencyIndex& undirected_index() const { return undirected_; }

  bool contains(const Triple& t) const;
  std::size_t degree(EntityId node) const { return neighbors(node).size(); }

  // All nodes within undirected distance k of node (node itself included), sorted.
  std::vector<EntityId> khop_nodes(EntityId node, int k) const;

  // Undirected BFS distances from source, -1 for nodes farther than max_depth.
  std::vector<int> distances_from(EntityId source, int max_depth) const;

  // One `head\trel\ttail` line per triple, in storage order.
  std::string to_text() const;

  void check_entity(EntityId id) const;
  void check_relation(RelationId id) const;

 private:
  void build_indices();

  std::shared_ptr<const Vocabulary> entities_ = std::make_shared<Vocabulary>();
  std::shared_ptr<const Vocabulary> relations_ = std::make_shared<Vocabulary>();
  std::vector<Triple> triples_;
  std::size_t duplicates_dropped_ = 0;
  AdjacencyIndex out_index_;
  AdjacencyIndex in_index_;
  AdjacencyIndex undirected_;
};

// Parses tab-separated triple lines. Relations already present in
// `relation_seed` keep their ids; new relations are appended after them.
KnowledgeGraph load_triples(std::string_view text, const Vocabulary* relation_seed = nullptr);
KnowledgeGraph load_triples_file(const std::filesystem::path& path,
                                 const Vocabulary* relation_seed = nullptr);

// Rebuilds the three adjacency indices from a triple list (for consistency checks).
AdjacencyIndex build_out_index(std::size_t num_nodes, std::span<const Triple> triples);
AdjacencyIndex build_in_index(std::size_t num_nodes, std::span<const Triple> triples);
AdjacencyIndex build_undirected_index(std::size_t num_nodes, std::span<const Triple> triples);

// Parses triple lines against g's vocabularies; unknown names are errors.
std::vector<Triple> resolve_triples(std::string_view text, const KnowledgeGraph& g);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace grail
