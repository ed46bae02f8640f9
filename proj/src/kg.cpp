#include "grail/kg.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "grail/error.hpp"

namespace grail {

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

std::uint32_t Vocabulary::intern(std::string_view name) {
  std::string key(name);
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

namespace {

AdjacencyIndex build_index(std::size_t num_nodes,
                           std::vector<std::tuple<EntityId, RelationId, EntityId>> entries) {
  std::sort(entries.begin(), entries.end());
  AdjacencyIndex idx;
  idx.offsets.assign(num_nodes + 1, 0);
  idx.rels.reserve(entries.size());
  idx.nbrs.reserve(entries.size());
  for (auto& [node, rel, nbr] : entries) {
    ++idx.offsets[node + 1];
    idx.rels.push_back(rel);
    idx.nbrs.push_back(nbr);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) idx.offsets[i + 1] += idx.offsets[i];
  return idx;
}

std::span<const EntityId> relation_range(const AdjacencyIndex& idx, EntityId node, RelationId rel) {
  auto first = idx.rels.begin() + static_cast<std::ptrdiff_t>(idx.offsets[node]);
  auto last = idx.rels.begin() + static_cast<std::ptrdiff_t>(idx.offsets[node + 1]);
  auto [lo, hi] = std::equal_range(first, last, rel);
  auto begin = static_cast<std::size_t>(lo - idx.rels.begin());
  auto end = static_cast<std::size_t>(hi - idx.rels.begin());
  return {idx.nbrs.data() + begin, end - begin};
}

}  // namespace

AdjacencyIndex build_out_index(std::size_t num_nodes, std::span<const Triple> triples) {
  std::vector<std::tuple<EntityId, RelationId, EntityId>> e;
  e.reserve(triples.size());
  for (const auto& t : triples) e.emplace_back(t.head, t.rel, t.tail);
  return build_index(num_nodes, std::move(e));
}

AdjacencyIndex build_in_index(std::size_t num_nodes, std::span<const Triple> triples) {
  std::vector<std::tuple<EntityId, RelationId, EntityId>> e;
  e.reserve(triples.size());
  for (const auto& t : triples) e.emplace_back(t.tail, t.rel, t.head);
  return build_index(num_nodes, std::move(e));
}

AdjacencyIndex build_undirected_index(std::size_t num_nodes, std::span<const Triple> triples) {
  std::vector<std::tuple<EntityId, RelationId, EntityId>> e;
  e.reserve(2 * triples.size());
  for (const auto& t : triples) {
    e.emplace_back(t.head, 0, t.tail);
    e.emplace_back(t.tail, 0, t.head);
  }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return build_index(num_nodes, std::move(e));
}

KnowledgeGraph::KnowledgeGraph(std::shared_ptr<const Vocabulary> entities,
                               std::shared_ptr<const Vocabulary> relations,
                               std::vector<Triple> triples)
    : entities_(std::move(entities)), relations_(std::move(relations)) {
  std::unordered_set<Triple, TripleHash> seen;
  seen.reserve(triples.size());
  triples_.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.head >= entities_->size() || t.tail >= entities_->size() || t.rel >= relations_->size()) {
      throw Error("triple references an id outside the vocabulary");
    }
    if (seen.insert(t).second) {
      triples_.push_back(t);
    } else {
      ++duplicates_dropped_;
    }
  }
  build_indices();
}

KnowledgeGraph KnowledgeGraph::with_triples(std::vector<Triple> triples) const {
  return KnowledgeGraph(entities_, relations_, std::move(triples));
}

void KnowledgeGraph::build_indices() {
  out_index_ = build_out_index(num_entities(), triples_);
  in_index_ = build_in_index(num_entities(), triples_);
  undirected_ = build_undirected_index(num_entities(), triples_);
}

void KnowledgeGraph::check_entity(EntityId id) const {
  if (id >= num_entities()) {
    throw Error("invalid entity id " + std::to_string(id) + " (graph has " +
                std::to_string(num_entities()) + " entities)");
  }
}

void KnowledgeGraph::check_relation(RelationId id) const {
  if (id >= num_relations()) {
    throw Error("invalid relation id " + std::to_string(id) + " (graph has " +
                std::to_string(num_relations()) + " relations)");
  }
}

std::span<const EntityId> KnowledgeGraph::out_neighbors(EntityId node, RelationId rel) const {
  check_entity(node);
  check_relation(rel);
  return relation_range(out_index_, node, rel);
}

std::span<const EntityId> KnowledgeGraph::in_neighbors(EntityId node, RelationId rel) const {
  check_entity(node);
  check_relation(rel);
  return relation_range(in_index_, node, rel);
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId node) const {
  check_entity(node);
  std::size_t b = undirected_.offsets[node];
  std::size_t e = undirected_.offsets[node + 1];
  return {undirected_.nbrs.data() + b, e - b};
}

bool KnowledgeGraph::contains(const Triple& t) const {
  if (t.head >= num_entities() || t.tail >= num_entities() || t.rel >= num_relations()) return false;
  auto outs = relation_range(out_index_, t.head, t.rel);
  return std::binary_search(outs.begin(), outs.end(), t.tail);
}

std::vector<int> KnowledgeGraph::distances_from(EntityId source, int max_depth) const {
  check_entity(source);
  std::vector<int> dist(num_entities(), -1);
  std::queue<EntityId> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    EntityId n = q.front();
    q.pop();
    if (dist[n] == max_depth) continue;
    for (EntityId m : neighbors(n)) {
      if (dist[m] < 0) {
        dist[m] = dist[n] + 1;
        q.push(m);
      }
    }
  }
  return dist;
}

std::vector<EntityId> KnowledgeGraph::khop_nodes(EntityId node, int k) const {
  check_entity(node);
  if (k < 1) throw Error("khop_nodes: k must be >= 1");
  // Sparse BFS so large graphs do not pay for a full distance vector.
  std::unordered_map<EntityId, int> dist{{node, 0}};
  std::vector<EntityId> frontier{node};
  for (int depth = 1; depth <= k && !frontier.empty(); ++depth) {
    std::vector<EntityId> next;
    for (EntityId n : frontier) {
      for (EntityId m : neighbors(n)) {
        if (dist.emplace(m, depth).second) next.push_back(m);
      }
    }
    frontier = std::move(next);
  }
  std::vector<EntityId> out;
  out.reserve(dist.size());
  for (auto& [n, d] : dist) out.push_back(n);
  std::sort(out.begin(), out.end());
  return out;
}

std::string KnowledgeGraph::to_text() const {
  std::string out;
  for (const auto& t : triples_) {
    out += entities_->name(t.head);
    out += '\t';
    out += relations_->name(t.rel);
    out += '\t';
    out += entities_->name(t.tail);
    out += '\n';
  }
  return out;
}

namespace {

template <typename Fn>
void for_each_triple_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::string_view fields[3];
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      std::string_view f = line.substr(start, tab == std::string_view::npos ? tab : tab - start);
      if (count < 3) fields[count] = f;
      ++count;
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (count != 3) {
      throw Error("line " + std::to_string(line_no) + ": expected 3 tab-separated fields, found " +
                  std::to_string(count));
    }
    fn(line_no, fields);
  }
}

}  // namespace

KnowledgeGraph load_triples(std::string_view text, const Vocabulary* relation_seed) {
  auto entities = std::make_shared<Vocabulary>();
  auto relations = std::make_shared<Vocabulary>(relation_seed ? *relation_seed : Vocabulary{});
  std::vector<Triple> triples;
  for_each_triple_line(text, [&](std::size_t, const std::string_view* f) {
    Triple t;
    t.head = entities->intern(f[0]);
    t.rel = relations->intern(f[1]);
    t.tail = entities->intern(f[2]);
    triples.push_back(t);
  });
  if (triples.empty()) throw Error("no triples in input");
  return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

std::vector<Triple> resolve_triples(std::string_view text, const KnowledgeGraph& g) {
  std::vector<Triple> out;
  for_each_triple_line(text, [&](std::size_t line_no, const std::string_view* f) {
    auto id = [&](const Vocabulary& v, std::string_view name, const char* what) {
      auto found = v.find(name);
      if (!found) {
        throw Error("line " + std::to_string(line_no) + ": " + what + " '" + std::string(name) +
                    "' is not in the graph");
      }
      return *found;
    };
    out.push_back({id(g.entities(), f[0], "entity"), id(g.relations(), f[1], "relation"),
                   id(g.entities(), f[2], "entity")});
  });
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

KnowledgeGraph load_triples_file(const std::filesystem::path& path, const Vocabulary* relation_seed) {
  try {
    return load_triples(read_text_file(path), relation_seed);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace grail
