#include "grail/subgraph.hpp"

#include <algorithm>
#include <charconv>
#include <queue>

#include "grail/error.hpp"

namespace grail {

namespace {

// Undirected adjacency lists over a candidate node set, local ids.
std::vector<std::vector<std::uint32_t>> induced_adjacency(
    const KnowledgeGraph& g, const std::vector<EntityId>& nodes,
    const std::unordered_map<EntityId, std::uint32_t>& local) {
  std::vector<std::vector<std::uint32_t>> adj(nodes.size());
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    for (EntityId m : g.neighbors(nodes[i])) {
      auto it = local.find(m);
      if (it != local.end()) adj[i].push_back(it->second);
    }
  }
  return adj;
}

std::vector<int> bfs(const std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t source,
                     std::uint32_t blocked) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<std::uint32_t> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    auto n = q.front();
    q.pop();
    for (auto m : adj[n]) {
      if (m == blocked || dist[m] >= 0) continue;
      dist[m] = dist[n] + 1;
      q.push(m);
    }
  }
  return dist;
}

// Orders targets first, then the rest by entity id.
std::vector<EntityId> order_nodes(EntityId u, EntityId v, std::vector<EntityId> rest) {
  std::sort(rest.begin(), rest.end());
  std::vector<EntityId> out{u, v};
  for (EntityId n : rest) {
    if (n != u && n != v) out.push_back(n);
  }
  return out;
}

// Keeps nodes lying on a u-v walk of length <= k+1 that touches the targets
// only at its ends: dist(i,u | v removed) + dist(i,v | u removed) <= k+1.
// Re-applied on the shrinking induced subgraph until nothing changes.
std::vector<EntityId> prune_to_fixpoint(const KnowledgeGraph& g, std::vector<EntityId> nodes, int k) {
  while (true) {
    std::unordered_map<EntityId, std::uint32_t> local;
    for (std::uint32_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], i);
    auto adj = induced_adjacency(g, nodes, local);
    auto du = bfs(adj, 0, 1);
    auto dv = bfs(adj, 1, 0);
    std::vector<EntityId> kept{nodes[0], nodes[1]};
    for (std::uint32_t i = 2; i < nodes.size(); ++i) {
      bool isolated = adj[i].empty();
      bool reachable = du[i] >= 0 && dv[i] >= 0;
      if (!isolated && reachable && du[i] + dv[i] <= k + 1) kept.push_back(nodes[i]);
    }
    if (kept.size() == nodes.size()) return nodes;
    nodes = std::move(kept);
  }
}

}  // namespace

LabeledSubgraph extract_enclosing(const KnowledgeGraph& g, EntityId u, EntityId v, RelationId r_t,
                                  int k, ExtractionMode mode) {
  g.check_entity(u);
  g.check_entity(v);
  g.check_relation(r_t);
  if (u == v) throw Error("extract_enclosing: target nodes must differ");
  if (k < 1) throw Error("extract_enclosing: k must be >= 1");

  auto nu = g.khop_nodes(u, k);
  auto nv = g.khop_nodes(v, k);
  std::vector<EntityId> rest;
  if (mode == ExtractionMode::enclosing) {
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(rest));
  } else {
    std::set_union(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(rest));
  }
  auto nodes = order_nodes(u, v, std::move(rest));
  if (mode == ExtractionMode::enclosing) nodes = prune_to_fixpoint(g, std::move(nodes), k);

  LabeledSubgraph sub;
  sub.hops = k;
  sub.target_rel = r_t;
  sub.nodes = std::move(nodes);
  for (std::uint32_t i = 0; i < sub.nodes.size(); ++i) sub.local_index.emplace(sub.nodes[i], i);

  const auto& out = g.out_index();
  bool has_target = false;
  for (std::uint32_t i = 0; i < sub.nodes.size(); ++i) {
    EntityId n = sub.nodes[i];
    for (std::size_t e = out.offsets[n]; e < out.offsets[n + 1]; ++e) {
      auto it = sub.local_index.find(out.nbrs[e]);
      if (it == sub.local_index.end()) continue;
      LocalEdge edge{i, out.rels[e], it->second};
      if (i == 0 && edge.tail == 1 && edge.rel == r_t) {
        has_target = true;
        sub.target_edge = sub.edges.size();
      }
      sub.edges.push_back(edge);
    }
  }
  if (!has_target) {
    sub.target_edge = sub.edges.size();
    sub.edges.push_back({0, r_t, 1});
  }
  return sub;
}

std::vector<int> subgraph_distances(const LabeledSubgraph& sub, std::uint32_t source,
                                    std::uint32_t blocked) {
  std::vector<std::vector<std::uint32_t>> adj(sub.num_nodes());
  for (const auto& e : sub.edges) {
    if (e.head == e.tail) continue;
    adj[e.head].push_back(e.tail);
    adj[e.tail].push_back(e.head);
  }
  return bfs(adj, source, blocked);
}

LabeledSubgraph label_nodes(LabeledSubgraph sub, LabelScheme scheme, const AuxFeatures* aux) {
  const std::size_t n = sub.num_nodes();
  if (n < 2 || sub.target_u != 0 || sub.target_v != 1) {
    throw Error("label_nodes: subgraph lacks its two target nodes");
  }
  const int k = sub.hops;
  const int cap = k + 1;
  sub.dist_u.assign(n, 1);
  sub.dist_v.assign(n, 1);
  if (scheme == LabelScheme::double_radius) {
    auto du = subgraph_distances(sub, 0, 1);
    auto dv = subgraph_distances(sub, 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sub.dist_u[i] = (du[i] < 0 || du[i] > cap) ? cap : du[i];
      sub.dist_v[i] = (dv[i] < 0 || dv[i] > cap) ? cap : dv[i];
    }
    sub.dist_u[0] = 0;
    sub.dist_v[0] = 1;
    sub.dist_u[1] = 1;
    sub.dist_v[1] = 0;
  }

  const std::size_t block = static_cast<std::size_t>(k + 2);
  const std::size_t aux_dim = (aux && aux->table) ? aux->table->dim() : 0;
  sub.feature_dim = 2 * block + aux_dim;
  sub.features.assign(n * sub.feature_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = sub.features.data() + i * sub.feature_dim;
    row[sub.dist_u[i]] = 1.0;
    row[block + sub.dist_v[i]] = 1.0;
    if (aux_dim > 0) {
      if (!aux->entities) throw Error("label_nodes: auxiliary features need an entity vocabulary");
      const std::string& name = aux->entities->name(sub.nodes[i]);
      const auto* vec = aux->table->find(name);
      if (!vec) throw Error("label_nodes: no auxiliary features for entity '" + name + "'");
      std::copy(vec->begin(), vec->end(), row + 2 * block);
    }
  }
  return sub;
}

LabeledSubgraph make_labeled_subgraph(const KnowledgeGraph& g, const Triple& target, int k,
                                      ExtractionMode mode, LabelScheme scheme,
                                      const AuxFeatures* aux) {
  return label_nodes(extract_enclosing(g, target.head, target.tail, target.rel, k, mode), scheme, aux);
}

NodeFeatureTable NodeFeatureTable::parse(std::string_view text) {
  NodeFeatureTable table;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error("aux features line " + std::to_string(line_no) + ": missing tab");
    }
    std::string entity(line.substr(0, tab));
    std::string_view rest = line.substr(tab + 1);
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= rest.size()) {
      std::size_t comma = rest.find(',', start);
      if (comma == std::string_view::npos) comma = rest.size();
      std::string_view tok = rest.substr(start, comma - start);
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
        throw Error("aux features line " + std::to_string(line_no) + ": bad number '" +
                    std::string(tok) + "'");
      }
      values.push_back(x);
      start = comma + 1;
    }
    if (first) {
      table.dim_ = values.size();
      first = false;
    } else if (values.size() != table.dim_) {
      throw Error("aux features line " + std::to_string(line_no) + ": expected " +
                  std::to_string(table.dim_) + " values, found " + std::to_string(values.size()));
    }
    table.rows_[entity] = std::move(values);
  }
  return table;
}

const std::vector<double>* NodeFeatureTable::find(const std::string& entity) const {
  auto it = rows_.find(entity);
  return it == rows_.end() ? nullptr : &it->second;
}

}  // namespace grail
