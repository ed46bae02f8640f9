#include "grail/gnn.hpp"

#include <cmath>

#include "grail/error.hpp"
#include "grail/rng.hpp"

namespace grail {

using ad::Value;

std::size_t GnnConfig::readout_dim() const {
  const std::size_t per_layer = 4 * static_cast<std::size_t>(hidden_dim);
  return jk_enabled ? per_layer * static_cast<std::size_t>(num_layers) : per_layer;
}

void GnnConfig::validate(std::size_t num_relations) const {
  if (num_layers < 1) throw ConfigError("gnn: num_layers must be >= 1");
  if (hidden_dim < 1) throw ConfigError("gnn: hidden_dim must be >= 1");
  if (input_dim < 1) throw ConfigError("gnn: input_dim must be >= 1");
  if (num_bases < 1) throw ConfigError("gnn: num_bases must be >= 1");
  if (num_relations >= 1 && static_cast<std::size_t>(num_bases) > num_relations) {
    throw ConfigError("gnn: num_bases (" + std::to_string(num_bases) +
                      ") exceeds the relation count (" + std::to_string(num_relations) + ")");
  }
  if (!(edge_dropout_rate >= 0.0 && edge_dropout_rate < 1.0)) {
    throw ConfigError("gnn: edge_dropout_rate must lie in [0, 1)");
  }
  if (tail_readout && hidden_dim != 1) throw ConfigError("gnn: tail_readout requires hidden_dim == 1");
}

namespace {

template <typename P, typename T>
std::vector<std::pair<std::string, T*>> list_params(P& p) {
  std::vector<std::pair<std::string, T*>> out;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto& l = p.layers[k];
    const std::string prefix = "layer" + std::to_string(k) + ".";
    for (std::size_t b = 0; b < l.bases.size(); ++b) {
      out.emplace_back(prefix + "basis" + std::to_string(b), &l.bases[b]);
    }
    out.emplace_back(prefix + "coefficients", &l.coefficients);
    out.emplace_back(prefix + "self_weight", &l.self_weight);
    out.emplace_back(prefix + "attn_w1", &l.attn_w1);
    out.emplace_back(prefix + "attn_b1", &l.attn_b1);
    out.emplace_back(prefix + "attn_w2", &l.attn_w2);
    out.emplace_back(prefix + "attn_b2", &l.attn_b2);
  }
  out.emplace_back("attn_rel_emb", &p.attn_rel_emb);
  out.emplace_back("target_rel_emb", &p.target_rel_emb);
  out.emplace_back("readout", &p.readout);
  return out;
}

bool is_bias(const std::string& name) {
  return name.size() >= 3 && (name.ends_with("_b1") || name.ends_with("_b2"));
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> GnnParams::named() {
  return list_params<GnnParams, Tensor>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> GnnParams::named() const {
  return list_params<const GnnParams, const Tensor>(*this);
}

std::size_t GnnParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

GnnParams GnnParams::zeros_like() const {
  GnnParams z = *this;
  for (auto& [name, t] : z.named()) std::fill(t->data.begin(), t->data.end(), 0.0);
  return z;
}

GnnParams init_params(const GnnConfig& cfg, std::size_t num_relations, Rng& rng) {
  if (num_relations < 1) throw ConfigError("init_params: need at least one relation");
  cfg.validate(num_relations);
  const auto d = static_cast<std::size_t>(cfg.hidden_dim);
  const auto h = static_cast<std::size_t>(cfg.attention_hidden());
  const auto nb = static_cast<std::size_t>(cfg.num_bases);
  GnnParams p;
  for (int k = 0; k < cfg.num_layers; ++k) {
    const auto din = static_cast<std::size_t>(cfg.layer_input_dim(k));
    LayerParams l;
    for (std::size_t b = 0; b < nb; ++b) l.bases.emplace_back(din, d);
    l.coefficients = Tensor(num_relations, nb);
    l.self_weight = Tensor(din, d);
    l.attn_w1 = Tensor(2 * din + 2 * d, h);
    l.attn_b1 = Tensor(1, h);
    l.attn_w2 = Tensor(h, 1);
    l.attn_b2 = Tensor(1, 1);
    p.layers.push_back(std::move(l));
  }
  p.attn_rel_emb = Tensor(num_relations, d);
  p.target_rel_emb = Tensor(num_relations, d);
  p.readout = Tensor(cfg.readout_dim(), 1);
  for (auto& [name, t] : p.named()) {
    if (is_bias(name)) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(t->rows + t->cols));
    for (auto& v : t->data) v = rng.uniform(-limit, limit);
  }
  return p;
}

void validate_params(const GnnParams& p, const GnnConfig& cfg, std::size_t num_relations) {
  Rng dummy(0);
  GnnParams ref = init_params(cfg, num_relations, dummy);
  auto want = ref.named();
  auto have = p.named();
  if (want.size() != have.size()) {
    throw Error("parameter count mismatch: expected " + std::to_string(want.size()) + " tensors, got " +
                std::to_string(have.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    const Tensor& a = *want[i].second;
    const Tensor& b = *have[i].second;
    if (a.rows != b.rows || a.cols != b.cols || b.data.size() != b.rows * b.cols) {
      throw Error("parameter " + want[i].first + ": expected shape " + shape_string(a.rows, a.cols) +
                  ", got " + shape_string(b.rows, b.cols));
    }
    for (double v : b.data) {
      if (!std::isfinite(v)) throw Error("parameter " + want[i].first + " holds a non-finite value");
    }
  }
}

BoundParams bind_params(ad::Tape& tape, const GnnParams& p, bool requires_grad) {
  BoundParams b;
  for (const auto& l : p.layers) {
    BoundParams::Layer bl;
    for (const auto& v : l.bases) bl.bases.push_back(tape.leaf(v, requires_grad));
    bl.coefficients = tape.leaf(l.coefficients, requires_grad);
    bl.self_weight = tape.leaf(l.self_weight, requires_grad);
    bl.attn_w1 = tape.leaf(l.attn_w1, requires_grad);
    bl.attn_b1 = tape.leaf(l.attn_b1, requires_grad);
    bl.attn_w2 = tape.leaf(l.attn_w2, requires_grad);
    bl.attn_b2 = tape.leaf(l.attn_b2, requires_grad);
    for (const auto& v : bl.bases) b.all.push_back(v);
    for (auto v : {bl.coefficients, bl.self_weight, bl.attn_w1, bl.attn_b1, bl.attn_w2, bl.attn_b2}) {
      b.all.push_back(v);
    }
    b.layers.push_back(std::move(bl));
  }
  b.attn_rel_emb = tape.leaf(p.attn_rel_emb, requires_grad);
  b.target_rel_emb = tape.leaf(p.target_rel_emb, requires_grad);
  b.readout = tape.leaf(p.readout, requires_grad);
  b.all.push_back(b.attn_rel_emb);
  b.all.push_back(b.target_rel_emb);
  b.all.push_back(b.readout);
  return b;
}

void accumulate_grads(const BoundParams& bound, GnnParams& grads) {
  auto named = grads.named();
  if (named.size() != bound.all.size()) throw Error("accumulate_grads: layout mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto g = bound.all[i].grad();
    auto& dst = named[i].second->data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  }
}

EdgeMasks sample_edge_masks(const LabeledSubgraph& sub, const GnnConfig& cfg, Rng& rng) {
  EdgeMasks masks(static_cast<std::size_t>(cfg.num_layers));
  for (auto& m : masks) {
    m.assign(sub.edges.size(), 1.0);
    if (cfg.edge_dropout_rate <= 0.0) continue;
    for (std::size_t e = 0; e < m.size(); ++e) {
      bool keep = rng.bernoulli(1.0 - cfg.edge_dropout_rate);
      m[e] = (keep || e == sub.target_edge) ? 1.0 : 0.0;
    }
  }
  return masks;
}

Value node_features(ad::Tape& tape, const LabeledSubgraph& sub, const GnnConfig& cfg) {
  if (!sub.labeled()) throw Error("score_triplet: subgraph has not been labeled");
  if (sub.feature_dim != static_cast<std::size_t>(cfg.input_dim)) {
    throw Error("score_triplet: feature width " + std::to_string(sub.feature_dim) +
                " does not match input_dim " + std::to_string(cfg.input_dim));
  }
  return tape.constant(Tensor(sub.num_nodes(), sub.feature_dim, sub.features));
}

namespace {

Value attention_gates(const BoundParams::Layer& lp, Value rel_emb, Value h_prev,
                      std::span<const std::uint32_t> nbr, std::span<const std::uint32_t> agg,
                      std::span<const std::uint32_t> rels, RelationId r_t) {
  std::vector<std::uint32_t> target(rels.size(), r_t);
  Value x = ad::concat_cols({ad::gather_rows(h_prev, nbr), ad::gather_rows(h_prev, agg),
                             ad::gather_rows(rel_emb, rels), ad::gather_rows(rel_emb, target)});
  Value s = ad::relu(ad::add(ad::matmul(x, lp.attn_w1), lp.attn_b1));
  return ad::sigmoid(ad::add(ad::matmul(s, lp.attn_w2), lp.attn_b2));
}

}  // namespace

Value layer_forward(const BoundParams& p, const GnnConfig& cfg, const LabeledSubgraph& sub,
                    Value h_prev, int layer, std::span<const double> mask) {
  const auto& lp = p.layers.at(static_cast<std::size_t>(layer));
  const std::size_t n = sub.num_nodes();
  const std::size_t din = static_cast<std::size_t>(cfg.layer_input_dim(layer));
  if (h_prev.rows() != n || h_prev.cols() != din) {
    throw Error("layer_forward: state " + shape_string(h_prev.rows(), h_prev.cols()) +
                " for layer expecting " + shape_string(n, din));
  }
  if (!mask.empty() && mask.size() != sub.edges.size()) {
    throw Error("layer_forward: edge mask length does not match edge count");
  }
  Value self = ad::matmul(h_prev, lp.self_weight);
  if (sub.edges.empty()) return ad::relu(self);

  // Messages reach the aggregating node t from its neighbor s.
  const std::size_t m = sub.edges.size();
  std::vector<std::uint32_t> agg(m), nbr(m), rels(m);
  for (std::size_t e = 0; e < m; ++e) {
    const auto& edge = sub.edges[e];
    agg[e] = cfg.aggregate_in_neighbors ? edge.tail : edge.head;
    nbr[e] = cfg.aggregate_in_neighbors ? edge.head : edge.tail;
    rels[e] = edge.rel;
  }

  Value coeff = ad::gather_rows(lp.coefficients, rels);
  Value msg;
  for (std::size_t b = 0; b < lp.bases.size(); ++b) {
    Value projected = ad::gather_rows(ad::matmul(h_prev, lp.bases[b]), nbr);
    Value term = ad::mul(projected, ad::slice_cols(coeff, b, b + 1));
    msg = b == 0 ? term : ad::add(msg, term);
  }

  if (cfg.attention_enabled) {
    Value alpha = attention_gates(lp, p.attn_rel_emb, h_prev, nbr, agg, rels, sub.target_rel);
    if (cfg.attention_floor > 0.0) {
      std::vector<double> keep(m);
      auto a = alpha.data();
      for (std::size_t e = 0; e < m; ++e) keep[e] = a[e] < cfg.attention_floor ? 0.0 : 1.0;
      alpha = ad::mask_rows(alpha, keep);
    }
    msg = ad::mul(msg, alpha);
  }
  if (!mask.empty()) msg = ad::mask_rows(msg, mask);
  return ad::relu(ad::add(self, ad::scatter_add_rows(msg, agg, n)));
}

Value score_triplet(const BoundParams& p, const GnnConfig& cfg, const LabeledSubgraph& sub,
                    const EdgeMasks* masks) {
  ad::Tape& tape = *p.readout.tape();
  Value h = node_features(tape, sub, cfg);
  std::vector<Value> states;
  for (int k = 0; k < cfg.num_layers; ++k) {
    std::span<const double> mask;
    if (masks) mask = masks->at(static_cast<std::size_t>(k));
    h = layer_forward(p, cfg, sub, h, k, mask);
    states.push_back(h);
  }
  const std::uint32_t u = sub.target_u;
  const std::uint32_t v = sub.target_v;
  if (cfg.tail_readout) return ad::sum(ad::gather_rows(states.back(), std::span(&v, 1)));

  const std::uint32_t rt = sub.target_rel;
  Value rel = ad::gather_rows(p.target_rel_emb, std::span(&rt, 1));
  std::vector<Value> parts;
  const std::size_t first = cfg.jk_enabled ? 0 : states.size() - 1;
  for (std::size_t k = first; k < states.size(); ++k) {
    parts.push_back(ad::mean_rows(states[k]));
    parts.push_back(ad::gather_rows(states[k], std::span(&u, 1)));
    parts.push_back(ad::gather_rows(states[k], std::span(&v, 1)));
    parts.push_back(rel);
  }
  return ad::matmul(ad::concat_cols(parts), p.readout);
}

double score_value(const GnnParams& p, const GnnConfig& cfg, const LabeledSubgraph& sub) {
  ad::Tape tape;
  BoundParams b = bind_params(tape, p, false);
  return score_triplet(b, cfg, sub, nullptr).item();
}

double attention_weight(const GnnParams& p, const GnnConfig& cfg, int layer,
                        std::span<const double> h_s, std::span<const double> h_t, RelationId r,
                        RelationId r_t) {
  const auto din = static_cast<std::size_t>(cfg.layer_input_dim(layer));
  if (h_s.size() != din || h_t.size() != din) {
    throw Error("attention_weight: state vectors of width " + std::to_string(h_s.size()) + "/" +
                std::to_string(h_t.size()) + " for layer input width " + std::to_string(din));
  }
  if (!cfg.attention_enabled) return 1.0;
  ad::Tape tape;
  BoundParams b = bind_params(tape, p, false);
  Tensor states(2, din);
  std::copy(h_s.begin(), h_s.end(), states.data.begin());
  std::copy(h_t.begin(), h_t.end(), states.data.begin() + static_cast<std::ptrdiff_t>(din));
  Value h = tape.constant(std::move(states));
  const std::uint32_t s_idx = 0, t_idx = 1;
  const std::uint32_t rel = r;
  Value alpha = attention_gates(b.layers.at(static_cast<std::size_t>(layer)), b.attn_rel_emb, h,
                                std::span(&s_idx, 1), std::span(&t_idx, 1), std::span(&rel, 1), r_t);
  double a = alpha.item();
  if (cfg.attention_floor > 0.0 && a < cfg.attention_floor) a = 0.0;
  return a;
}

}  // namespace grail
