#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grail/autodiff.hpp"
#include "grail/subgraph.hpp"

namespace grail {

class Rng;

struct GnnConfig {
  int num_layers = 3;
  int hidden_dim = 32;
  int num_bases = 4;
  int input_dim = 10;  // 2 * (hops + 2) plus any auxiliary feature width
  // Width of the attention MLP's hidden layer; 0 means hidden_dim.
  int attn_hidden_dim = 0;
  bool attention_enabled = true;
  bool jk_enabled = true;
  double edge_dropout_rate = 0.5;
  // Conventional in-neighbor aggregation instead of the out-neighbor form.
  bool aggregate_in_neighbors = false;

  // Rule-verifier switches. tail_readout scores a triple by h_v of the last
  // layer (hidden_dim must be 1); attention_floor zeroes gates below it.
  bool tail_readout = false;
  double attention_floor = 0.0;

  int attention_hidden() const { return attn_hidden_dim > 0 ? attn_hidden_dim : hidden_dim; }
  int layer_input_dim(int layer) const { return layer == 0 ? input_dim : hidden_dim; }
  std::size_t readout_dim() const;
  void validate(std::size_t num_relations) const;
};

struct LayerParams {
  std::vector<Tensor> bases;  // num_bases tensors, d_in x d
  Tensor coefficients;        // R x num_bases
  Tensor self_weight;         // d_in x d
  Tensor attn_w1;             // (2 d_in + 2 d) x h_attn
  Tensor attn_b1;             // 1 x h_attn
  Tensor attn_w2;             // h_attn x 1
  Tensor attn_b2;             // 1 x 1
};

struct GnnParams {
  std::vector<LayerParams> layers;
  Tensor attn_rel_emb;    // R x d
  Tensor target_rel_emb;  // R x d
  Tensor readout;         // readout_dim x 1

  // Stable (name, tensor) listing used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t num_scalars() const;

  // Zero tensors with the same shapes.
  GnnParams zeros_like() const;
};

// Glorot-uniform weights, zero biases; deterministic given the generator state.
GnnParams init_params(const GnnConfig& cfg, std::size_t num_relations, Rng& rng);

// Checks every tensor shape against cfg; throws on mismatch or non-finite values.
void validate_params(const GnnParams& p, const GnnConfig& cfg, std::size_t num_relations);

// The parameter tensors as tape leaves.
struct BoundParams {
  struct Layer {
    std::vector<ad::Value> bases;
    ad::Value coefficients, self_weight, attn_w1, attn_b1, attn_w2, attn_b2;
  };
  std::vector<Layer> layers;
  ad::Value attn_rel_emb, target_rel_emb, readout;
  std::vector<ad::Value> all;  // same order as GnnParams::named()
};

BoundParams bind_params(ad::Tape& tape, const GnnParams& p, bool requires_grad);

// Adds the leaf gradients of `bound` into `grads` (same layout as the params).
void accumulate_grads(const BoundParams& bound, GnnParams& grads);

// Per-layer 0/1 keep masks over sub.edges.
using EdgeMasks = std::vector<std::vector<double>>;

// Bernoulli(1 - rate) keep masks; the target edge is always kept.
EdgeMasks sample_edge_masks(const LabeledSubgraph& sub, const GnnConfig& cfg, Rng& rng);

// Initial node states from the subgraph features (n x input_dim constant).
ad::Value node_features(ad::Tape& tape, const LabeledSubgraph& sub, const GnnConfig& cfg);

// One message-passing layer. `mask` may be empty (all edges kept).
ad::Value layer_forward(const BoundParams& p, const GnnConfig& cfg, const LabeledSubgraph& sub,
                        ad::Value h_prev, int layer, std::span<const double> mask);

// Scalar score of sub's target triple. `masks` may be null (evaluation).
ad::Value score_triplet(const BoundParams& p, const GnnConfig& cfg, const LabeledSubgraph& sub,
                        const EdgeMasks* masks = nullptr);

// Forward-only convenience used for evaluation.
double score_value(const GnnParams& p, const GnnConfig& cfg, const LabeledSubgraph& sub);

// Edge gate for a single (s, r, t) edge at `layer` given state vectors.
double attention_weight(const GnnParams& p, const GnnConfig& cfg, int layer,
                        std::span<const double> h_s, std::span<const double> h_t, RelationId r,
                        RelationId r_t);

}  // namespace grail
