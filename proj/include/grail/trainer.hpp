#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "grail/gnn.hpp"
#include "grail/kg.hpp"
#include "grail/subgraph.hpp"

namespace grail {

class Rng;

struct TrainConfig {
  double margin = 10.0;
  double lr = 0.01;
  double l2 = 5e-4;
  double clip_norm = 1000.0;
  int epochs = 50;
  int eval_every = 3;
  int batch_size = 16;
  int neg_per_pos = 1;
  int hops = 3;
  std::uint64_t seed = 0;
  ExtractionMode mode = ExtractionMode::enclosing;
  LabelScheme labels = LabelScheme::double_radius;
  int threads = 1;
  bool cache_subgraphs = true;

  void validate() const;
};

// max(0, neg - pos + margin)
double hinge_loss(double pos_score, double neg_score, double margin);

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;  // added to the gradient (l2 * w) before the moment updates
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam. State moments are allocated on first use.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options);

// Scales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double clip_gradients(std::span<Tensor> grads, double max_norm);

struct TrainingState {
  GnnParams best_params;
  double best_val_auc_pr = -1.0;
  int best_epoch = 0;
  AdamState adam;
};

struct Checkpoint {
  GnnConfig gnn;
  TrainConfig train;
  std::vector<std::string> relations;  // model relation vocabulary, id order
  GnnParams params;
  int epoch = 0;
  double val_auc_pr = 0.0;
  // Present in resumable checkpoints (optimizer moments and best-so-far).
  std::optional<TrainingState> state;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> val_auc_pr;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;  // resumable
  std::vector<EpochLog> log;
};

// Thread-safe memo of labeled subgraphs keyed by target triple.
class SubgraphCache {
 public:
  std::shared_ptr<const LabeledSubgraph> get_or_build(const Triple& t,
                                                      const std::function<LabeledSubgraph()>& build);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<Triple, std::shared_ptr<const LabeledSubgraph>, TripleHash> map_;
};

// Everything needed to turn a triple into a labeled subgraph.
struct SubgraphRecipe {
  int hops = 3;
  ExtractionMode mode = ExtractionMode::enclosing;
  LabelScheme labels = LabelScheme::double_radius;
  const AuxFeatures* aux = nullptr;

  std::size_t feature_dim() const;
  LabeledSubgraph build(const KnowledgeGraph& g, const Triple& t) const;
};

struct TrainingExample {
  Triple positive;
  std::vector<Triple> negatives;
};

// Sum of hinge losses of one positive against its negatives. When `grads` is
// non-null the parameter gradients are added to it. `dropout_rng` null means
// no edge dropout.
double example_loss(const GnnParams& params, const GnnConfig& gnn, const TrainConfig& cfg,
                    const KnowledgeGraph& g, const TrainingExample& ex, const SubgraphRecipe& recipe,
                    Rng* dropout_rng, GnnParams* grads, SubgraphCache* cache = nullptr);

// AUC-PR of `triples` against one sampled negative each (seeded), scored on
// g with the triples themselves withheld.
double validation_auc_pr(const GnnParams& params, const GnnConfig& gnn, const KnowledgeGraph& g,
                         std::span<const Triple> triples, const SubgraphRecipe& recipe,
                         std::uint64_t seed, int threads, SubgraphCache* cache = nullptr);

struct TrainHooks {
  const Checkpoint* resume = nullptr;  // must carry a TrainingState
  const AuxFeatures* aux = nullptr;
  std::function<void(const EpochLog&)> on_epoch;
};

// gnn.input_dim is overwritten with the width implied by the labeling recipe.
TrainResult train(const KnowledgeGraph& g_train, std::span<const Triple> valid, const TrainConfig& cfg,
                  GnnConfig gnn, const TrainHooks& hooks = {});

// Binary checkpoint file: see README for the layout.
std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace grail
