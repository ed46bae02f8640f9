#include "grail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "grail/error.hpp"
#include "grail/evaluator.hpp"
#include "grail/parallel.hpp"
#include "grail/rng.hpp"

namespace grail {

using ad::Value;

void TrainConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("train: margin must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(l2 >= 0.0)) throw ConfigError("train: l2 must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (neg_per_pos < 1) throw ConfigError("train: neg_per_pos must be >= 1");
  if (hops < 1) throw ConfigError("train: hops must be >= 1");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
}

double hinge_loss(double pos_score, double neg_score, double margin) {
  return std::max(0.0, neg_score - pos_score + margin);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& o) {
  if (params.size() != grads.size()) throw Error("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size() || state.m[i].size() != params[i]->size()) {
      throw Error("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
    for (double g : grads[i].data) {
      if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient at tensor " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g0 = grads[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = g0[j] + o.l2 * w[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      w[j] -= o.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + o.eps);
    }
  }
}

double clip_gradients(std::span<Tensor> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw Error("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.data) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.data) x *= s;
    }
  }
  return norm;
}

std::shared_ptr<const LabeledSubgraph> SubgraphCache::get_or_build(
    const Triple& t, const std::function<LabeledSubgraph()>& build) {
  {
    std::lock_guard lock(mu_);
    auto it = map_.find(t);
    if (it != map_.end()) return it->second;
  }
  auto sub = std::make_shared<const LabeledSubgraph>(build());
  std::lock_guard lock(mu_);
  return map_.emplace(t, std::move(sub)).first->second;
}

std::size_t SubgraphCache::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

std::size_t SubgraphRecipe::feature_dim() const {
  return structural_feature_dim(hops) + ((aux && aux->table) ? aux->table->dim() : 0);
}

LabeledSubgraph SubgraphRecipe::build(const KnowledgeGraph& g, const Triple& t) const {
  return make_labeled_subgraph(g, t, hops, mode, labels, aux);
}

namespace {

std::shared_ptr<const LabeledSubgraph> fetch(const KnowledgeGraph& g, const Triple& t,
                                             const SubgraphRecipe& recipe, SubgraphCache* cache) {
  if (cache) return cache->get_or_build(t, [&] { return recipe.build(g, t); });
  return std::make_shared<const LabeledSubgraph>(recipe.build(g, t));
}

Value scored(const BoundParams& b, const GnnConfig& gnn, const LabeledSubgraph& sub, Rng* dropout_rng) {
  if (dropout_rng && gnn.edge_dropout_rate > 0.0) {
    EdgeMasks masks = sample_edge_masks(sub, gnn, *dropout_rng);
    return score_triplet(b, gnn, sub, &masks);
  }
  return score_triplet(b, gnn, sub, nullptr);
}

}  // namespace

double example_loss(const GnnParams& params, const GnnConfig& gnn, const TrainConfig& cfg,
                    const KnowledgeGraph& g, const TrainingExample& ex, const SubgraphRecipe& recipe,
                    Rng* dropout_rng, GnnParams* grads, SubgraphCache* cache) {
  ad::Tape tape;
  BoundParams b = bind_params(tape, params, grads != nullptr);
  auto pos_sub = fetch(g, ex.positive, recipe, cache);
  Value pos = scored(b, gnn, *pos_sub, dropout_rng);
  Value margin = tape.constant(Tensor::scalar(cfg.margin));
  Value neg_pos = ad::scale(pos, -1.0);
  Value total;
  for (std::size_t i = 0; i < ex.negatives.size(); ++i) {
    auto neg_sub = fetch(g, ex.negatives[i], recipe, nullptr);
    Value neg = scored(b, gnn, *neg_sub, dropout_rng);
    Value term = ad::hinge(ad::add(ad::add(neg, neg_pos), margin));
    total = i == 0 ? term : ad::add(total, term);
  }
  if (ex.negatives.empty()) throw Error("example_loss: no negatives");
  if (grads) {
    tape.backward(total);
    accumulate_grads(b, *grads);
  }
  return total.item();
}

double validation_auc_pr(const GnnParams& params, const GnnConfig& gnn, const KnowledgeGraph& g,
                         std::span<const Triple> triples, const SubgraphRecipe& recipe, std::uint64_t seed,
                         int threads, SubgraphCache* cache) {
  std::unordered_set<Triple, TripleHash> held(triples.begin(), triples.end());
  std::vector<Triple> kept;
  for (const auto& t : g.triples()) {
    if (!held.count(t)) kept.push_back(t);
  }
  const KnowledgeGraph message = kept.size() == g.num_triples() ? g : g.with_triples(std::move(kept));
  std::vector<double> pos(triples.size()), neg(triples.size());
  parallel_for(triples.size(), threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, "valid-neg", i);
    const Triple n = sample_negative(message, triples[i], rng);
    pos[i] = score_value(params, gnn, *fetch(message, triples[i], recipe, cache));
    neg[i] = score_value(params, gnn, *fetch(message, n, recipe, cache));
  });
  return auc_pr(pos, neg);
}

TrainResult train(const KnowledgeGraph& g_train, std::span<const Triple> valid, const TrainConfig& cfg,
                  GnnConfig gnn, const TrainHooks& hooks) {
  cfg.validate();
  if (g_train.num_triples() == 0) throw Error("train: training graph has no triples");
  const std::size_t num_rel = g_train.num_relations();
  for (const auto& t : valid) {
    if (t.head >= g_train.num_entities() || t.tail >= g_train.num_entities() || t.rel >= num_rel) {
      throw Error("train: validation triple outside the training vocabularies");
    }
    if (t.head == t.tail) throw Error("train: self-loop validation triple");
  }
  SubgraphRecipe recipe{cfg.hops, cfg.mode, cfg.labels, hooks.aux};
  gnn.input_dim = static_cast<int>(recipe.feature_dim());
  gnn.validate(num_rel);

  GnnParams params;
  TrainingState state;
  int start_epoch = 1;
  if (hooks.resume) {
    if (!hooks.resume->state) throw ConfigError("train: checkpoint is not resumable (no optimizer state)");
    validate_params(hooks.resume->params, gnn, num_rel);
    params = hooks.resume->params;
    state = *hooks.resume->state;
    start_epoch = hooks.resume->epoch + 1;
  } else {
    Rng init_rng = make_stream(cfg.seed, "init");
    params = init_params(gnn, num_rel, init_rng);
    state.best_params = params;
  }

  std::vector<std::string> relations = g_train.relations().names();
  // Self-loops have no enclosing subgraph; they stay in the graph as context only.
  std::vector<Triple> positives;
  for (const auto& t : g_train.triples()) {
    if (t.head != t.tail) positives.push_back(t);
  }
  if (positives.empty()) throw Error("train: training graph has no non-self-loop triples");
  const std::size_t n = positives.size();
  SubgraphCache train_cache, valid_cache;
  SubgraphCache* tc = cfg.cache_subgraphs ? &train_cache : nullptr;
  SubgraphCache* vc = cfg.cache_subgraphs ? &valid_cache : nullptr;

  TrainResult result;
  double last_val = state.best_val_auc_pr;
  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < n; start += bs) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
      std::sort(batch.begin(), batch.end());
      std::vector<double> losses(batch.size());
      std::vector<GnnParams> grads(batch.size(), params.zeros_like());
      parallel_for(batch.size(), cfg.threads, [&](std::size_t j) {
        const std::size_t idx = batch[j];
        Rng rng = make_stream(cfg.seed, "example", (static_cast<std::uint64_t>(epoch) << 32) | idx);
        TrainingExample ex{positives[idx], {}};
        for (int k = 0; k < cfg.neg_per_pos; ++k) ex.negatives.push_back(sample_negative(g_train, ex.positive, rng));
        losses[j] = example_loss(params, gnn, cfg, g_train, ex, recipe, &rng, &grads[j], tc);
      });
      // Fixed reduction order: ascending example index.
      GnnParams total = params.zeros_like();
      auto dst = total.named();
      for (std::size_t j = 0; j < batch.size(); ++j) {
        epoch_loss += losses[j];
        auto src = grads[j].named();
        for (std::size_t t = 0; t < dst.size(); ++t) {
          auto& d = dst[t].second->data;
          const auto& s = src[t].second->data;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
      }
      std::vector<Tensor> flat;
      std::vector<Tensor*> ptrs;
      for (auto& [name, t] : dst) flat.push_back(std::move(*t));
      for (auto& [name, t] : params.named()) ptrs.push_back(t);
      clip_gradients(flat, cfg.clip_norm);
      adam_step(ptrs, flat, state.adam, AdamOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.l2});
    }

    EpochLog entry{epoch, epoch_loss / static_cast<double>(n), std::nullopt};
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      if (!valid.empty()) {
        last_val = validation_auc_pr(params, gnn, g_train, valid, recipe, cfg.seed, cfg.threads, vc);
        entry.val_auc_pr = last_val;
        if (last_val > state.best_val_auc_pr) {
          state.best_val_auc_pr = last_val;
          state.best_epoch = epoch;
          state.best_params = params;
        }
      } else {
        state.best_params = params;
        state.best_epoch = epoch;
      }
    }
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);
  }

  result.best = Checkpoint{gnn, cfg, relations, state.best_params, state.best_epoch, state.best_val_auc_pr, {}};
  result.last = Checkpoint{gnn, cfg, relations, params, std::max(cfg.epochs, start_epoch - 1), last_val, state};
  return result;
}

}  // namespace grail
