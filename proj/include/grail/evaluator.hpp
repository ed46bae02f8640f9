#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grail/kg.hpp"

namespace grail {

class Rng;

// Area under the precision-recall step curve. Scores are swept from high to
// low; tied scores enter together as one threshold.
double auc_pr(std::span<const double> pos_scores, std::span<const double> neg_scores);

// Replaces head or tail (fair coin) with a uniform entity, rejecting the
// identity corruption and self-loops (they have no enclosing subgraph).
// Unfiltered: the result may be another true triple.
Triple sample_negative(const KnowledgeGraph& g, const Triple& pos, Rng& rng);

using TripleScorer = std::function<double(const Triple&)>;

struct RankResult {
  int rank = 1;
  std::vector<Triple> negatives;
  double score = 0.0;
};

// 1 + #(negatives scoring strictly higher) + floor(#ties / 2).
int rank_from_scores(double true_score, std::span<const double> negative_scores);

RankResult rank_triplet(const TripleScorer& scorer, const Triple& triple, const KnowledgeGraph& g,
                        int num_neg, Rng& rng);

struct TripletRecord {
  Triple triple;
  double score = 0.0;
  int rank = 0;
  std::size_t negatives_used = 0;
};

struct EvalReport {
  double auc_pr = 0.0;
  double hits_at_10 = 0.0;
  std::vector<TripletRecord> records;
  std::vector<double> pos_scores;  // AUC-PR positives
  std::vector<double> neg_scores;  // AUC-PR negatives (one per positive)
  std::uint64_t seed = 0;
  int num_negatives = 50;

  std::string to_key_values() const;
  std::string to_csv(const KnowledgeGraph& g) const;
};

struct EvalConfig {
  int num_negatives = 50;
  std::uint64_t seed = 0;
  // Number of model relations; test triples with a relation id at or beyond
  // this are rejected. 0 disables the check.
  std::size_t model_relations = 0;
  int threads = 1;
};

// Scores a triple against a message-passing graph.
using GraphScorer = std::function<double(const KnowledgeGraph& message_graph, const Triple&)>;

// Removes test_edges from g before scoring; AUC-PR over the test edges and
// one sampled negative each, Hits@10 over num_negatives corruptions each.
EvalReport evaluate(const GraphScorer& model, const KnowledgeGraph& g,
                    std::span<const Triple> test_edges, const EvalConfig& cfg);

// Linear logistic model over per-method score vectors.
struct LateFusionModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> mean;   // feature standardization
  std::vector<double> scale;
  std::vector<double> loss_history;

  double predict(std::span<const double> features) const;
};

struct LateFusionOptions {
  int iterations = 2000;
  // 0 picks a step size that guarantees monotone descent for standardized inputs.
  double learning_rate = 0.0;
};

// rows[i] is the per-method score vector of validation example i.
LateFusionModel fit_late_fusion(const std::vector<std::vector<double>>& rows,
                                std::span<const int> labels, const LateFusionOptions& options = {});

// (p12 - max(p1, p2)) / max(p1, p2); inputs must lie in (0, 1].
double ensemble_gain(double p1, double p2, double p12);

struct ScoredTriple {
  std::string head, rel, tail;
  double value = 0.0;
};

// `head<TAB>rel<TAB>tail<TAB>value` lines (scores or 0/1 labels).
std::vector<ScoredTriple> parse_scored_triples(std::string_view text);
std::string format_scored_triples(std::span<const ScoredTriple> rows);

}  // namespace grail
