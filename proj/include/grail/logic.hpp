#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grail/gnn.hpp"
#include "grail/kg.hpp"

namespace grail {

// r_t(X, Y) <- r_1(X, Z_1) ^ r_2(Z_1, Z_2) ^ ... ^ r_k(Z_{k-1}, Y)
struct PathRule {
  RelationId head = 0;
  std::vector<RelationId> body;

  void validate(std::size_t num_relations) const;
  std::string to_string(const Vocabulary* relations = nullptr) const;
};

struct RuleMatch {
  bool satisfied = false;
  std::vector<EntityId> witness;  // Z_1 .. Z_{k-1} when satisfied
};

// Searches for a directed walk u -> v whose relations follow the rule body.
// Intermediate entities need not be distinct.
RuleMatch rule_satisfied(const KnowledgeGraph& g, const PathRule& rule, EntityId u, EntityId v);

// Number of rules whose body holds for (u, v). All rules must share a head.
int count_satisfied(const KnowledgeGraph& g, std::span<const PathRule> rules, EntityId u, EntityId v);

// Number of relation-labeled walks u -> v realizing the body.
double count_walks(const KnowledgeGraph& g, std::span<const RelationId> body, EntityId u, EntityId v);

struct RuleModel {
  GnnConfig config;
  GnnParams params;
};

// One-dimensional hand-set model whose score for (u, r_t, v) is the number
// of walks realizing the rule body. Parameters depend only on the rule and R.
RuleModel construct_rule_params(const PathRule& rule, std::size_t num_relations, int max_layers = 3);

// Whole-graph input for a rule model: u carries feature 1, everything else 0.
LabeledSubgraph verifier_input(const KnowledgeGraph& g, EntityId u, EntityId v, RelationId r_t);

double rule_model_score(const RuleModel& model, const KnowledgeGraph& g, EntityId u, EntityId v);

// Sum of the per-rule model scores.
double rule_set_score(std::span<const RuleModel> models, const KnowledgeGraph& g, EntityId u, EntityId v);

struct VerifyOptions {
  int trials = 1000;
  int max_rule_len = 3;
  int max_nodes = 12;
  int max_relations = 4;
  int pairs_per_trial = 4;
  int max_rules_per_set = 3;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Counterexample {
  std::string graph;  // triple lines
  std::string rule;
  std::string u, v;
  double score = 0.0;
  bool oracle = false;
};

struct VerifyReport {
  int trials = 0;
  std::size_t checks = 0;
  std::size_t agreements = 0;
  std::vector<Counterexample> disagreements;
  std::size_t set_checks = 0;
  std::size_t set_failures = 0;  // summed score vs walk count beyond 1e-9, or beta mismatch
  double set_max_rel_error = 0.0;

  bool passed() const { return disagreements.empty() && set_failures == 0; }
  std::string to_text() const;
};

VerifyReport verify_theorem1(const VerifyOptions& options);

}  // namespace grail
