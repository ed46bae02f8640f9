#include "grail/logic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "grail/error.hpp"
#include "grail/parallel.hpp"
#include "grail/rng.hpp"

namespace grail {

namespace {

constexpr double kGateGain = 60.0;
constexpr double kAttentionFloor = 1e-6;

}  // namespace

void PathRule::validate(std::size_t num_relations) const {
  if (body.empty()) throw Error("rule: body must contain at least one relation");
  if (head >= num_relations) throw Error("rule: head relation id out of range");
  for (RelationId r : body) {
    if (r >= num_relations) throw Error("rule: body relation id out of range");
  }
}

std::string PathRule::to_string(const Vocabulary* relations) const {
  auto name = [&](RelationId r) {
    return relations && r < relations->size() ? relations->name(r) : "r" + std::to_string(r);
  };
  std::string out = name(head) + "(X,Y) <-";
  for (std::size_t i = 0; i < body.size(); ++i) {
    const std::string from = i == 0 ? "X" : "Z" + std::to_string(i);
    const std::string to = i + 1 == body.size() ? "Y" : "Z" + std::to_string(i + 1);
    out += (i == 0 ? " " : " ^ ") + name(body[i]) + "(" + from + "," + to + ")";
  }
  return out;
}

RuleMatch rule_satisfied(const KnowledgeGraph& g, const PathRule& rule, EntityId u, EntityId v) {
  g.check_entity(u);
  g.check_entity(v);
  rule.validate(g.num_relations());
  const std::size_t n = g.num_entities();
  const std::size_t k = rule.body.size();
  // parent[i][x]: predecessor of x after step i, n if x is unreachable.
  std::vector<std::vector<EntityId>> parent(k, std::vector<EntityId>(n, static_cast<EntityId>(n)));
  std::vector<EntityId> frontier{u};
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<EntityId> next;
    for (EntityId x : frontier) {
      for (EntityId y : g.out_neighbors(x, rule.body[i])) {
        if (parent[i][y] == n) {
          parent[i][y] = x;
          next.push_back(y);
        }
      }
    }
    frontier = std::move(next);
  }
  RuleMatch m;
  if (parent[k - 1][v] == n) return m;
  m.satisfied = true;
  EntityId x = v;
  for (std::size_t i = k - 1; i > 0; --i) {
    x = parent[i][x];
    m.witness.push_back(x);
  }
  std::reverse(m.witness.begin(), m.witness.end());
  return m;
}

int count_satisfied(const KnowledgeGraph& g, std::span<const PathRule> rules, EntityId u, EntityId v) {
  int beta = 0;
  for (const auto& r : rules) {
    if (r.head != rules.front().head) throw Error("count_satisfied: rules do not share a head relation");
    beta += rule_satisfied(g, r, u, v).satisfied;
  }
  return beta;
}

double count_walks(const KnowledgeGraph& g, std::span<const RelationId> body, EntityId u, EntityId v) {
  g.check_entity(u);
  g.check_entity(v);
  std::vector<double> c(g.num_entities(), 0.0);
  c[u] = 1.0;
  for (RelationId r : body) {
    g.check_relation(r);
    std::vector<double> next(c.size(), 0.0);
    for (EntityId x = 0; x < c.size(); ++x) {
      if (c[x] == 0.0) continue;
      for (EntityId y : g.out_neighbors(x, r)) next[y] += c[x];
    }
    c = std::move(next);
  }
  return c[v];
}

RuleModel construct_rule_params(const PathRule& rule, std::size_t num_relations, int max_layers) {
  rule.validate(num_relations);
  if (static_cast<int>(rule.body.size()) > max_layers) {
    throw Error("construct_rule_params: rule of length " + std::to_string(rule.body.size()) +
                " exceeds the configured maximum of " + std::to_string(max_layers) + " layers");
  }
  RuleModel m;
  auto& c = m.config;
  c.num_layers = static_cast<int>(rule.body.size());
  c.hidden_dim = 1;
  c.input_dim = 1;
  c.num_bases = 1;
  c.attn_hidden_dim = 3;
  c.attention_enabled = true;
  c.jk_enabled = false;
  c.edge_dropout_rate = 0.0;
  c.aggregate_in_neighbors = true;
  c.tail_readout = true;
  c.attention_floor = kAttentionFloor;
  c.validate(num_relations);

  const std::size_t R = num_relations;
  auto& p = m.params;
  p.attn_rel_emb = Tensor(R, 1);
  for (std::size_t r = 0; r < R; ++r) p.attn_rel_emb.data[r] = static_cast<double>(r);
  p.target_rel_emb = Tensor(R, 1);
  p.readout = Tensor(c.readout_dim(), 1);
  for (RelationId rl : rule.body) {
    LayerParams l;
    l.bases.push_back(Tensor(1, 1, 1.0));
    l.coefficients = Tensor(R, 1, 1.0);
    l.self_weight = Tensor(1, 1, 0.0);
    // Gate input is [h_s, h_t, e_r, e_rt]; only e_r is read. The hidden units
    // relu(r - rl + 1), relu(r - rl), relu(r - rl - 1) combine with weights
    // 1, -2, 1 into an indicator of r == rl.
    l.attn_w1 = Tensor(4, 3);
    for (std::size_t j = 0; j < 3; ++j) l.attn_w1.data[2 * 3 + j] = 1.0;
    const double r0 = static_cast<double>(rl);
    l.attn_b1 = Tensor(1, 3, std::vector<double>{-(r0 - 1.0), -r0, -(r0 + 1.0)});
    l.attn_w2 = Tensor(3, 1, std::vector<double>{kGateGain, -2.0 * kGateGain, kGateGain});
    l.attn_b2 = Tensor::scalar(-kGateGain / 2.0);
    p.layers.push_back(std::move(l));
  }
  validate_params(p, c, R);
  return m;
}

LabeledSubgraph verifier_input(const KnowledgeGraph& g, EntityId u, EntityId v, RelationId r_t) {
  g.check_entity(u);
  g.check_entity(v);
  g.check_relation(r_t);
  LabeledSubgraph s;
  s.nodes.push_back(u);
  if (v != u) s.nodes.push_back(v);
  for (EntityId e = 0; e < g.num_entities(); ++e) {
    if (e != u && e != v) s.nodes.push_back(e);
  }
  for (std::uint32_t i = 0; i < s.nodes.size(); ++i) s.local_index[s.nodes[i]] = i;
  for (const auto& t : g.triples()) s.edges.push_back({s.local_index[t.head], t.rel, s.local_index[t.tail]});
  s.target_u = 0;
  s.target_v = s.local_index[v];
  s.target_rel = r_t;
  s.target_edge = s.edges.size();  // no appended edge
  s.feature_dim = 1;
  s.features.assign(s.nodes.size(), 0.0);
  s.features[0] = 1.0;
  return s;
}

double rule_model_score(const RuleModel& model, const KnowledgeGraph& g, EntityId u, EntityId v) {
  // The head relation only enters through the (unused) target embedding input.
  return score_value(model.params, model.config, verifier_input(g, u, v, 0));
}

double rule_set_score(std::span<const RuleModel> models, const KnowledgeGraph& g, EntityId u, EntityId v) {
  double s = 0.0;
  for (const auto& m : models) s += rule_model_score(m, g, u, v);
  return s;
}

std::string VerifyReport::to_text() const {
  std::ostringstream os;
  os << "trials\t" << trials << "\n";
  os << "checks\t" << checks << "\n";
  os << "agreements\t" << agreements << "\n";
  os << "agreement_rate\t" << (checks ? static_cast<double>(agreements) / static_cast<double>(checks) : 1.0) << "\n";
  os << "rule_set_checks\t" << set_checks << "\n";
  os << "rule_set_failures\t" << set_failures << "\n";
  os << "rule_set_max_rel_error\t" << set_max_rel_error << "\n";
  for (const auto& c : disagreements) {
    os << "\ncounterexample\n";
    os << "rule\t" << c.rule << "\n";
    os << "pair\t" << c.u << "\t" << c.v << "\n";
    os << "score\t" << c.score << "\toracle\t" << (c.oracle ? "true" : "false") << "\n";
    os << c.graph;
  }
  return os.str();
}

namespace {

struct TrialOutcome {
  std::size_t checks = 0, agreements = 0, set_checks = 0, set_failures = 0;
  double set_max_rel_error = 0.0;
  std::vector<Counterexample> disagreements;
};

KnowledgeGraph random_graph(Rng& rng, int max_nodes, int max_relations) {
  const auto n = 2 + rng.uniform_index(static_cast<std::uint64_t>(max_nodes - 1));
  const auto R = 1 + rng.uniform_index(static_cast<std::uint64_t>(max_relations));
  std::vector<std::string> ents, rels;
  for (std::uint64_t i = 0; i < n; ++i) ents.push_back("n" + std::to_string(i));
  for (std::uint64_t i = 0; i < R; ++i) rels.push_back("r" + std::to_string(i));
  // Edge count from empty up to dense enough to make long walks common.
  const auto m = rng.uniform_index(3 * n + 1);
  std::vector<Triple> triples;
  for (std::uint64_t i = 0; i < m; ++i) {
    triples.push_back({static_cast<EntityId>(rng.uniform_index(n)), static_cast<RelationId>(rng.uniform_index(R)),
                       static_cast<EntityId>(rng.uniform_index(n))});
  }
  return KnowledgeGraph(std::make_shared<Vocabulary>(std::move(ents)), std::make_shared<Vocabulary>(std::move(rels)),
                        std::move(triples));
}

PathRule random_rule(Rng& rng, RelationId head, std::size_t R, int max_len) {
  PathRule r;
  r.head = head;
  const auto len = 1 + rng.uniform_index(static_cast<std::uint64_t>(max_len));
  for (std::uint64_t i = 0; i < len; ++i) r.body.push_back(static_cast<RelationId>(rng.uniform_index(R)));
  return r;
}

TrialOutcome run_trial(const VerifyOptions& o, int trial) {
  Rng rng = make_stream(o.seed, "verify", static_cast<std::uint64_t>(trial));
  const KnowledgeGraph g = random_graph(rng, o.max_nodes, o.max_relations);
  const std::size_t R = g.num_relations();
  const auto head = static_cast<RelationId>(rng.uniform_index(R));
  const PathRule rule = random_rule(rng, head, R, o.max_rule_len);
  const RuleModel model = construct_rule_params(rule, R, o.max_rule_len);

  std::vector<PathRule> set;
  const auto set_size = 1 + rng.uniform_index(static_cast<std::uint64_t>(o.max_rules_per_set));
  for (std::uint64_t i = 0; i < set_size; ++i) set.push_back(random_rule(rng, head, R, o.max_rule_len));
  std::vector<RuleModel> set_models;
  for (const auto& r : set) set_models.push_back(construct_rule_params(r, R, o.max_rule_len));

  TrialOutcome out;
  for (int p = 0; p < o.pairs_per_trial; ++p) {
    const auto u = static_cast<EntityId>(rng.uniform_index(g.num_entities()));
    const auto v = static_cast<EntityId>(rng.uniform_index(g.num_entities()));
    const double score = rule_model_score(model, g, u, v);
    const bool oracle = rule_satisfied(g, rule, u, v).satisfied;
    ++out.checks;
    if ((score != 0.0) == oracle) {
      ++out.agreements;
    } else {
      out.disagreements.push_back(
          {g.to_text(), rule.to_string(&g.relations()), g.entities().name(u), g.entities().name(v), score, oracle});
    }

    // Rule sets: summed score against the total walk count, and the number of
    // rules with a nonzero score against beta.
    double walks = 0.0;
    int fired = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      walks += count_walks(g, set[i].body, u, v);
      fired += rule_model_score(set_models[i], g, u, v) != 0.0;
    }
    const double summed = rule_set_score(set_models, g, u, v);
    const double err = walks == 0.0 ? std::abs(summed) : std::abs(summed - walks) / walks;
    out.set_max_rel_error = std::max(out.set_max_rel_error, err);
    ++out.set_checks;
    if (!(err <= 1e-9) || fired != count_satisfied(g, set, u, v)) ++out.set_failures;
  }
  return out;
}

}  // namespace

VerifyReport verify_theorem1(const VerifyOptions& o) {
  if (o.trials < 0) throw ConfigError("verify: trials must be >= 0");
  if (o.max_rule_len < 1 || o.max_rule_len > 3) throw ConfigError("verify: max rule length must be in [1, 3]");
  if (o.max_nodes < 2 || o.max_relations < 1 || o.pairs_per_trial < 1 || o.max_rules_per_set < 1) {
    throw ConfigError("verify: max_nodes >= 2, max_relations >= 1, pairs_per_trial >= 1, max_rules_per_set >= 1");
  }
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(o.trials));
  parallel_for(outcomes.size(), o.threads, [&](std::size_t i) { outcomes[i] = run_trial(o, static_cast<int>(i)); });
  VerifyReport rep;
  rep.trials = o.trials;
  for (auto& t : outcomes) {
    rep.checks += t.checks;
    rep.agreements += t.agreements;
    rep.set_checks += t.set_checks;
    rep.set_failures += t.set_failures;
    rep.set_max_rel_error = std::max(rep.set_max_rel_error, t.set_max_rel_error);
    for (auto& c : t.disagreements) rep.disagreements.push_back(std::move(c));
  }
  return rep;
}

}  // namespace grail
