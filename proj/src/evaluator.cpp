#include "grail/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "grail/error.hpp"
#include "grail/parallel.hpp"
#include "grail/rng.hpp"

namespace grail {

double auc_pr(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) {
    throw Error("auc_pr: positive and negative score lists must be non-empty");
  }
  std::vector<std::pair<double, bool>> items;
  items.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) items.emplace_back(s, true);
  for (double s : neg_scores) items.emplace_back(s, false);
  for (const auto& [s, label] : items) {
    if (std::isnan(s)) throw Error("auc_pr: NaN score");
  }
  // Descending score; negatives first inside a tie (irrelevant once ties are
  // grouped below, but keeps the sweep order canonical).
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const double total_pos = static_cast<double>(pos_scores.size());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) {
      (items[j].second ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    if (recall > prev_recall) {
      area += (recall - prev_recall) * (tp / (tp + fp));
      prev_recall = recall;
    }
    i = j;
  }
  return area;
}

Triple sample_negative(const KnowledgeGraph& g, const Triple& pos, Rng& rng) {
  const std::size_t n = g.num_entities();
  // With two entities every corruption of (a, r, b) is the identity or a self-loop.
  if (n < 2 || (n < 3 && pos.head != pos.tail)) {
    throw Error("sample_negative: too few entities to corrupt a triple");
  }
  while (true) {
    Triple neg = pos;
    const bool replace_head = rng.bernoulli(0.5);
    const auto e = static_cast<EntityId>(rng.uniform_index(n));
    (replace_head ? neg.head : neg.tail) = e;
    if (neg != pos && neg.head != neg.tail) return neg;
  }
}

int rank_from_scores(double true_score, std::span<const double> negative_scores) {
  int greater = 0, ties = 0;
  for (double s : negative_scores) {
    if (s > true_score) {
      ++greater;
    } else if (s == true_score) {
      ++ties;
    }
  }
  return 1 + greater + ties / 2;
}

RankResult rank_triplet(const TripleScorer& scorer, const Triple& triple, const KnowledgeGraph& g,
                        int num_neg, Rng& rng) {
  if (num_neg < 0) throw Error("rank_triplet: negative count must be non-negative");
  if (g.num_entities() < 2) throw Error("rank_triplet: too few entities to sample negatives");
  RankResult r;
  r.score = scorer(triple);
  std::vector<double> neg_scores;
  for (int i = 0; i < num_neg; ++i) {
    r.negatives.push_back(sample_negative(g, triple, rng));
    neg_scores.push_back(scorer(r.negatives.back()));
  }
  r.rank = rank_from_scores(r.score, neg_scores);
  return r;
}

EvalReport evaluate(const GraphScorer& model, const KnowledgeGraph& g,
                    std::span<const Triple> test_edges, const EvalConfig& cfg) {
  if (test_edges.empty()) throw Error("evaluate: no test edges");
  for (const auto& t : test_edges) {
    if (t.head == t.tail) throw Error("evaluate: self-loop test triple on '" + g.entities().name(t.head) + "'");
  }
  if (cfg.model_relations > 0) {
    std::vector<std::string> missing;
    for (const auto& t : test_edges) {
      if (t.rel >= cfg.model_relations) {
        const std::string& name = g.relations().name(t.rel);
        if (std::find(missing.begin(), missing.end(), name) == missing.end()) missing.push_back(name);
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw Error("evaluate: relations absent from the model vocabulary: " + list);
    }
  }

  std::unordered_set<Triple, TripleHash> held_out(test_edges.begin(), test_edges.end());
  std::vector<Triple> kept;
  for (const auto& t : g.triples()) {
    if (!held_out.count(t)) kept.push_back(t);
  }
  const KnowledgeGraph message = g.with_triples(std::move(kept));
  TripleScorer scorer = [&](const Triple& t) { return model(message, t); };

  EvalReport report;
  report.seed = cfg.seed;
  report.num_negatives = cfg.num_negatives;
  const std::size_t n = test_edges.size();
  report.records.resize(n);
  report.pos_scores.resize(n);
  report.neg_scores.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const Triple& t = test_edges[i];
    Rng auc_rng = make_stream(cfg.seed, "eval-auc", i);
    Triple neg = sample_negative(message, t, auc_rng);
    Rng rank_rng = make_stream(cfg.seed, "eval-rank", i);
    RankResult rr = rank_triplet(scorer, t, message, cfg.num_negatives, rank_rng);
    report.pos_scores[i] = rr.score;
    report.neg_scores[i] = scorer(neg);
    report.records[i] = {t, rr.score, rr.rank, rr.negatives.size()};
  });
  report.auc_pr = auc_pr(report.pos_scores, report.neg_scores);
  std::size_t hits = 0;
  for (const auto& r : report.records) hits += r.rank <= 10 ? 1 : 0;
  report.hits_at_10 = static_cast<double>(hits) / static_cast<double>(n);
  return report;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string EvalReport::to_key_values() const {
  std::ostringstream os;
  os << "auc_pr=" << fmt(auc_pr) << '\n'
     << "hits_at_10=" << fmt(hits_at_10) << '\n'
     << "num_test=" << records.size() << '\n'
     << "num_negatives=" << num_negatives << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

std::string EvalReport::to_csv(const KnowledgeGraph& g) const {
  std::ostringstream os;
  os << "head,relation,tail,score,rank,negatives\n";
  for (const auto& r : records) {
    os << csv_field(g.entities().name(r.triple.head)) << ',' << csv_field(g.relations().name(r.triple.rel))
       << ',' << csv_field(g.entities().name(r.triple.tail)) << ',' << fmt(r.score) << ',' << r.rank << ','
       << r.negatives_used << '\n';
  }
  return os.str();
}

double LateFusionModel::predict(std::span<const double> features) const {
  if (features.size() != weights.size()) throw Error("late fusion: feature width mismatch");
  double z = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * (features[j] - mean[j]) / scale[j];
  return z;
}

LateFusionModel fit_late_fusion(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                                const LateFusionOptions& options) {
  if (rows.empty() || rows.size() != labels.size()) {
    throw Error("late fusion: need one label per validation row");
  }
  const std::size_t m = rows[0].size();
  const auto n = static_cast<double>(rows.size());
  LateFusionModel model;
  model.weights.assign(m, 0.0);
  model.mean.assign(m, 0.0);
  model.scale.assign(m, 1.0);
  for (const auto& r : rows) {
    if (r.size() != m) throw Error("late fusion: ragged feature rows");
    for (std::size_t j = 0; j < m; ++j) model.mean[j] += r[j] / n;
  }
  for (std::size_t j = 0; j < m; ++j) {
    double var = 0.0;
    for (const auto& r : rows) var += (r[j] - model.mean[j]) * (r[j] - model.mean[j]) / n;
    model.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  std::vector<std::vector<double>> z(rows.size(), std::vector<double>(m));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) z[i][j] = (rows[i][j] - model.mean[j]) / model.scale[j];
  }
  // Logistic loss is ((m+1)/4)-smooth on standardized inputs.
  const double lr = options.learning_rate > 0.0 ? options.learning_rate : 2.0 / static_cast<double>(m + 1);
  auto loss_and_grad = [&](std::vector<double>* gw, double* gb) {
    double loss = 0.0;
    if (gw) std::fill(gw->begin(), gw->end(), 0.0);
    if (gb) *gb = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      double s = model.bias;
      for (std::size_t j = 0; j < m; ++j) s += model.weights[j] * z[i][j];
      const double y = labels[i] ? 1.0 : -1.0;
      const double margin = y * s;
      loss += (margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin))) / n;
      const double sig = 1.0 / (1.0 + std::exp(margin));  // sigma(-margin)
      if (gw) {
        for (std::size_t j = 0; j < m; ++j) (*gw)[j] += -y * sig * z[i][j] / n;
      }
      if (gb) *gb += -y * sig / n;
    }
    return loss;
  };
  std::vector<double> gw(m);
  double gb = 0.0;
  for (int it = 0; it < options.iterations; ++it) {
    model.loss_history.push_back(loss_and_grad(&gw, &gb));
    for (std::size_t j = 0; j < m; ++j) model.weights[j] -= lr * gw[j];
    model.bias -= lr * gb;
  }
  model.loss_history.push_back(loss_and_grad(nullptr, nullptr));
  for (double w : model.weights) {
    if (!std::isfinite(w)) throw Error("late fusion: weights diverged");
  }
  return model;
}

double ensemble_gain(double p1, double p2, double p12) {
  for (double p : {p1, p2, p12}) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("ensemble_gain: performance values must lie in (0, 1]");
  }
  const double best = std::max(p1, p2);
  return (p12 - best) / best;
}

std::vector<ScoredTriple> parse_scored_triples(std::string_view text) {
  std::vector<ScoredTriple> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (f.size() != 4) {
      throw Error("line " + std::to_string(line_no) + ": expected 4 tab-separated fields, found " +
                  std::to_string(f.size()));
    }
    ScoredTriple row{std::string(f[0]), std::string(f[1]), std::string(f[2]), 0.0};
    auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), row.value);
    if (ec != std::errc() || ptr != f[3].data() + f[3].size()) {
      throw Error("line " + std::to_string(line_no) + ": bad number '" + std::string(f[3]) + "'");
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_scored_triples(std::span<const ScoredTriple> rows) {
  std::string out;
  for (const auto& r : rows) out += r.head + '\t' + r.rel + '\t' + r.tail + '\t' + fmt(r.value) + '\n';
  return out;
}

}  // namespace grail
