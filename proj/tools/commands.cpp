#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "grail/benchgen.hpp"
#include "grail/error.hpp"
#include "grail/evaluator.hpp"
#include "grail/gnn.hpp"
#include "grail/kg.hpp"
#include "grail/logic.hpp"
#include "grail/rng.hpp"
#include "grail/run_config.hpp"
#include "grail/trainer.hpp"

namespace fs = std::filesystem;

namespace grail::cli {

namespace {

template <typename... Args>
void log(const char* fmt, Args... args) {
  std::fprintf(stderr, "[grail] ");
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fputc('\n', stderr);
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) {
    if (*c.threads < 1) throw ConfigError("--threads must be >= 1");
    cfg.threads = *c.threads;
  }
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory " + dir + ": " + ec.message());
}

std::string triples_text(const KnowledgeGraph& g, std::span<const Triple> ts) {
  std::string out;
  for (const auto& t : ts) {
    out += g.entities().name(t.head) + "\t" + g.relations().name(t.rel) + "\t" + g.entities().name(t.tail) + "\n";
  }
  return out;
}

std::optional<NodeFeatureTable> load_features(const RunConfig& cfg) {
  if (cfg.features.empty()) return std::nullopt;
  return NodeFeatureTable::parse(read_text_file(cfg.features));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int run_split(const SplitArgs& a) {
  const RunConfig cfg = load_config(a.common);
  const KnowledgeGraph g = load_triples_file(a.input);
  log("loaded %zu triples, %zu entities, %zu relations (%zu duplicates dropped)", g.num_triples(),
      g.num_entities(), g.num_relations(), g.duplicates_dropped());

  const InductivePair pair = sample_inductive_pair(g, cfg.train_sampler(), cfg.test_sampler());
  check_inductive_pair(pair);

  Rng valid_rng = make_stream(cfg.split_seed(), "valid-edges");
  const EdgeSplit train_split = split_test_edges(pair.train, cfg.valid_fraction, valid_rng);
  Rng test_rng = make_stream(cfg.split_seed(), "test-edges");
  const EdgeSplit test_split = split_test_edges(pair.ind_test, cfg.test_fraction, test_rng);

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  write_text_file(dir / "train.txt", train_split.message.to_text());
  write_text_file(dir / "valid.txt", triples_text(pair.train, train_split.test_edges));
  write_text_file(dir / "ind_test_graph.txt", test_split.message.to_text());
  write_text_file(dir / "test.txt", triples_text(pair.ind_test, test_split.test_edges));

  std::ostringstream stats;
  stats << "graph\trelations\tnodes\tlinks\n";
  for (auto [name, gr] : {std::pair{"train", &pair.train}, std::pair{"ind_test", &pair.ind_test}}) {
    const GraphStats s = graph_stats(*gr);
    stats << name << "\t" << s.relations << "\t" << s.nodes << "\t" << s.links << "\n";
    log("%s: %zu relations, %zu nodes, %zu links", name, s.relations, s.nodes, s.links);
  }
  write_text_file(dir / "stats.tsv", stats.str());
  log("valid edges: %zu, test edges: %zu", train_split.test_edges.size(), test_split.test_edges.size());
  return 0;
}

int run_train(const TrainArgs& a) {
  const RunConfig cfg = load_config(a.common);
  const auto t0 = std::chrono::steady_clock::now();

  std::optional<Checkpoint> resume;
  if (!a.from_checkpoint.empty()) {
    resume = load_checkpoint(a.from_checkpoint);
    if (!resume->state) throw ConfigError(a.from_checkpoint + " is not a resumable checkpoint");
  }
  std::optional<Vocabulary> seed_relations;
  if (resume) seed_relations = Vocabulary(resume->relations);
  const KnowledgeGraph g = load_triples_file(a.train, seed_relations ? &*seed_relations : nullptr);
  if (resume && g.num_relations() != resume->relations.size()) {
    throw Error("training graph has relations the checkpoint does not know");
  }
  const std::vector<Triple> valid = resolve_triples(read_text_file(a.valid), g);
  log("train: %zu triples, %zu entities, %zu relations; valid: %zu triples", g.num_triples(), g.num_entities(),
      g.num_relations(), valid.size());

  const auto features = load_features(cfg);
  AuxFeatures aux{features ? &*features : nullptr, &g.entities()};

  const std::string loss_path = a.loss_log.empty() ? a.out + ".loss.csv" : a.loss_log;
  std::string loss_csv = "epoch,loss,val_auc_pr\n";
  if (resume && fs::exists(loss_path)) loss_csv = read_text_file(loss_path);

  TrainHooks hooks;
  hooks.resume = resume ? &*resume : nullptr;
  hooks.aux = features ? &aux : nullptr;
  hooks.on_epoch = [&](const EpochLog& e) {
    char line[128];
    if (e.val_auc_pr) {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", e.epoch, e.loss, *e.val_auc_pr);
      log("epoch %d loss %.6f val_auc_pr %.4f (%.1fs)", e.epoch, e.loss, *e.val_auc_pr, seconds_since(t0));
    } else {
      std::snprintf(line, sizeof line, "%d,%.17g,\n", e.epoch, e.loss);
      log("epoch %d loss %.6f (%.1fs)", e.epoch, e.loss, seconds_since(t0));
    }
    loss_csv += line;
    write_text_file(loss_path, loss_csv);
  };

  const TrainResult r = train(g, valid, cfg.train_config(), cfg.gnn, hooks);
  save_checkpoint(r.best, a.out);
  save_checkpoint(r.last, a.last.empty() ? a.out + ".last" : a.last);
  write_text_file(loss_path, loss_csv);
  log("best epoch %d, val_auc_pr %.4f; wrote %s", r.best.epoch, r.best.val_auc_pr, a.out.c_str());
  return 0;
}

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = load_config(a.common);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Vocabulary model_relations(ck.relations);
  const KnowledgeGraph g = load_triples_file(a.graph, &model_relations);
  if (g.num_relations() != model_relations.size()) {
    std::string unknown;
    for (std::size_t r = model_relations.size(); r < g.num_relations(); ++r) {
      unknown += (unknown.empty() ? "" : ", ") + g.relations().name(static_cast<RelationId>(r));
    }
    throw Error("graph uses relations unknown to the model: " + unknown);
  }
  const std::vector<Triple> test = resolve_triples(read_text_file(a.test), g);

  const auto features = load_features(cfg);
  AuxFeatures aux{features ? &*features : nullptr, &g.entities()};
  SubgraphRecipe recipe{ck.train.hops, ck.train.mode, ck.train.labels, features ? &aux : nullptr};
  if (static_cast<int>(recipe.feature_dim()) != ck.gnn.input_dim) {
    throw ConfigError("node feature width " + std::to_string(recipe.feature_dim()) +
                      " does not match the checkpoint input width " + std::to_string(ck.gnn.input_dim));
  }
  GraphScorer scorer = [&](const KnowledgeGraph& mg, const Triple& t) {
    return score_value(ck.params, ck.gnn, recipe.build(mg, t));
  };
  EvalConfig ec;
  ec.num_negatives = cfg.eval_negatives;
  ec.seed = cfg.eval_seed();
  ec.model_relations = model_relations.size();
  ec.threads = cfg.threads;
  const auto t0 = std::chrono::steady_clock::now();
  const EvalReport rep = evaluate(scorer, g, test, ec);

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  write_text_file(dir / "report.txt", rep.to_key_values());
  write_text_file(dir / "triplets.csv", rep.to_csv(g));
  std::vector<ScoredTriple> scores;
  for (const auto& rec : rep.records) {
    scores.push_back({g.entities().name(rec.triple.head), g.relations().name(rec.triple.rel),
                      g.entities().name(rec.triple.tail), rec.score});
  }
  write_text_file(dir / "scores.tsv", format_scored_triples(scores));
  log("auc_pr %.4f hits@10 %.4f over %zu test triples (%.1fs)", rep.auc_pr, rep.hits_at_10, test.size(),
      seconds_since(t0));
  return 0;
}

int run_verify(const VerifyArgs& a) {
  VerifyOptions o;
  o.trials = a.trials;
  o.max_rule_len = a.max_rule_len;
  o.seed = a.seed;
  o.threads = a.threads;
  if (o.threads < 1) throw ConfigError("--threads must be >= 1");
  const VerifyReport rep = verify_theorem1(o);
  if (!a.out.empty()) write_text_file(a.out, rep.to_text());
  log("%d trials, %zu/%zu pair checks agree, %zu counterexamples; rule sets: %zu checks, %zu failures, max rel "
      "error %.3g",
      rep.trials, rep.agreements, rep.checks, rep.disagreements.size(), rep.set_checks, rep.set_failures,
      rep.set_max_rel_error);
  if (!rep.passed()) {
    log("verification failed%s", a.out.empty() ? " (use --out to save the counterexamples)" : "");
    return 1;
  }
  return 0;
}

int run_ensemble(const EnsembleArgs& a) {
  if (a.scores.size() < 2) throw ConfigError("ensemble needs at least two --scores files");
  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<std::map<Key, double>> tables;
  for (const auto& path : a.scores) {
    std::map<Key, double> t;
    for (const auto& s : parse_scored_triples(read_text_file(path))) t[{s.head, s.rel, s.tail}] = s.value;
    tables.push_back(std::move(t));
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& s : parse_scored_triples(read_text_file(a.valid_labels))) {
    const Key k{s.head, s.rel, s.tail};
    std::vector<double> row;
    for (std::size_t m = 0; m < tables.size(); ++m) {
      auto it = tables[m].find(k);
      if (it == tables[m].end()) {
        throw Error(a.scores[m] + " has no score for labeled triple " + s.head + " " + s.rel + " " + s.tail);
      }
      row.push_back(it->second);
    }
    if (s.value != 0.0 && s.value != 1.0) throw Error("labels must be 0 or 1");
    rows.push_back(std::move(row));
    labels.push_back(static_cast<int>(s.value));
  }

  auto auc_of = [&](auto&& score_row) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < rows.size(); ++i) (labels[i] ? pos : neg).push_back(score_row(rows[i]));
    return auc_pr(pos, neg);
  };
  auto fused_auc = [&](const std::vector<std::size_t>& cols) {
    std::vector<std::vector<double>> sub;
    for (const auto& r : rows) {
      std::vector<double> x;
      for (std::size_t c : cols) x.push_back(r[c]);
      sub.push_back(std::move(x));
    }
    const LateFusionModel m = fit_late_fusion(sub, labels);
    return std::pair{m, auc_of([&](const std::vector<double>& r) {
                       std::vector<double> x;
                       for (std::size_t c : cols) x.push_back(r[c]);
                       return m.predict(x);
                     })};
  };

  std::vector<double> single;
  for (std::size_t m = 0; m < tables.size(); ++m) single.push_back(auc_of([&](const auto& r) { return r[m]; }));
  std::ostringstream gains;
  gains << "method_1\tmethod_2\tauc_pr_1\tauc_pr_2\tauc_pr_fused\tgain\n";
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (std::size_t j = i + 1; j < tables.size(); ++j) {
      const double p12 = fused_auc({i, j}).second;
      gains << a.scores[i] << "\t" << a.scores[j] << "\t" << single[i] << "\t" << single[j] << "\t" << p12 << "\t"
            << ensemble_gain(single[i], single[j], p12) << "\n";
    }
  }

  std::vector<std::size_t> all(tables.size());
  for (std::size_t m = 0; m < all.size(); ++m) all[m] = m;
  const auto [model, all_auc] = fused_auc(all);
  std::vector<ScoredTriple> fused;
  for (const auto& [k, v0] : tables[0]) {
    std::vector<double> x{v0};
    bool complete = true;
    for (std::size_t m = 1; m < tables.size() && complete; ++m) {
      auto it = tables[m].find(k);
      if (it == tables[m].end()) complete = false;
      else x.push_back(it->second);
    }
    if (complete) fused.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), model.predict(x)});
  }

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  write_text_file(dir / "fused_scores.tsv", format_scored_triples(fused));
  write_text_file(dir / "gains.tsv", gains.str());
  log("fused %zu methods on %zu labeled triples: auc_pr %.4f; wrote %zu fused scores", tables.size(), rows.size(),
      all_auc, fused.size());
  return 0;
}

}  // namespace grail::cli
