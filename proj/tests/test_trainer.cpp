#include <cmath>
#include <map>

#include "doctest.h"
#include "grail/error.hpp"
#include "grail/evaluator.hpp"
#include "grail/rng.hpp"
#include "grail/synthetic.hpp"
#include "grail/trainer.hpp"
#include "oracles.hpp"

using namespace grail;

namespace {

KnowledgeGraph toy_graph() {
  RuleGraphConfig rc;
  rc.num_entities = 30;
  rc.body_edges = 30;
  rc.distractor_edges = 20;
  rc.seed = 4;
  return generate_rule_graph(rc).graph;
}

TrainConfig toy_train() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.eval_every = 1;
  cfg.hops = 2;
  cfg.seed = 9;
  return cfg;
}

GnnConfig toy_gnn() {
  GnnConfig g;
  g.num_layers = 2;
  g.hidden_dim = 4;
  g.num_bases = 2;
  return g;
}

std::vector<Triple> first_triples(const KnowledgeGraph& g, std::size_t n) {
  std::vector<Triple> out;
  for (const auto& t : g.triples()) {
    if (out.size() == n) break;
    if (t.head != t.tail) out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("negative sampling corrupts one side with a uniform entity") {
  const auto g = oracle::make_graph(6, 2, {{0, 1, 1}});
  const Triple pos{0, 1, 1};
  Rng rng(5);
  std::map<Triple, int> counts;
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const auto neg = sample_negative(g, pos, rng);
    CHECK(neg.rel == pos.rel);
    CHECK(neg != pos);
    CHECK(neg.head != neg.tail);
    CHECK((neg.head == pos.head) != (neg.tail == pos.tail));
    ++counts[neg];
  }
  // 4 head replacements and 4 tail replacements remain allowed.
  REQUIRE(counts.size() == 8);
  const double p = 1.0 / 8, mean = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& [t, c] : counts) CHECK(std::abs(c - mean) < 5 * sigma);

  const auto two = oracle::make_graph(2, 1, {{0, 0, 1}});
  CHECK_THROWS_AS(sample_negative(two, {0, 0, 1}, rng), Error);
  CHECK(sample_negative(two, {0, 0, 0}, rng) != Triple{0, 0, 0});
  CHECK_THROWS_AS(sample_negative(oracle::make_graph(1, 1, {}), {0, 0, 0}, rng), Error);
}

TEST_CASE("hinge loss") {
  CHECK(hinge_loss(5.0, 1.0, 10.0) == 6.0);
  CHECK(hinge_loss(20.0, 1.0, 10.0) == 0.0);
  CHECK(hinge_loss(0.0, 0.0, 10.0) == 10.0);
  CHECK(hinge_loss(1.0, 1.0, 0.0) == 0.0);
}

TEST_CASE("Adam first step moves each weight by lr against the gradient sign") {
  std::vector<Tensor> w{Tensor(1, 3, {1.0, 2.0, 3.0})};
  std::vector<Tensor*> ptrs{&w[0]};
  const std::vector<Tensor> g{Tensor(1, 3, {0.5, -2.0, 0.0})};
  AdamState st;
  adam_step(ptrs, g, st, {0.01});
  CHECK(w[0].data[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(w[0].data[1] == doctest::Approx(2.01).epsilon(1e-6));
  CHECK(w[0].data[2] == 3.0);
  CHECK(st.step == 1);
}

TEST_CASE("Adam on a quadratic follows the reference recurrence") {
  Tensor w(1, 1, 0.0);
  std::vector<Tensor*> ptrs{&w};
  AdamState st;
  double x = 0, m = 0, v = 0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    const std::vector<Tensor> g{Tensor::scalar(2 * (w.data[0] - 3))};
    adam_step(ptrs, g, st, {lr});
    const double gx = 2 * (x - 3);
    m = b1 * m + (1 - b1) * gx;
    v = b2 * v + (1 - b2) * gx * gx;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    REQUIRE(w.data[0] == doctest::Approx(x).epsilon(1e-12));
  }
  CHECK(std::abs(w.data[0] - 3) < std::abs(0 - 3));
}

TEST_CASE("Adam weight decay and non-finite gradients") {
  Tensor w(1, 1, 2.0);
  std::vector<Tensor*> ptrs{&w};
  AdamState st;
  adam_step(ptrs, std::vector<Tensor>{Tensor::scalar(0.0)}, st, {0.01, 0.9, 0.999, 1e-8, 0.1});
  CHECK(w.data[0] < 2.0);
  AdamState fresh;
  CHECK_THROWS_AS(adam_step(ptrs, std::vector<Tensor>{Tensor::scalar(std::nan(""))}, fresh, {}), Error);
}

TEST_CASE("gradient clipping") {
  std::vector<Tensor> g{Tensor(1, 2, {3.0, 0.0}), Tensor(1, 1, {4.0})};
  CHECK(clip_gradients(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0].data[0] == doctest::Approx(0.6));
  CHECK(g[1].data[0] == doctest::Approx(0.8));
  std::vector<Tensor> small{Tensor(1, 1, {0.5})};
  CHECK(clip_gradients(small, 1.0) == 0.5);
  CHECK(small[0].data[0] == 0.5);
}

TEST_CASE("example loss equals the hinge of independently scored subgraphs") {
  const auto g = toy_graph();
  auto gnn = toy_gnn();
  const auto cfg = toy_train();
  const SubgraphRecipe recipe{cfg.hops, cfg.mode, cfg.labels, nullptr};
  gnn.input_dim = static_cast<int>(recipe.feature_dim());
  Rng rng(1);
  const auto p = init_params(gnn, g.num_relations(), rng);
  for (const auto& pos : first_triples(g, 10)) {
    TrainingExample ex{pos, {sample_negative(g, pos, rng), sample_negative(g, pos, rng)}};
    double expect = 0;
    const double sp = score_value(p, gnn, recipe.build(g, pos));
    for (const auto& n : ex.negatives) expect += hinge_loss(sp, score_value(p, gnn, recipe.build(g, n)), cfg.margin);
    CHECK(example_loss(p, gnn, cfg, g, ex, recipe, nullptr, nullptr) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("a small gradient step lowers the example loss") {
  const auto g = toy_graph();
  auto gnn = toy_gnn();
  const auto cfg = toy_train();
  const SubgraphRecipe recipe{cfg.hops, cfg.mode, cfg.labels, nullptr};
  gnn.input_dim = static_cast<int>(recipe.feature_dim());
  Rng rng(2);
  const auto p = init_params(gnn, g.num_relations(), rng);
  int checked = 0;
  for (const auto& pos : first_triples(g, 10)) {
    TrainingExample ex{pos, {sample_negative(g, pos, rng)}};
    auto grads = p.zeros_like();
    const double before = example_loss(p, gnn, cfg, g, ex, recipe, nullptr, &grads);
    if (before == 0.0) continue;
    auto q = p;
    auto qs = q.named();
    auto gs = grads.named();
    for (std::size_t t = 0; t < qs.size(); ++t)
      for (std::size_t i = 0; i < qs[t].second->size(); ++i) qs[t].second->data[i] -= 1e-4 * gs[t].second->data[i];
    CHECK(example_loss(q, gnn, cfg, g, ex, recipe, nullptr, nullptr) < before);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("training is deterministic, thread-count independent, and leaves the graph alone") {
  const auto g = toy_graph();
  const auto before = g.to_text();
  const auto valid = first_triples(g, 5);
  auto cfg = toy_train();
  const auto a = train(g, valid, cfg, toy_gnn());
  const auto b = train(g, valid, cfg, toy_gnn());
  cfg.threads = 3;
  const auto c = train(g, valid, cfg, toy_gnn());
  CHECK(oracle::flatten(a.last.params) == oracle::flatten(b.last.params));
  CHECK(oracle::flatten(a.last.params) == oracle::flatten(c.last.params));
  REQUIRE(a.log.size() == 2);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == c.log[i].loss);
    CHECK(a.log[i].val_auc_pr == c.log[i].val_auc_pr);
  }
  CHECK(g.to_text() == before);
  auto other = toy_train();
  other.seed = 10;
  CHECK(oracle::flatten(train(g, valid, other, toy_gnn()).last.params) != oracle::flatten(a.last.params));
}

TEST_CASE("first-epoch loss sits near the margin when initial scores are small") {
  const auto g = toy_graph();
  auto cfg = toy_train();
  cfg.epochs = 1;
  cfg.lr = 1e-9;
  const auto r = train(g, {}, cfg, toy_gnn());
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].loss == doctest::Approx(cfg.margin).epsilon(0.25));
  CHECK(r.best.epoch == 1);
}

TEST_CASE("best checkpoint tracks the highest validation score") {
  const auto g = toy_graph();
  auto cfg = toy_train();
  cfg.epochs = 4;
  const auto r = train(g, first_triples(g, 6), cfg, toy_gnn());
  double best = -1;
  int best_epoch = 0;
  for (const auto& e : r.log) {
    REQUIRE(e.val_auc_pr);
    if (*e.val_auc_pr > best) {
      best = *e.val_auc_pr;
      best_epoch = e.epoch;
    }
  }
  CHECK(r.best.epoch == best_epoch);
  CHECK(r.best.val_auc_pr == best);
  CHECK(!r.best.state);
  REQUIRE(r.last.state);
  CHECK(r.last.state->best_epoch == best_epoch);
}

TEST_CASE("training errors") {
  const auto g = toy_graph();
  auto cfg = toy_train();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(g, {}, cfg, toy_gnn()), ConfigError);
  std::vector<Triple> loop{{0, 0, 0}};
  CHECK_THROWS_AS(train(g, loop, toy_train(), toy_gnn()), Error);
  std::vector<Triple> outside{{0, 99, 1}};
  CHECK_THROWS_AS(train(g, outside, toy_train(), toy_gnn()), Error);
  auto no_state = train(g, {}, toy_train(), toy_gnn()).best;
  TrainHooks hooks;
  hooks.resume = &no_state;
  CHECK_THROWS_AS(train(g, {}, toy_train(), toy_gnn(), hooks), ConfigError);
}

TEST_CASE("checkpoints round-trip byte for byte and reject damage") {
  const auto g = toy_graph();
  const auto r = train(g, first_triples(g, 4), toy_train(), toy_gnn());
  for (const auto* ck : {&r.best, &r.last}) {
    const auto bytes = serialize_checkpoint(*ck);
    const auto back = parse_checkpoint(bytes);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(oracle::flatten(back.params) == oracle::flatten(ck->params));
    CHECK(back.relations == ck->relations);
    CHECK(back.epoch == ck->epoch);
    CHECK(back.gnn.hidden_dim == ck->gnn.hidden_dim);
    CHECK(back.train.seed == ck->train.seed);
    CHECK(back.state.has_value() == ck->state.has_value());
  }
  const auto bytes = serialize_checkpoint(r.last);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad), Error);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() / 2)), Error);
  CHECK_THROWS_AS(parse_checkpoint(bytes + "z"), Error);
  CHECK_THROWS_AS(parse_checkpoint(""), Error);
}

TEST_CASE("resuming reproduces an uninterrupted run exactly") {
  const auto g = toy_graph();
  const auto valid = first_triples(g, 4);
  auto cfg = toy_train();
  cfg.epochs = 4;
  const auto straight = train(g, valid, cfg, toy_gnn());
  cfg.epochs = 2;
  const auto half = train(g, valid, cfg, toy_gnn());
  const auto reloaded = parse_checkpoint(serialize_checkpoint(half.last));
  cfg.epochs = 4;
  TrainHooks hooks;
  hooks.resume = &reloaded;
  const auto resumed = train(g, valid, cfg, toy_gnn(), hooks);
  CHECK(oracle::flatten(resumed.last.params) == oracle::flatten(straight.last.params));
  CHECK(oracle::flatten(resumed.best.params) == oracle::flatten(straight.best.params));
  REQUIRE(resumed.log.size() == 2);
  CHECK(resumed.log[1].loss == straight.log[3].loss);
  CHECK(resumed.last.epoch == 4);
}
