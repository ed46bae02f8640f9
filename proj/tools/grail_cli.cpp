#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "commands.hpp"
#include "grail/error.hpp"
#include "grail/run_config.hpp"

using namespace grail::cli;

namespace {

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run config file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--threads", c.threads, "override the config thread count");
  cmd->footer(grail::RunConfig::help_text());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraIL: inductive link prediction by subgraph reasoning"};
  app.require_subcommand(1);
  app.footer(grail::RunConfig::help_text());

  SplitArgs split;
  auto* s = app.add_subcommand("split", "sample a disjoint-entity train / ind-test pair and carve valid/test edges");
  s->add_option("--input", split.input, "triple file to sample from")->required();
  s->add_option("--out-dir", split.out_dir, "output directory")->required();
  add_common(s, split.common);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model and write the best checkpoint");
  t->add_option("--train", tr.train, "training graph triples")->required();
  t->add_option("--valid", tr.valid, "validation triples")->required();
  t->add_option("--out", tr.out, "best checkpoint path")->required();
  t->add_option("--last", tr.last, "resumable checkpoint path (default <out>.last)");
  t->add_option("--loss-log", tr.loss_log, "CSV of epoch,loss,val_auc_pr (default <out>.loss.csv)");
  t->add_option("--from-checkpoint", tr.from_checkpoint, "resume from a resumable checkpoint");
  add_common(t, tr.common);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "AUC-PR and Hits@10 on test links of an unseen graph");
  e->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  e->add_option("--graph", ev.graph, "message-passing graph triples")->required();
  e->add_option("--test", ev.test, "test triples")->required();
  e->add_option("--out-dir", ev.out_dir, "output directory")->required();
  add_common(e, ev.common);

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "check hand-built rule models against the path-rule oracle");
  v->add_option("--trials", ver.trials, "random graph/rule trials")->capture_default_str();
  v->add_option("--max-rule-len", ver.max_rule_len, "longest rule body (1..3)")->capture_default_str();
  v->add_option("--seed", ver.seed, "seed")->capture_default_str();
  v->add_option("--threads", ver.threads, "worker threads")->capture_default_str();
  v->add_option("--out", ver.out, "report file");

  EnsembleArgs en;
  auto* n = app.add_subcommand("ensemble", "late fusion of per-triple score files");
  n->add_option("--scores", en.scores, "score files (head, rel, tail, score)")->required()->expected(2, -1);
  n->add_option("--valid-labels", en.valid_labels, "labeled triples (head, rel, tail, 0/1)")->required();
  n->add_option("--out", en.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (*s) return run_split(split);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*v) return run_verify(ver);
    if (*n) return run_ensemble(en);
  } catch (const grail::ConfigError& ex) {
    std::fprintf(stderr, "[grail] config error: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "[grail] error: %s\n", ex.what());
    return 1;
  }
  return 2;
}
