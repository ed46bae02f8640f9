#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace grail::cli {

struct Common {
  std::string config;  // optional run config file
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

struct SplitArgs {
  Common common;
  std::string input;
  std::string out_dir;
};

struct TrainArgs {
  Common common;
  std::string train;
  std::string valid;
  std::string out;
  std::string last;  // resumable checkpoint; defaults to <out>.last
  std::string loss_log;  // defaults to <out>.loss.csv
  std::string from_checkpoint;
};

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string graph;
  std::string test;
  std::string out_dir;
};

struct VerifyArgs {
  int trials = 1000;
  int max_rule_len = 3;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

struct EnsembleArgs {
  std::vector<std::string> scores;
  std::string valid_labels;
  std::string out_dir;
};

int run_split(const SplitArgs& a);
int run_train(const TrainArgs& a);
int run_eval(const EvalArgs& a);
int run_verify(const VerifyArgs& a);
int run_ensemble(const EnsembleArgs& a);

}  // namespace grail::cli
