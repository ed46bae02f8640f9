#include "grail/run_config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "grail/error.hpp"
#include "grail/kg.hpp"
#include "grail/rng.hpp"

namespace grail {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* want) {
  throw ConfigError("config: " + std::string(key) + " = '" + std::string(value) + "' is not " + want);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v, const char* want) {
  T x{};
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, want);
  return x;
}

int to_int(std::string_view k, std::string_view v) { return parse_number<int>(k, v, "an integer"); }
double to_double(std::string_view k, std::string_view v) { return parse_number<double>(k, v, "a number"); }
std::uint64_t to_u64(std::string_view k, std::string_view v) {
  return parse_number<std::uint64_t>(k, v, "a non-negative integer");
}
bool to_bool(std::string_view k, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(k, v, "a boolean (true/false)");
}

std::string fmt(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}
std::string fmt(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* name;
  const char* doc;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(key, member, doc) \
  Field{key, doc, [](RunConfig& c, std::string_view v) { c.member = to_int(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define REAL_FIELD(key, member, doc) \
  Field{key, doc, [](RunConfig& c, std::string_view v) { c.member = to_double(key, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}
#define BOOL_FIELD(key, member, doc) \
  Field{key, doc, [](RunConfig& c, std::string_view v) { c.member = to_bool(key, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"seed", "master seed; split, train and eval use derived streams",
            [](RunConfig& c, std::string_view v) { c.seed = to_u64("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      INT_FIELD("threads", threads, "worker threads (1 is the reference path)"),
      Field{"features", "optional entity feature file (entity<TAB>f1,f2,...)",
            [](RunConfig& c, std::string_view v) { c.features = std::string(v); },
            [](const RunConfig& c) { return c.features; }},
      INT_FIELD("gnn.num_layers", gnn.num_layers, "message-passing layers"),
      INT_FIELD("gnn.hidden_dim", gnn.hidden_dim, "node state width"),
      INT_FIELD("gnn.num_bases", gnn.num_bases, "shared basis matrices per layer"),
      INT_FIELD("gnn.attn_hidden_dim", gnn.attn_hidden_dim, "attention MLP width (0 = hidden_dim)"),
      BOOL_FIELD("gnn.attention", gnn.attention_enabled, "edge attention gates"),
      BOOL_FIELD("gnn.jk", gnn.jk_enabled, "score from all layers instead of the last"),
      REAL_FIELD("gnn.edge_dropout", gnn.edge_dropout_rate, "edge dropout rate during training"),
      BOOL_FIELD("gnn.aggregate_in_neighbors", gnn.aggregate_in_neighbors,
                 "aggregate over in-neighbors instead of out-neighbors"),
      REAL_FIELD("train.margin", train.margin, "hinge loss margin"),
      REAL_FIELD("train.lr", train.lr, "Adam learning rate"),
      REAL_FIELD("train.l2", train.l2, "L2 penalty on all parameters"),
      REAL_FIELD("train.clip_norm", train.clip_norm, "global gradient norm cap"),
      INT_FIELD("train.epochs", train.epochs, "training epochs"),
      INT_FIELD("train.eval_every", train.eval_every, "validate every N epochs"),
      INT_FIELD("train.batch_size", train.batch_size, "positives per optimizer step"),
      INT_FIELD("train.neg_per_pos", train.neg_per_pos, "negatives per positive"),
      INT_FIELD("train.hops", train.hops, "subgraph radius k"),
      Field{"train.mode", "subgraph extraction: enclosing | full_khop",
            [](RunConfig& c, std::string_view v) {
              if (v == "enclosing") c.train.mode = ExtractionMode::enclosing;
              else if (v == "full_khop") c.train.mode = ExtractionMode::full_khop;
              else bad("train.mode", v, "enclosing or full_khop");
            },
            [](const RunConfig& c) {
              return std::string(c.train.mode == ExtractionMode::enclosing ? "enclosing" : "full_khop");
            }},
      Field{"train.labels", "node labels: double_radius | constant",
            [](RunConfig& c, std::string_view v) {
              if (v == "double_radius") c.train.labels = LabelScheme::double_radius;
              else if (v == "constant") c.train.labels = LabelScheme::constant;
              else bad("train.labels", v, "double_radius or constant");
            },
            [](const RunConfig& c) {
              return std::string(c.train.labels == LabelScheme::double_radius ? "double_radius" : "constant");
            }},
      BOOL_FIELD("train.cache_subgraphs", train.cache_subgraphs, "memoize positive subgraphs"),
      INT_FIELD("split.train_roots", split_train.num_roots, "roots per sampling round (train graph)"),
      INT_FIELD("split.train_hops", split_train.hops, "BFS depth around roots (train graph)"),
      INT_FIELD("split.train_max_new_per_hop", split_train.max_new_per_hop,
                "new neighbors kept per frontier node (train graph)"),
      INT_FIELD("split.train_target_edges", split_train.target_edges, "approximate edge count (train graph)"),
      INT_FIELD("split.test_roots", split_test.num_roots, "roots per sampling round (test graph)"),
      INT_FIELD("split.test_hops", split_test.hops, "BFS depth around roots (test graph)"),
      INT_FIELD("split.test_max_new_per_hop", split_test.max_new_per_hop,
                "new neighbors kept per frontier node (test graph)"),
      INT_FIELD("split.test_target_edges", split_test.target_edges, "approximate edge count (test graph)"),
      REAL_FIELD("split.valid_fraction", valid_fraction, "train edges held out for validation"),
      REAL_FIELD("split.test_fraction", test_fraction, "test-graph edges held out as test links"),
      INT_FIELD("eval.num_negatives", eval_negatives, "corruptions per test triple for Hits@10"),
  };
  return f;
}

#undef INT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

}  // namespace

RunConfig::RunConfig() {
  split_train = SamplerConfig{100, 3, 50, 1, 0};
  split_test = SamplerConfig{50, 3, 50, 1, 0};
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "' (see --help for the list)");
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
  if (!(c.valid_fraction > 0.0 && c.valid_fraction < 1.0) || !(c.test_fraction > 0.0 && c.test_fraction < 1.0)) {
    throw ConfigError("config: split fractions must lie in (0, 1)");
  }
  if (c.eval_negatives < 1) throw ConfigError("config: eval.num_negatives must be >= 1");
  c.train_config().validate();
  c.split_train.validate();
  c.split_test.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.name) + " = " + f.get(*this) + "\n";
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, "train");
  t.threads = threads;
  return t;
}

SamplerConfig RunConfig::train_sampler() const {
  SamplerConfig s = split_train;
  s.seed = split_seed();
  return s;
}

SamplerConfig RunConfig::test_sampler() const {
  SamplerConfig s = split_test;
  s.seed = split_seed();
  return s;
}

std::uint64_t RunConfig::eval_seed() const { return derive_seed(seed, "eval"); }
std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "split"); }

std::vector<RunConfig::Key> RunConfig::keys() {
  const RunConfig defaults;
  std::vector<Key> out;
  for (const auto& f : fields()) out.push_back({f.name, f.get(defaults), f.doc});
  return out;
}

std::string RunConfig::help_text() {
  std::ostringstream os;
  os << "Config keys (key = value, one per line; '#' starts a comment):\n";
  for (const auto& k : keys()) {
    os << "  " << k.name << " = " << (k.default_value.empty() ? "\"\"" : k.default_value) << "\n      " << k.doc
       << "\n";
  }
  return os.str();
}

}  // namespace grail
