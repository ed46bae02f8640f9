#include <bit>
#include <charconv>
#include <cstring>
#include <map>

#include "grail/error.hpp"
#include "grail/trainer.hpp"

namespace grail {

namespace {

constexpr std::string_view kMagic = "GRAILCK1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw Error("checkpoint: truncated file");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

std::string fmt(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

const char* mode_name(ExtractionMode m) { return m == ExtractionMode::enclosing ? "enclosing" : "full_khop"; }
const char* label_name(LabelScheme s) { return s == LabelScheme::double_radius ? "double_radius" : "constant"; }

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  put<std::uint8_t>(out, 2);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
  for (double x : t.data) put<double>(out, x);
}

class Config {
 public:
  explicit Config(std::string_view text) {
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      auto line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw Error("checkpoint: malformed config line '" + std::string(line) + "'");
      kv_[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
    }
  }
  bool has(const std::string& k) const { return kv_.count(k) > 0; }
  const std::string& str(const std::string& k) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) throw Error("checkpoint: missing config key '" + k + "'");
    return it->second;
  }
  double num(const std::string& k) const {
    const auto& s = str(k);
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error("checkpoint: bad number for '" + k + "'");
    return v;
  }
  std::int64_t integer(const std::string& k) const {
    const auto& s = str(k);
    std::int64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error("checkpoint: bad integer for '" + k + "'");
    return v;
  }
  std::uint64_t uinteger(const std::string& k) const {
    const auto& s = str(k);
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error("checkpoint: bad integer for '" + k + "'");
    return v;
  }
  bool flag(const std::string& k) const { return integer(k) != 0; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, t] : ck.params.named()) tensors.emplace_back(name, t);
  if (ck.state) {
    const auto& st = *ck.state;
    for (const auto& [name, t] : st.best_params.named()) tensors.emplace_back("best." + name, t);
    auto names = ck.params.named();
    if (!st.adam.m.empty()) {
      if (st.adam.m.size() != names.size() || st.adam.v.size() != names.size()) {
        throw Error("checkpoint: optimizer state does not match parameters");
      }
      for (std::size_t i = 0; i < names.size(); ++i) tensors.emplace_back("adam.m." + names[i].first, &st.adam.m[i]);
      for (std::size_t i = 0; i < names.size(); ++i) tensors.emplace_back("adam.v." + names[i].first, &st.adam.v[i]);
    }
  }

  std::string out(kMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) put_tensor(out, name, *t);

  const auto& g = ck.gnn;
  const auto& tr = ck.train;
  std::string cfg;
  auto kv = [&](const std::string& k, const std::string& v) { cfg += k + "=" + v + "\n"; };
  kv("gnn.num_layers", std::to_string(g.num_layers));
  kv("gnn.hidden_dim", std::to_string(g.hidden_dim));
  kv("gnn.num_bases", std::to_string(g.num_bases));
  kv("gnn.input_dim", std::to_string(g.input_dim));
  kv("gnn.attn_hidden_dim", std::to_string(g.attn_hidden_dim));
  kv("gnn.attention_enabled", std::to_string(int(g.attention_enabled)));
  kv("gnn.jk_enabled", std::to_string(int(g.jk_enabled)));
  kv("gnn.edge_dropout_rate", fmt(g.edge_dropout_rate));
  kv("gnn.aggregate_in_neighbors", std::to_string(int(g.aggregate_in_neighbors)));
  kv("gnn.tail_readout", std::to_string(int(g.tail_readout)));
  kv("gnn.attention_floor", fmt(g.attention_floor));
  kv("train.margin", fmt(tr.margin));
  kv("train.lr", fmt(tr.lr));
  kv("train.l2", fmt(tr.l2));
  kv("train.clip_norm", fmt(tr.clip_norm));
  kv("train.epochs", std::to_string(tr.epochs));
  kv("train.eval_every", std::to_string(tr.eval_every));
  kv("train.batch_size", std::to_string(tr.batch_size));
  kv("train.neg_per_pos", std::to_string(tr.neg_per_pos));
  kv("train.hops", std::to_string(tr.hops));
  kv("train.seed", std::to_string(tr.seed));
  kv("train.mode", mode_name(tr.mode));
  kv("train.labels", label_name(tr.labels));
  kv("train.threads", std::to_string(tr.threads));
  kv("train.cache_subgraphs", std::to_string(int(tr.cache_subgraphs)));
  kv("epoch", std::to_string(ck.epoch));
  kv("val_auc_pr", fmt(ck.val_auc_pr));
  kv("relations", std::to_string(ck.relations.size()));
  for (std::size_t i = 0; i < ck.relations.size(); ++i) {
    if (ck.relations[i].find('\n') != std::string::npos) throw Error("checkpoint: relation name contains a newline");
    kv("relation." + std::to_string(i), ck.relations[i]);
  }
  if (ck.state) {
    kv("state", "1");
    kv("adam.step", std::to_string(ck.state->adam.step));
    kv("best_val_auc_pr", fmt(ck.state->best_val_auc_pr));
    kv("best_epoch", std::to_string(ck.state->best_epoch));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) throw Error("checkpoint: bad magic");
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(r.bytes(len));
    if (r.get<std::uint8_t>() != 2) throw Error("checkpoint: tensor '" + name + "' is not rank 2");
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    Tensor t(rows, cols);
    for (double& x : t.data) x = r.get<double>();
    if (!tensors.emplace(name, std::move(t)).second) throw Error("checkpoint: duplicate tensor '" + name + "'");
  }
  const auto cfg_len = r.get<std::uint32_t>();
  Config c(r.bytes(cfg_len));
  if (!r.done()) throw Error("checkpoint: trailing bytes");

  Checkpoint ck;
  auto& g = ck.gnn;
  g.num_layers = static_cast<int>(c.integer("gnn.num_layers"));
  g.hidden_dim = static_cast<int>(c.integer("gnn.hidden_dim"));
  g.num_bases = static_cast<int>(c.integer("gnn.num_bases"));
  g.input_dim = static_cast<int>(c.integer("gnn.input_dim"));
  g.attn_hidden_dim = static_cast<int>(c.integer("gnn.attn_hidden_dim"));
  g.attention_enabled = c.flag("gnn.attention_enabled");
  g.jk_enabled = c.flag("gnn.jk_enabled");
  g.edge_dropout_rate = c.num("gnn.edge_dropout_rate");
  g.aggregate_in_neighbors = c.flag("gnn.aggregate_in_neighbors");
  g.tail_readout = c.flag("gnn.tail_readout");
  g.attention_floor = c.num("gnn.attention_floor");
  auto& tr = ck.train;
  tr.margin = c.num("train.margin");
  tr.lr = c.num("train.lr");
  tr.l2 = c.num("train.l2");
  tr.clip_norm = c.num("train.clip_norm");
  tr.epochs = static_cast<int>(c.integer("train.epochs"));
  tr.eval_every = static_cast<int>(c.integer("train.eval_every"));
  tr.batch_size = static_cast<int>(c.integer("train.batch_size"));
  tr.neg_per_pos = static_cast<int>(c.integer("train.neg_per_pos"));
  tr.hops = static_cast<int>(c.integer("train.hops"));
  tr.seed = c.uinteger("train.seed");
  const auto& mode = c.str("train.mode");
  if (mode == "enclosing") tr.mode = ExtractionMode::enclosing;
  else if (mode == "full_khop") tr.mode = ExtractionMode::full_khop;
  else throw Error("checkpoint: unknown extraction mode '" + mode + "'");
  const auto& labels = c.str("train.labels");
  if (labels == "double_radius") tr.labels = LabelScheme::double_radius;
  else if (labels == "constant") tr.labels = LabelScheme::constant;
  else throw Error("checkpoint: unknown label scheme '" + labels + "'");
  tr.threads = static_cast<int>(c.integer("train.threads"));
  tr.cache_subgraphs = c.flag("train.cache_subgraphs");
  ck.epoch = static_cast<int>(c.integer("epoch"));
  ck.val_auc_pr = c.num("val_auc_pr");
  const auto nrel = c.integer("relations");
  for (std::int64_t i = 0; i < nrel; ++i) ck.relations.push_back(c.str("relation." + std::to_string(i)));

  const std::size_t R = ck.relations.size();
  g.validate(R);
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("checkpoint: missing tensor '" + name + "'");
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  auto fill = [&](GnnParams& p, const std::string& prefix) {
    p.layers.resize(static_cast<std::size_t>(g.num_layers));
    for (auto& l : p.layers) l.bases.resize(static_cast<std::size_t>(g.num_bases));
    for (auto& [name, t] : p.named()) *t = take(prefix + name);
    validate_params(p, g, R);
  };
  fill(ck.params, "");
  if (c.has("state")) {
    TrainingState st;
    fill(st.best_params, "best.");
    st.adam.step = c.integer("adam.step");
    st.best_val_auc_pr = c.num("best_val_auc_pr");
    st.best_epoch = static_cast<int>(c.integer("best_epoch"));
    if (st.adam.step > 0) {
      for (const auto& [name, t] : ck.params.named()) {
        Tensor m = take("adam.m." + name);
        Tensor v = take("adam.v." + name);
        if (m.rows != t->rows || m.cols != t->cols || v.rows != t->rows || v.cols != t->cols) {
          throw Error("checkpoint: optimizer moment shape mismatch for '" + name + "'");
        }
        st.adam.m.push_back(std::move(m));
        st.adam.v.push_back(std::move(v));
      }
    }
    ck.state = std::move(st);
  }
  if (!tensors.empty()) throw Error("checkpoint: unexpected tensor '" + tensors.begin()->first + "'");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_text_file(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text_file(path)); }

}  // namespace grail
