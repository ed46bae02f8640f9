#include "grail/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "grail/error.hpp"
#include "grail/rng.hpp"

namespace grail {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw Error("Tensor: " + std::to_string(data.size()) + " values for shape " + shape_string(r, c));
  }
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

namespace ad {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

std::size_t Value::rows() const { return tape_->value_of(id_).rows; }
std::size_t Value::cols() const { return tape_->value_of(id_).cols; }
std::span<const double> Value::data() const { return tape_->value_of(id_).data; }
const Tensor& Value::tensor() const { return tape_->value_of(id_); }
bool Value::requires_grad() const { return tape_->needs_grad(id_); }

std::span<const double> Value::grad() const {
  const auto& node = tape_->nodes_[id_];
  if (node.grad.empty()) {
    static thread_local std::vector<double> zeros;
    zeros.assign(node.value.size(), 0.0);
    return zeros;
  }
  return node.grad;
}

double Value::item() const {
  const auto& t = tensor();
  if (t.size() != 1) throw Error("item() on non-scalar " + shape_string(t.rows, t.cols));
  return t.data[0];
}

Value Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Value Tape::push(Tensor value, std::vector<std::uint32_t> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [&](std::uint32_t p) { return nodes_[p].requires_grad; });
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::vector<double>& Tape::grad_of(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::record_kinks(std::span<const double> inputs) {
  std::uint64_t h = kink_hash_;
  for (double x : inputs) {
    h ^= (x > 0.0) ? 0x9eU : 0x37U;
    h *= 0x100000001b3ULL;
  }
  kink_hash_ = h;
}

void Tape::backward(Value root) {
  if (root.tape_ != this) throw Error("backward: value belongs to another tape");
  const auto& rv = nodes_[root.id_].value;
  if (rv.size() != 1) throw Error("backward: root must be scalar, got " + shape_string(rv.rows, rv.cols));
  if (!nodes_[root.id_].requires_grad) return;
  // Interior gradients are recomputed per call; leaf gradients accumulate.
  for (std::uint32_t i = 0; i <= root.id_; ++i) {
    auto& n = nodes_[i];
    if (n.backward && !n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  grad_of(root.id_)[0] += 1.0;
  for (std::uint32_t i = root.id_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

namespace {

[[noreturn]] void shape_error(const char* prim, const Tensor& a, const Tensor& b) {
  throw Error(std::string(prim) + ": incompatible shapes " + shape_string(a.rows, a.cols) + " and " +
              shape_string(b.rows, b.cols));
}

Tape& same_tape(Value a, Value b, const char* prim) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw Error(std::string(prim) + ": operands live on different tapes");
  }
  return *a.tape();
}

void accumulate(std::vector<double>& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Value matmul(Value a, Value b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& x = a.tensor();
  const Tensor& y = b.tensor();
  if (x.cols != y.rows) shape_error("matmul", x, y);
  Tensor out(x.rows, y.cols);
  MutMap(out.data.data(), out.rows, out.cols).noalias() =
      ConstMap(x.data.data(), x.rows, x.cols) * ConstMap(y.data.data(), y.rows, y.cols);
  std::uint32_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::uint32_t self) {
    const Tensor& x = t.value_of(ia);
    const Tensor& y = t.value_of(ib);
    const auto& g = t.grad_of(self);
    ConstMap gm(g.data(), x.rows, y.cols);
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_of(ia);
      MutMap(ga.data(), x.rows, x.cols).noalias() += gm * ConstMap(y.data.data(), y.rows, y.cols).transpose();
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_of(ib);
      MutMap(gb.data(), y.rows, y.cols).noalias() += ConstMap(x.data.data(), x.rows, x.cols).transpose() * gm;
    }
  });
}

Value add(Value a, Value b) {
  Tape& tape = same_tape(a, b, "add");
  const Tensor& x = a.tensor();
  const Tensor& y = b.tensor();
  const bool row_broadcast = (y.rows == 1 && y.cols == x.cols && x.rows != 1);
  if (!row_broadcast && (x.rows != y.rows || x.cols != y.cols)) shape_error("add", x, y);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) += row_broadcast ? y(0, c) : y(r, c);
  }
  std::uint32_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), {ia, ib}, [ia, ib, row_broadcast](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    if (t.needs_grad(ia)) accumulate(t.grad_of(ia), g);
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_of(ib);
      if (!row_broadcast) {
        accumulate(gb, g);
      } else {
        const std::size_t cols = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
      }
    }
  });
}

Value mul(Value a, Value b) {
  Tape& tape = same_tape(a, b, "mul");
  const Tensor& x = a.tensor();
  const Tensor& y = b.tensor();
  const bool col_broadcast = (y.cols == 1 && y.rows == x.rows && x.cols != 1);
  if (!col_broadcast && (x.rows != y.rows || x.cols != y.cols)) shape_error("mul", x, y);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) *= col_broadcast ? y(r, 0) : y(r, c);
  }
  std::uint32_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), {ia, ib}, [ia, ib, col_broadcast](Tape& t, std::uint32_t self) {
    const Tensor& x = t.value_of(ia);
    const Tensor& y = t.value_of(ib);
    const auto& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_of(ia);
      for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
          ga[r * x.cols + c] += g[r * x.cols + c] * (col_broadcast ? y(r, 0) : y(r, c));
        }
      }
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_of(ib);
      for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
          double d = g[r * x.cols + c] * x(r, c);
          if (col_broadcast) {
            gb[r] += d;
          } else {
            gb[r * x.cols + c] += d;
          }
        }
      }
    }
  });
}

Value scale(Value a, double s) {
  Tensor out = a.tensor();
  for (auto& v : out.data) v *= s;
  std::uint32_t ia = a.id();
  return a.tape()->push(std::move(out), {ia}, [ia, s](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

namespace {

// Shared by relu and hinge: max(0, x) with subgradient 0 at the kink.
Value positive_part(Value a) {
  Tape& tape = *a.tape();
  const Tensor& x = a.tensor();
  tape.record_kinks(x.data);
  Tensor out = x;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  std::uint32_t ia = a.id();
  return tape.push(std::move(out), {ia}, [ia](Tape& t, std::uint32_t self) {
    const Tensor& x = t.value_of(ia);
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.data[i] > 0.0) ga[i] += g[i];
    }
  });
}

}  // namespace

Value relu(Value a) { return positive_part(a); }
Value hinge(Value a) { return positive_part(a); }

Value sigmoid(Value a) {
  Tensor out = a.tensor();
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  std::uint32_t ia = a.id();
  return a.tape()->push(std::move(out), {ia}, [ia](Tape& t, std::uint32_t self) {
    const Tensor& y = t.value_of(self);
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Value concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  Tape& tape = *parts[0].tape();
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw Error("concat_cols: operands live on different tapes");
    if (p.rows() != rows) shape_error("concat_cols", parts[0].tensor(), p.tensor());
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].tensor();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(r * x.cols), x.cols,
                  out.data.begin() + static_cast<std::ptrdiff_t>(r * cols + offsets[k]));
    }
  }
  auto parent_ids = ids;
  return tape.push(std::move(out), std::move(parent_ids),
                   [ids, offsets, rows, cols](Tape& t, std::uint32_t self) {
                     const auto& g = t.grad_of(self);
                     for (std::size_t k = 0; k < ids.size(); ++k) {
                       if (!t.needs_grad(ids[k])) continue;
                       auto& gk = t.grad_of(ids[k]);
                       const std::size_t w = t.value_of(ids[k]).cols;
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < w; ++c) gk[r * w + c] += g[r * cols + offsets[k] + c];
                       }
                     }
                   });
}

Value slice_cols(Value a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.tensor();
  if (begin > end || end > x.cols) {
    throw Error("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                ") outside " + shape_string(x.rows, x.cols));
  }
  const std::size_t w = end - begin;
  Tensor out(x.rows, w);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) out(r, c) = x(r, begin + c);
  }
  std::uint32_t ia = a.id();
  return a.tape()->push(std::move(out), {ia}, [ia, begin, w](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    const std::size_t cols = t.value_of(ia).cols;
    const std::size_t rows = g.size() / (w == 0 ? 1 : w);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
    }
  });
}

Value mean_rows(Value a) {
  const Tensor& x = a.tensor();
  if (x.rows == 0) throw Error("mean_rows: empty input " + shape_string(x.rows, x.cols));
  Tensor out(1, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) out(0, c) += x(r, c);
  }
  const double inv = 1.0 / static_cast<double>(x.rows);
  for (auto& v : out.data) v *= inv;
  std::uint32_t ia = a.id();
  return a.tape()->push(std::move(out), {ia}, [ia, inv](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    const std::size_t cols = g.size();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i % cols] * inv;
  });
}

Value sum(Value a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  std::uint32_t ia = a.id();
  return a.tape()->push(Tensor::scalar(s), {ia}, [ia](Tape& t, std::uint32_t self) {
    const double g = t.grad_of(self)[0];
    auto& ga = t.grad_of(ia);
    for (auto& v : ga) v += g;
  });
}

Value gather_rows(Value a, std::span<const std::uint32_t> index) {
  const Tensor& x = a.tensor();
  Tensor out(index.size(), x.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows) {
      throw Error("gather_rows: row " + std::to_string(index[i]) + " outside " + shape_string(x.rows, x.cols));
    }
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(index[i] * x.cols), x.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * x.cols));
  }
  std::uint32_t ia = a.id();
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return a.tape()->push(std::move(out), {ia}, [ia, idx = std::move(idx)](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    const std::size_t cols = t.value_of(ia).cols;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) ga[idx[i] * cols + c] += g[i * cols + c];
    }
  });
}

Value slice_rows(Value a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.tensor();
  if (begin > end || end > x.rows) {
    throw Error("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                ") outside " + shape_string(x.rows, x.cols));
  }
  std::vector<std::uint32_t> idx;
  for (std::size_t r = begin; r < end; ++r) idx.push_back(static_cast<std::uint32_t>(r));
  return gather_rows(a, idx);
}

Value scatter_add_rows(Value a, std::span<const std::uint32_t> index, std::size_t out_rows) {
  const Tensor& x = a.tensor();
  if (index.size() != x.rows) {
    throw Error("scatter_add_rows: " + std::to_string(index.size()) + " indices for input " +
                shape_string(x.rows, x.cols));
  }
  Tensor out(out_rows, x.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= out_rows) {
      throw Error("scatter_add_rows: target row " + std::to_string(index[i]) + " outside " +
                  shape_string(out_rows, x.cols));
    }
    for (std::size_t c = 0; c < x.cols; ++c) out(index[i], c) += x(i, c);
  }
  std::uint32_t ia = a.id();
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return a.tape()->push(std::move(out), {ia}, [ia, idx = std::move(idx)](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    const std::size_t cols = t.value_of(ia).cols;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) ga[i * cols + c] += g[idx[i] * cols + c];
    }
  });
}

Value mask_rows(Value a, std::span<const double> mask) {
  const Tensor& x = a.tensor();
  if (mask.size() != x.rows) {
    throw Error("mask_rows: mask of length " + std::to_string(mask.size()) + " for input " +
                shape_string(x.rows, x.cols));
  }
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) *= mask[r];
  }
  std::uint32_t ia = a.id();
  std::vector<double> m(mask.begin(), mask.end());
  return a.tape()->push(std::move(out), {ia}, [ia, m = std::move(m)](Tape& t, std::uint32_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(ia);
    const std::size_t cols = t.value_of(ia).cols;
    for (std::size_t r = 0; r < m.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r * cols + c] * m[r];
    }
  });
}

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  Value out = f(tape, leaves);
  return {out.item(), tape.kink_signature()};
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> params,
                           const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw Error("grad_check: epsilon must be positive");
  Tape tape;
  std::vector<Value> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
  Value out = f(tape, leaves);
  const double base = out.item();
  if (!std::isfinite(base)) throw Error("grad_check: non-finite function value");
  const std::uint64_t base_sig = tape.kink_signature();
  tape.backward(out);

  std::vector<Tensor> work(params.begin(), params.end());
  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t p = 0; p < work.size(); ++p) {
    std::vector<double> analytic(leaves[p].grad().begin(), leaves[p].grad().end());
    std::vector<std::size_t> coords;
    const std::size_t n = work[p].size();
    if (options.max_coords_per_tensor == 0 || options.max_coords_per_tensor >= n) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      coords = rng.sample_without_replacement(n, options.max_coords_per_tensor);
    }
    for (std::size_t c : coords) {
      const double orig = work[p].data[c];
      auto probe = [&](double offset) {
        work[p].data[c] = orig + offset;
        return evaluate(f, work);
      };
      const double h = options.epsilon;
      std::vector<Probe> probes{probe(h), probe(-h)};
      if (options.fourth_order) {
        probes.push_back(probe(2 * h));
        probes.push_back(probe(-2 * h));
      }
      work[p].data[c] = orig;
      bool finite = std::isfinite(analytic[c]);
      bool crossed = false;
      for (const auto& pr : probes) {
        finite = finite && std::isfinite(pr.value);
        crossed = crossed || pr.signature != base_sig;
      }
      if (!finite) throw Error("grad_check: non-finite value while probing tensor " + std::to_string(p));
      if (crossed) {
        ++result.skipped;
        continue;
      }
      const double numeric =
          options.fourth_order
              ? (8.0 * (probes[0].value - probes[1].value) - (probes[2].value - probes[3].value)) / (12.0 * h)
              : (probes[0].value - probes[1].value) / (2.0 * h);
      const double a = analytic[c];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace ad
}  // namespace grail
