#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace grail {

class Rng;

// Dense row-major 2-D tensor of doubles. Vectors are 1 x n, scalars 1 x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values);

  static Tensor scalar(double x) { return Tensor(1, 1, x); }

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(std::size_t rows, std::size_t cols);

namespace ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;

  std::size_t rows() const;
  std::size_t cols() const;
  std::span<const double> data() const;
  std::span<const double> grad() const;
  double item() const;  // scalar value
  const Tensor& tensor() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Tape;
  Value(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Dynamically built computation graph. Nodes are appended in evaluation
// order, so reverse insertion order is a valid backward schedule.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Tensor value, bool requires_grad);
  Value constant(Tensor value) { return leaf(std::move(value), false); }

  // Populates grad on every node that requires it; accumulates across calls.
  void backward(Value root);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

  // Hash of the sign pattern of every relu/hinge input seen so far. Two
  // forward passes with the same signature took the same linear pieces.
  std::uint64_t kink_signature() const { return kink_hash_; }

  // Internal API used by the primitives.
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;
  Value push(Tensor value, std::vector<std::uint32_t> parents, BackwardFn backward);
  const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
  std::vector<double>& grad_of(std::uint32_t id);
  bool needs_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  void record_kinks(std::span<const double> inputs);

 private:
  friend class Value;
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::uint64_t kink_hash_ = 0xcbf29ce484222325ULL;
};

// Primitive set. All throw grail::Error on shape mismatch, naming the
// primitive and the offending shapes.
Value matmul(Value a, Value b);
// Same shape, or b is a 1 x cols row broadcast over every row of a.
Value add(Value a, Value b);
// Same shape, or b is a rows x 1 column broadcast over every column of a.
Value mul(Value a, Value b);
Value scale(Value a, double s);
Value relu(Value a);
Value sigmoid(Value a);
Value hinge(Value a);  // max(0, x)
Value concat_cols(std::span<const Value> parts);
Value slice_cols(Value a, std::size_t begin, std::size_t end);
Value mean_rows(Value a);  // rows x cols -> 1 x cols
Value sum(Value a);        // -> 1 x 1
Value slice_rows(Value a, std::size_t begin, std::size_t end);
Value gather_rows(Value a, std::span<const std::uint32_t> index);
// out[index[i]] += a[i]; out has `out_rows` rows.
Value scatter_add_rows(Value a, std::span<const std::uint32_t> index, std::size_t out_rows);
// Multiplies row i by mask[i]; the mask is data (0/1), not a tape value.
Value mask_rows(Value a, std::span<const double> mask);

inline Value concat_cols(std::initializer_list<Value> parts) {
  return concat_cols(std::span<const Value>(parts.begin(), parts.size()));
}

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // Fourth-order central stencil (+/-eps, +/-2 eps). Tolerates a larger
  // epsilon, so round-off matters less for gradients near 1e-8.
  bool fourth_order = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/-epsilon probes crossed a relu/hinge kink.
  std::size_t skipped = 0;
};

// f builds a scalar from the parameter leaves it is handed.
using ScalarFn = std::function<Value(Tape&, std::span<const Value> params)>;

// Compares reverse-mode gradients with central differences. Relative error
// per coordinate is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> params,
                           const GradCheckOptions& options = {});

}  // namespace ad
}  // namespace grail
