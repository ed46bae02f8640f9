#include <cmath>
#include <string>

#include "doctest.h"
#include "grail/autodiff.hpp"
#include "grail/error.hpp"
#include "grail/rng.hpp"

using namespace grail;
using namespace grail::ad;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  for (double& x : t.data) x = rng.uniform(-1.0, 1.0);
  return t;
}

// Contracts an arbitrary output with fixed random weights so every output
// coordinate contributes to the scalar.
Value contract(Tape& tape, Value out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, tape.constant(random_tensor(rng, out.rows(), out.cols()))));
}

// Reverse-mode gradient against a hand-rolled central difference on a fresh
// tape per probe.
double max_fd_error(const ScalarFn& f, std::vector<Tensor> params) {
  Tape tape;
  std::vector<Value> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
  auto root = f(tape, leaves);
  tape.backward(root);
  auto eval = [&](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Value> ls;
    for (const auto& p : ps) ls.push_back(t.leaf(p, false));
    return f(t, ls).item();
  };
  const double eps = 1e-6;
  double worst = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double x0 = params[p].data[i];
      params[p].data[i] = x0 + eps;
      const double fp = eval(params);
      params[p].data[i] = x0 - eps;
      const double fm = eval(params);
      params[p].data[i] = x0;
      const double numeric = (fp - fm) / (2 * eps);
      worst = std::max(worst, std::abs(numeric - leaves[p].grad()[i]));
    }
  }
  return worst;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("primitive forward values") {
  Tape t;
  auto a = t.constant(Tensor(2, 2, {1, 2, 3, 4}));
  auto b = t.constant(Tensor(2, 2, {5, 6, 7, 8}));
  CHECK(matmul(a, b).tensor() == Tensor(2, 2, {19, 22, 43, 50}));
  CHECK(add(a, t.constant(Tensor(1, 2, {10, 20}))).tensor() == Tensor(2, 2, {11, 22, 13, 24}));
  CHECK(mul(a, t.constant(Tensor(2, 1, {2, 3}))).tensor() == Tensor(2, 2, {2, 4, 9, 12}));
  CHECK(scale(a, -1).tensor() == Tensor(2, 2, {-1, -2, -3, -4}));
  CHECK(relu(t.constant(Tensor(1, 3, {-1, 0, 2}))).tensor() == Tensor(1, 3, {0, 0, 2}));
  CHECK(hinge(t.constant(Tensor(1, 2, {-0.5, 0.5}))).tensor() == Tensor(1, 2, {0, 0.5}));
  CHECK(sigmoid(t.constant(Tensor::scalar(0))).item() == 0.5);
  CHECK(concat_cols({a, b}).tensor() == Tensor(2, 4, {1, 2, 5, 6, 3, 4, 7, 8}));
  CHECK(slice_cols(a, 1, 2).tensor() == Tensor(2, 1, {2, 4}));
  CHECK(slice_rows(a, 1, 2).tensor() == Tensor(1, 2, {3, 4}));
  CHECK(mean_rows(a).tensor() == Tensor(1, 2, {2, 3}));
  CHECK(sum(a).item() == 10);
  const std::vector<std::uint32_t> idx{1, 1, 0};
  CHECK(gather_rows(a, idx).tensor() == Tensor(3, 2, {3, 4, 3, 4, 1, 2}));
  const std::vector<std::uint32_t> to{2, 2};
  CHECK(scatter_add_rows(a, to, 3).tensor() == Tensor(3, 2, {0, 0, 0, 0, 4, 6}));
  const std::vector<double> mask{0, 1};
  CHECK(mask_rows(a, mask).tensor() == Tensor(2, 2, {0, 0, 3, 4}));
}

TEST_CASE("shape errors name the primitive and both shapes") {
  Tape t;
  auto a = t.constant(Tensor(2, 3));
  auto b = t.constant(Tensor(2, 3));
  const auto msg = message_of([&] { matmul(a, b); });
  CHECK(msg.find("matmul") != std::string::npos);
  CHECK(msg.find("[2x3]") != std::string::npos);
  CHECK(message_of([&] { add(a, t.constant(Tensor(1, 2))); }).find("add") != std::string::npos);
  CHECK(message_of([&] { mul(a, t.constant(Tensor(3, 1))); }).find("mul") != std::string::npos);
  CHECK(message_of([&] { slice_cols(a, 2, 5); }).find("slice_cols") != std::string::npos);
  CHECK(message_of([&] { concat_cols({a, t.constant(Tensor(3, 1))}); }).find("concat_cols") != std::string::npos);
  const std::vector<std::uint32_t> bad{7};
  CHECK(message_of([&] { gather_rows(a, bad); }).find("gather_rows") != std::string::npos);
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  auto a = t.leaf(Tensor(2, 2, 1.0), true);
  CHECK(message_of([&] { t.backward(a); }).find("scalar") != std::string::npos);
  Tape other;
  auto s = other.leaf(Tensor::scalar(1), true);
  CHECK_THROWS_AS(t.backward(s), Error);
}

TEST_CASE("fan-out sums both gradient paths") {
  Tape t;
  auto x = t.leaf(Tensor::scalar(3), true);
  auto y = add(mul(x, x), scale(x, 2));  // x^2 + 2x
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8));
}

TEST_CASE("leaf gradients accumulate across backward calls until zeroed") {
  Tape t;
  auto x = t.leaf(Tensor::scalar(2), true);
  auto y = mul(x, x);
  t.backward(y);
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8));
  t.zero_grad();
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4));
}

TEST_CASE("constants receive no gradient") {
  Tape t;
  auto c = t.constant(Tensor::scalar(5));
  auto x = t.leaf(Tensor::scalar(1), true);
  t.backward(mul(c, x));
  CHECK(c.grad()[0] == 0);
  CHECK(x.grad()[0] == 5);
}

TEST_CASE("every primitive matches central differences") {
  Rng rng(11);
  const std::vector<std::uint32_t> gi{2, 0, 2, 1};
  const std::vector<std::uint32_t> si{1, 0, 1};
  const std::vector<double> mask{1, 0, 1};
  struct Case {
    const char* name;
    std::vector<Tensor> inputs;
    ScalarFn fn;
  };
  std::vector<Case> cases{
      {"matmul", {random_tensor(rng, 3, 4), random_tensor(rng, 4, 2)},
       [](Tape& t, std::span<const Value> p) { return contract(t, matmul(p[0], p[1]), 1); }},
      {"add", {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)},
       [](Tape& t, std::span<const Value> p) { return contract(t, add(p[0], p[1]), 2); }},
      {"add-broadcast", {random_tensor(rng, 3, 4), random_tensor(rng, 1, 4)},
       [](Tape& t, std::span<const Value> p) { return contract(t, add(p[0], p[1]), 3); }},
      {"mul", {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)},
       [](Tape& t, std::span<const Value> p) { return contract(t, mul(p[0], p[1]), 4); }},
      {"mul-broadcast", {random_tensor(rng, 3, 4), random_tensor(rng, 3, 1)},
       [](Tape& t, std::span<const Value> p) { return contract(t, mul(p[0], p[1]), 5); }},
      {"scale", {random_tensor(rng, 2, 3)},
       [](Tape& t, std::span<const Value> p) { return contract(t, scale(p[0], -1.7), 6); }},
      {"relu", {random_tensor(rng, 3, 3)},
       [](Tape& t, std::span<const Value> p) { return contract(t, relu(p[0]), 7); }},
      {"sigmoid", {random_tensor(rng, 3, 3)},
       [](Tape& t, std::span<const Value> p) { return contract(t, sigmoid(p[0]), 8); }},
      {"hinge", {random_tensor(rng, 2, 4)},
       [](Tape& t, std::span<const Value> p) { return contract(t, hinge(p[0]), 9); }},
      {"concat_cols", {random_tensor(rng, 2, 2), random_tensor(rng, 2, 3)},
       [](Tape& t, std::span<const Value> p) { return contract(t, concat_cols({p[0], p[1]}), 10); }},
      {"slice_cols", {random_tensor(rng, 3, 5)},
       [](Tape& t, std::span<const Value> p) { return contract(t, slice_cols(p[0], 1, 4), 11); }},
      {"slice_rows", {random_tensor(rng, 4, 2)},
       [](Tape& t, std::span<const Value> p) { return contract(t, slice_rows(p[0], 1, 3), 12); }},
      {"mean_rows", {random_tensor(rng, 4, 3)},
       [](Tape& t, std::span<const Value> p) { return contract(t, mean_rows(p[0]), 13); }},
      {"sum", {random_tensor(rng, 3, 3)}, [](Tape&, std::span<const Value> p) { return sum(p[0]); }},
      {"gather_rows", {random_tensor(rng, 3, 2)},
       [&gi](Tape& t, std::span<const Value> p) { return contract(t, gather_rows(p[0], gi), 14); }},
      {"scatter_add_rows", {random_tensor(rng, 3, 2)},
       [&si](Tape& t, std::span<const Value> p) { return contract(t, scatter_add_rows(p[0], si, 4), 15); }},
      {"mask_rows", {random_tensor(rng, 3, 2)},
       [&mask](Tape& t, std::span<const Value> p) { return contract(t, mask_rows(p[0], mask), 16); }},
  };
  for (auto& c : cases) {
    INFO(c.name);
    CHECK(max_fd_error(c.fn, c.inputs) < 1e-6);
  }
}

TEST_CASE("three-layer composition matches central differences") {
  Rng rng(5);
  std::vector<Tensor> ps{random_tensor(rng, 4, 3), random_tensor(rng, 3, 5), random_tensor(rng, 1, 5),
                         random_tensor(rng, 5, 5), random_tensor(rng, 5, 1)};
  ScalarFn f = [](Tape&, std::span<const Value> p) {
    auto h = relu(add(matmul(p[0], p[1]), p[2]));
    h = sigmoid(matmul(h, p[3]));
    return sum(matmul(h, p[4]));
  };
  CHECK(max_fd_error(f, ps) < 1e-6);
}

TEST_CASE("grad_check on a quadratic") {
  Rng rng(3);
  std::vector<Tensor> ps{random_tensor(rng, 1, 6)};
  ScalarFn f = [](Tape&, std::span<const Value> p) { return sum(mul(p[0], p[0])); };
  const auto r = grad_check(f, ps);
  CHECK(r.checked == 6);
  CHECK(r.skipped == 0);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("fourth-order stencil is exact on a quartic up to round-off") {
  std::vector<Tensor> ps{Tensor(1, 3, {0.5, -1.2, 2.0})};
  ScalarFn f = [](Tape&, std::span<const Value> p) {
    auto sq = mul(p[0], p[0]);
    return sum(add(mul(sq, sq), mul(sq, p[0])));
  };
  GradCheckOptions opt;
  opt.epsilon = 1e-2;
  opt.fourth_order = true;
  CHECK(grad_check(f, ps, opt).max_rel_error < 1e-10);
  opt.fourth_order = false;
  CHECK(grad_check(f, ps, opt).max_rel_error > 1e-6);
}

TEST_CASE("grad_check skips coordinates that straddle a kink") {
  std::vector<Tensor> ps{Tensor(1, 2, {1e-7, 0.5})};
  ScalarFn f = [](Tape&, std::span<const Value> p) { return sum(hinge(p[0])); };
  const auto r = grad_check(f, ps);
  CHECK(r.skipped == 1);
  CHECK(r.checked == 1);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("grad_check detects a wrong gradient") {
  // A primitive with a deliberately broken backward.
  ScalarFn f = [](Tape& t, std::span<const Value> p) {
    auto x = p[0];
    auto doubled = t.push(Tensor(1, 1, {2 * x.item()}), {x.id()}, [x](Tape& tp, std::uint32_t self) {
      tp.grad_of(x.id())[0] += 3.0 * tp.grad_of(self)[0];
    });
    return doubled;
  };
  std::vector<Tensor> ps{Tensor::scalar(1.0)};
  CHECK(grad_check(f, ps).max_rel_error > 0.1);
}

TEST_CASE("forward and backward are deterministic") {
  Rng rng(17);
  const auto a = random_tensor(rng, 5, 4), b = random_tensor(rng, 4, 3);
  auto run = [&] {
    Tape t;
    auto x = t.leaf(a, true), y = t.leaf(b, true);
    auto out = sum(sigmoid(matmul(x, y)));
    t.backward(out);
    return std::make_pair(out.item(), std::vector<double>(x.grad().begin(), x.grad().end()));
  };
  CHECK(run() == run());
}
