#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "percdia/grad_check.hpp"
#include "percdia/tensor.hpp"

using namespace percdia;

namespace {

Tensor param(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  Tensor t = Tensor::randn(std::move(shape), rng, stddev);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST_CASE("matmul basics") {
  Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  Tensor m(Shape{2, 2}, {3, -1, 2, 5});
  Tensor prod = matmul(eye, m);
  for (int64_t i = 0; i < 4; ++i) CHECK(prod[i] == m[i]);

  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor ones(Shape{2, 1}, {1, 1});
  Tensor out = matmul(a, ones);
  CHECK(out(0, 0) == 3.0);
  CHECK(out(1, 0) == 7.0);

  Tensor bad(Shape{3, 2});
  CHECK_THROWS_AS(matmul(a, bad), std::invalid_argument);
}

TEST_CASE("matmul gradients match finite differences") {
  std::mt19937_64 rng(7);
  ParamStore params;
  params.add("a", param(Shape{3, 4}, rng));
  params.add("b", param(Shape{4, 2}, rng));
  auto f = [&] { return sum(matmul(params.get("a"), params.get("b"))); };
  GradCheckReport report = grad_check(f, params, 1e-6);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("softmax values") {
  Tensor x(Shape{2}, {0.0, 0.0});
  Tensor y = softmax(x, 0);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));

  Tensor big(Shape{2}, {1000.0, 0.0});
  Tensor yb = softmax(big, 0);
  CHECK(yb[0] == doctest::Approx(1.0));
  CHECK(yb[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(yb[0]));

  // slices along the axis sum to 1
  std::mt19937_64 rng(3);
  Tensor r = Tensor::randn(Shape{5, 7}, rng, 300.0);
  Tensor s1 = softmax(r, 1);
  for (int64_t i = 0; i < 5; ++i) {
    double total = 0.0;
    for (int64_t j = 0; j < 7; ++j) total += s1(i, j);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  Tensor s0 = softmax(r, 0);
  for (int64_t j = 0; j < 7; ++j) {
    double total = 0.0;
    for (int64_t i = 0; i < 5; ++i) total += s0(i, j);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax shift invariance") {
  std::mt19937_64 rng(11);
  Tensor x = Tensor::randn(Shape{4, 6}, rng, 2.0);
  Tensor shifted(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) shifted.raw()[i] = x[i] + 17.25;
  Tensor a = softmax(x, 1), b = softmax(shifted, 1);
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("softmax gradient") {
  std::mt19937_64 rng(5);
  ParamStore params;
  params.add("x", param(Shape{4, 5}, rng, 2.0));
  Tensor weights = Tensor::randn(Shape{4, 5}, rng, 1.0);
  for (int axis : {0, 1}) {
    auto f = [&] { return sum(mul(softmax(params.get("x"), axis), weights)); };
    GradCheckReport report = grad_check(f, params, 1e-6);
    CHECK(report.max_rel_err < 1e-5);
  }
}

TEST_CASE("layer_norm values") {
  Tensor gain = Tensor::full(Shape{3}, 1.0);
  Tensor bias = Tensor::zeros(Shape{3});

  // constant row: zero variance clamped by epsilon
  Tensor c(Shape{1, 3}, {4.0, 4.0, 4.0});
  Tensor yc = layer_norm(c, gain, bias);
  for (int64_t j = 0; j < 3; ++j) CHECK(yc[j] == doctest::Approx(0.0));

  Tensor gain2 = Tensor::full(Shape{2}, 1.0);
  Tensor bias2 = Tensor::zeros(Shape{2});
  Tensor r(Shape{1, 2}, {1.0, 3.0});
  Tensor yr = layer_norm(r, gain2, bias2);
  CHECK(yr[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(yr[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(13);
  ParamStore params;
  params.add("x", param(Shape{4, 6}, rng));
  params.add("gain", param(Shape{6}, rng, 0.3));
  params.add("bias", param(Shape{6}, rng, 0.3));
  Tensor weights = Tensor::randn(Shape{4, 6}, rng, 1.0);
  auto f = [&] {
    return sum(mul(layer_norm(params.get("x"), params.get("gain"), params.get("bias")), weights));
  };
  GradCheckReport report = grad_check(f, params, 1e-6);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("elementwise values") {
  Tensor z = Tensor::scalar(0.0);
  CHECK(sigmoid(z).item() == doctest::Approx(0.5));
  Tensor xs(Shape{2}, {-1.0, 2.0});
  Tensor r = relu(xs);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);
  CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), std::domain_error);
  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), std::domain_error);

  // sigmoid strictly in (0,1), overflow-safe on both sides
  Tensor extremes(Shape{2}, {-800.0, 800.0});
  Tensor sp = sigmoid(extremes);
  CHECK(sp[0] >= 0.0);
  CHECK(sp[1] <= 1.0);
  CHECK(std::isfinite(sp[0]));
  CHECK(std::isfinite(sp[1]));
}

TEST_CASE("backward basics") {
  // loss = sum(p) -> grad all ones
  Tensor p(Shape{3}, {1.0, 2.0, 3.0});
  p.set_requires_grad(true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = sum(p);
    tape.backward(loss);
  }
  for (double g : p.grad()) CHECK(g == 1.0);

  // loss = sum(p*p) at p=[1,2] -> grad [2,4]
  Tensor q(Shape{2}, {1.0, 2.0});
  q.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(q, q));
    tape.backward(loss);
  }
  CHECK(q.grad()[0] == doctest::Approx(2.0));
  CHECK(q.grad()[1] == doctest::Approx(4.0));

  // repeated backward without reset accumulates
  {
    Tape tape2;
    Tape::Scope scope(tape2);
    Tensor loss = sum(mul(q, q));
    tape2.backward(loss);
  }
  CHECK(q.grad()[0] == doctest::Approx(4.0));
  CHECK(q.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor p(Shape{2}, {1.0, 2.0});
  p.set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor out = mul(p, p);
  CHECK_THROWS_AS(tape.backward(out), std::invalid_argument);
}

TEST_CASE("composite expression gradient") {
  std::mt19937_64 rng(17);
  ParamStore params;
  params.add("w", param(Shape{5, 3}, rng));
  params.add("b", param(Shape{3}, rng, 0.2));
  Tensor x = Tensor::randn(Shape{4, 5}, rng, 1.0);
  auto f = [&] {
    Tensor h = relu(add_bias(matmul(x, params.get("w")), params.get("b")));
    Tensor s = sigmoid(h);
    return mean(mul(s, log(clamp(s, 1e-7, 1.0 - 1e-7))));
  };
  GradCheckReport report = grad_check(f, params, 1e-6);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("slice and concat gradients") {
  std::mt19937_64 rng(23);
  ParamStore params;
  params.add("x", param(Shape{3, 6}, rng));
  Tensor w = Tensor::randn(Shape{3, 6}, rng, 1.0);
  auto f = [&] {
    Tensor left = slice_cols(params.get("x"), 0, 2);
    Tensor mid = slice_cols(params.get("x"), 2, 3);
    Tensor right = slice_cols(params.get("x"), 5, 1);
    Tensor cat = concat_cols({left, mid, right});
    return sum(mul(cat, w));
  };
  GradCheckReport report = grad_check(f, params, 1e-6);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check quadratic exactness and negative control") {
  std::mt19937_64 rng(29);
  ParamStore params;
  params.add("x", param(Shape{1, 6}, rng));
  Tensor m = Tensor::randn(Shape{6, 6}, rng, 1.0);

  // quadratic form x M x^T, exact for central differences
  auto quad = [&] {
    const Tensor& x = params.get("x");
    return sum(mul(x, matmul(x, m)));
  };
  GradCheckReport report = grad_check(quad, params, 1e-6);
  CHECK(report.max_rel_err < 1e-8);

  // Corrupted rule: a wrong analytic gradient must be detected.
  Tensor& x = params.get("x");
  params.zero_grads();
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(quad());
  }
  std::vector<double> good(x.grad().begin(), x.grad().end());
  double fd0;
  {
    std::span<double> vals = x.raw();
    const double h = 1e-6, orig = vals[0];
    vals[0] = orig + h;
    const double fp = quad().item();
    vals[0] = orig - h;
    const double fm = quad().item();
    vals[0] = orig;
    fd0 = (fp - fm) / (2 * h);
  }
  CHECK(std::abs(good[0] - fd0) < 1e-6 * std::max(1.0, std::abs(fd0)));
  const double corrupted = good[0] * 1.5 + 0.1;  // deliberately wrong rule
  const double rel = std::abs(corrupted - fd0) / std::max({std::abs(corrupted), std::abs(fd0), 1e-3});
  CHECK(rel > 1e-4);
}

TEST_CASE("determinism of randn and ops") {
  std::mt19937_64 rng1(99), rng2(99);
  Tensor a1 = Tensor::randn(Shape{8, 8}, rng1, 1.0);
  Tensor a2 = Tensor::randn(Shape{8, 8}, rng2, 1.0);
  Tensor p1 = softmax(matmul(a1, transpose(a1)), 1);
  Tensor p2 = softmax(matmul(a2, transpose(a2)), 1);
  for (int64_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);  // bit-identical
}

TEST_CASE("scalar broadcast and shape errors") {
  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor s = Tensor::scalar(10.0);
  Tensor sum_t = add(a, s);
  CHECK(sum_t(1, 1) == 14.0);
  Tensor b(Shape{3, 2});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("dropout scaling and determinism") {
  std::mt19937_64 rng(31);
  Tensor x = Tensor::full(Shape{1000}, 1.0);
  Tensor y = dropout(x, 0.3, rng);
  double total = 0.0;
  int64_t zeros = 0;
  for (int64_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(y[i] == doctest::Approx(1.0 / 0.7));
    }
    total += y[i];
  }
  CHECK(zeros > 200);
  CHECK(zeros < 400);
  CHECK(total / 1000.0 == doctest::Approx(1.0).epsilon(0.1));
}
