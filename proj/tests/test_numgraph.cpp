#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fakpconv/checks.hpp"
#include "fakpconv/ops.hpp"
#include "fakpconv/rng.hpp"

using namespace fakp;

namespace {

Tensor t2(std::vector<double> v, std::size_t rows, std::size_t cols, bool rg = false) {
  return Tensor::from_values({rows, cols}, std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul identity and hand sum") {
  Tape tape;
  Tensor eye = t2({1, 0, 0, 0, 1, 0, 0, 0, 1}, 3, 3);
  Tensor m = t2({1, 2, 3, 4, 5, 6, 7, 8, 9}, 3, 3);
  Tensor out = matmul(tape, eye, m);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.at(i) == doctest::Approx(m.at(i)).epsilon(0));

  Tensor a = t2({1, 2, 3, 4}, 2, 2);
  Tensor b = t2({1, 1}, 2, 1);
  Tensor prod = matmul(tape, a, b);
  CHECK(prod.at(0, 0) == 3.0);
  CHECK(prod.at(1, 0) == 7.0);
}

TEST_CASE("matmul rejects mismatched inner dims") {
  Tape tape;
  CHECK_THROWS_AS(matmul(tape, t2({1, 2}, 1, 2), t2({1, 2, 3}, 1, 3)), ShapeMismatch);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(3);
  std::vector<double> av(12), bv(8);
  for (double& v : av) v = rng.uniform(-2, 2);
  for (double& v : bv) v = rng.uniform(-2, 2);
  Tensor a = t2(av, 3, 4, true), b = t2(bv, 4, 2, true);
  const double err = finite_difference_max_rel_error(
      [&](Tape& t) { return sum_all(t, matmul(t, a, b)); }, {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("leaky_relu values and gradient convention") {
  Tape tape;
  Tensor x = Tensor::from_values({4}, {2.0, -2.0, -3.0, 0.0}, true);
  Tensor y = leaky_relu(tape, x, 0.1);
  CHECK(y.at(0) == 2.0);
  CHECK(y.at(1) == doctest::Approx(-0.2));
  Tensor loss = sum_all(tape, y);
  tape.backward(loss);
  auto g = x.grad();
  CHECK(g[0] == 1.0);
  CHECK(g[2] == doctest::Approx(0.1));  // x = -3
  CHECK(g[3] == doctest::Approx(0.1));  // gradient at exactly 0 is slope
}

TEST_CASE("leaky_relu slope outside [0,1) rejected") {
  Tape tape;
  Tensor x = Tensor::from_values({1}, {1.0});
  CHECK_THROWS_AS(leaky_relu(tape, x, 1.0), Error);
  CHECK_THROWS_AS(leaky_relu(tape, x, -0.2), Error);
}

TEST_CASE("batch_norm constant column collapses to beta") {
  Tape tape;
  Tensor x = t2({5, 5, 5, 5}, 4, 1, true);
  Tensor gamma = Tensor::from_values({1}, {2.0}, true);
  Tensor beta = Tensor::from_values({1}, {-0.3}, true);
  BatchNormState state;
  Tensor y = batch_norm(tape, x, gamma, beta, 1e-5, state, true);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y.at(i) - (-0.3)) < 1e-3);
}

TEST_CASE("batch_norm standardizes a two-point column") {
  Tape tape;
  Tensor x = t2({-1, 1}, 2, 1);
  Tensor gamma = Tensor::from_values({1}, {1.0});
  Tensor beta = Tensor::from_values({1}, {0.0});
  BatchNormState state;
  const double eps = 1e-5;
  Tensor y = batch_norm(tape, x, gamma, beta, eps, state, true);
  const double expect = 1.0 / std::sqrt(1.0 + eps);
  CHECK(y.at(0) == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(y.at(1) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("batch_norm rejects single-row training batches") {
  Tape tape;
  Tensor x = t2({1.0}, 1, 1);
  Tensor gamma = Tensor::from_values({1}, {1.0});
  Tensor beta = Tensor::from_values({1}, {0.0});
  BatchNormState state;
  CHECK_THROWS_AS(batch_norm(tape, x, gamma, beta, 1e-5, state, true), DegenerateBatch);
  CHECK_NOTHROW(batch_norm(tape, x, gamma, beta, 1e-5, state, false));
}

TEST_CASE("batch_norm gradients match finite differences") {
  Rng rng(11);
  std::vector<double> xv(12);
  for (double& v : xv) v = rng.uniform(-2, 2);
  Tensor x = t2(xv, 4, 3, true);
  Tensor gamma = Tensor::from_values({3}, {1.1, 0.8, 1.3}, true);
  Tensor beta = Tensor::from_values({3}, {0.2, -0.4, 0.0}, true);
  BatchNormState state;
  const double err = finite_difference_max_rel_error(
      [&](Tape& t) { return sum_all(t, batch_norm(t, x, gamma, beta, 1e-5, state, true)); },
      {x, gamma, beta});
  CHECK(err < 1e-5);
}

TEST_CASE("reduce mean, max tie-break, sum gradient") {
  Tape tape;
  Tensor x = Tensor::from_values({2}, {2.0, 4.0}, false);
  CHECK(reduce(tape, x, 0, ReduceKind::Mean).at(0) == 3.0);

  Tensor ties = Tensor::from_values({3}, {1.0, 5.0, 5.0}, true);
  Tensor m = reduce(tape, ties, 0, ReduceKind::Max);
  CHECK(m.at(0) == 5.0);
  tape.backward(m);
  auto g = ties.grad();
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);  // lowest tied index takes the gradient
  CHECK(g[2] == 0.0);

  Tape tape2;
  Tensor y = t2({1, 2, 3, 4, 5, 6}, 2, 3, true);
  Tensor s = reduce(tape2, reduce(tape2, y, 0, ReduceKind::Sum), 0, ReduceKind::Sum);
  tape2.backward(s);
  for (double v : y.grad()) CHECK(v == 1.0);
}

TEST_CASE("reduce rejects empty axes and bad axis") {
  Tape tape;
  Tensor empty = Tensor::zeros({0, 3});
  CHECK_THROWS_AS(reduce(tape, empty, 0, ReduceKind::Sum), EmptyAxis);
  Tensor x = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(reduce(tape, x, 2, ReduceKind::Sum), ShapeMismatch);
}

TEST_CASE("gather_rows identity, empty, duplicate accumulation") {
  Tape tape;
  Tensor x = t2({1, 2, 3, 4, 5, 6}, 3, 2, true);
  std::vector<std::size_t> all{0, 1, 2};
  Tensor copy = gather_rows(tape, x, all);
  for (std::size_t i = 0; i < 6; ++i) CHECK(copy.at(i) == x.at(i));

  Tensor none = gather_rows(tape, x, std::vector<std::size_t>{});
  CHECK(none.dim(0) == 0);
  CHECK(none.dim(1) == 2);

  Tape tape2;
  std::vector<std::size_t> dup{1, 1};
  Tensor sel = gather_rows(tape2, x, dup);
  Tensor loss = sum_all(tape2, sel);
  tape2.backward(loss);
  auto g = x.grad();
  CHECK(g[0] == 0.0);
  CHECK(g[2] == 2.0);  // row 1 receives both contributions
  CHECK(g[3] == 2.0);

  std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(gather_rows(tape, x, bad), IndexOutOfRange);
}

TEST_CASE("softmax cross entropy analytic values") {
  Tape tape;
  Tensor uniform = t2({0.3, 0.3, 0.3, 0.3}, 1, 4);
  std::vector<int> label{2};
  CHECK(softmax_cross_entropy(tape, uniform, label).at(0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Confident correct logits drive the loss toward zero.
  double last = 1e9;
  for (double margin : {5.0, 10.0, 20.0}) {
    Tensor z = t2({margin, 0.0, 0.0, 0.0}, 1, 4);
    std::vector<int> l0{0};
    const double loss = softmax_cross_entropy(tape, z, l0).at(0);
    CHECK(loss < last);
    last = loss;
  }
  CHECK(last < 1e-8);

  std::vector<int> bad{4};
  CHECK_THROWS_AS(softmax_cross_entropy(tape, uniform, bad), IndexOutOfRange);
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
  Rng rng(17);
  std::vector<double> zv(8);
  for (double& v : zv) v = rng.uniform(-2, 2);
  Tensor z = t2(zv, 2, 4, true);
  const std::vector<int> labels{3, 1};
  const double err = finite_difference_max_rel_error(
      [&](Tape& t) { return softmax_cross_entropy(t, z, labels); }, {z});
  CHECK(err < 1e-6);
}

TEST_CASE("backward populates gradients and rejects reuse") {
  Tape tape;
  Tensor x = t2({1, 2, 3, 4}, 2, 2, true);
  Tensor loss = sum_all(tape, x);
  tape.backward(loss);
  for (double v : x.grad()) CHECK(v == 1.0);
  CHECK_THROWS_AS(tape.backward(loss), TapeConsumed);

  Tape tape2;
  Tensor sq = mul(tape2, x, x);
  x.zero_grad();
  tape2.backward(sum_all(tape2, sq));
  auto g = x.grad();
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(2.0 * x.at(i)));

  Tape tape3;
  CHECK_THROWS_AS(tape3.backward(x), NotScalar);
}

TEST_CASE("sgd step, zero grad, momentum recurrence") {
  SgdState state;
  Tensor p = Tensor::from_values({1}, {1.0}, true);
  p.grad_mut()[0] = 2.0;
  std::vector<Tensor> params{p};
  sgd_step(params, 0.1, 0.0, state);
  CHECK(p.at(0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.grad()[0] == 0.0);  // zeroed afterwards

  // zero grad -> unchanged
  sgd_step(params, 0.1, 0.0, state);
  CHECK(p.at(0) == doctest::Approx(0.8).epsilon(1e-15));

  // two steps with momentum follow the hand-unrolled recurrence
  SgdState s2;
  Tensor q = Tensor::from_values({1}, {1.0}, true);
  std::vector<Tensor> qs{q};
  const double lr = 0.1, mom = 0.9, g1 = 2.0, g2 = -1.0;
  q.grad_mut()[0] = g1;
  sgd_step(qs, lr, mom, s2);
  q.grad_mut()[0] = g2;
  sgd_step(qs, lr, mom, s2);
  const double v1 = g1;
  const double v2 = mom * v1 + g2;
  const double expected = 1.0 - lr * v1 - lr * v2;
  CHECK(q.at(0) == doctest::Approx(expected).epsilon(1e-15));

  Tensor no_grad = Tensor::from_values({1}, {1.0}, true);
  std::vector<Tensor> missing{no_grad};
  SgdState s3;
  CHECK_THROWS_AS(sgd_step(missing, 0.1, 0.0, s3), MissingGrad);
  CHECK_THROWS_AS(sgd_step(params, 0.0, 0.0, state), Error);
}

TEST_CASE("forward computation is deterministic") {
  auto run = [] {
    Rng rng(5);
    std::vector<double> av(20), bv(20);
    for (double& v : av) v = rng.uniform(-2, 2);
    for (double& v : bv) v = rng.uniform(-2, 2);
    Tape tape;
    Tensor a = t2(av, 4, 5, false), b = t2(bv, 5, 4, false);
    Tensor out = leaky_relu(tape, matmul(tape, a, b), 0.1);
    return std::vector<double>(out.values().begin(), out.values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0}), ShapeMismatch);
  Tensor t = Tensor::zeros({3, 2}, true);
  CHECK(t.size() == 6);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.grad(), MissingGrad);
  t.grad_mut();
  CHECK(t.has_grad());
}
