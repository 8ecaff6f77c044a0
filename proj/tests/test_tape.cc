#include <catch2/catch_amalgamated.hpp>

#include "restore/gradcheck.hh"
#include "restore/rng.hh"
#include "restore/tape.hh"

using namespace restore;
using Id = Tape<double>::ValueId;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double span = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = span * (2.0 * uniform(rng) - 1.0);
  return t;
}

// Projects a tensor to a scalar with fixed pseudo-random weights so that
// misrouted gradients cannot cancel the way a plain sum would allow.
Id project(Tape<double>& t, Id x, unsigned seed) {
  Rng rng(seed);
  Tensor<double> w(t.value(x).shape);
  for (auto& v : w.data) v = 2.0 * uniform(rng) - 1.0;
  return t.sum(t.mul(x, t.constant(std::move(w))));
}

}  // namespace

TEST_CASE("backward of a linear map broadcasts the fixed input") {
  Tape<double> t;
  Id w = t.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}), true);
  Id x = t.constant(Tensor<double>({3, 1}, {7, 8, 9}));
  Id loss = t.sum(t.matmul(w, x));
  t.backward(loss);
  CHECK(t.grad(w).data == std::vector<double>{7, 8, 9, 7, 8, 9});
}

TEST_CASE("relu subgradient is zero at negative inputs") {
  Tape<double> t;
  Id x = t.leaf(Tensor<double>({2}, {-1, 2}), true);
  Id loss = t.sum(t.activation(x, Activation::Relu));
  t.backward(loss);
  CHECK(t.grad(x).data == std::vector<double>{0, 1});
}

TEST_CASE("backward rejects non-scalar losses and foreign ids") {
  Tape<double> t;
  Id x = t.leaf(Tensor<double>({2}, {1, 2}), true);
  CHECK_THROWS_AS(t.backward(x), ShapeError);

  Tape<double> other;
  Id foreign = other.leaf(Tensor<double>({1}, {1}), true);
  CHECK_THROWS_AS(t.value(foreign), Error);
  CHECK_THROWS_AS(t.backward(foreign), Error);
}

TEST_CASE("unreferenced trainables receive zero gradients") {
  Tape<double> t;
  Id used = t.leaf(Tensor<double>({2}, {1, 2}), true);
  Id unused = t.leaf(Tensor<double>({3}, {4, 5, 6}), true);
  t.backward(t.sum_squares(used));
  CHECK(t.grad(unused).shape == Shape{3});
  CHECK(t.grad(unused).data == std::vector<double>{0, 0, 0});
}

TEST_CASE("gradients accumulate when a leaf is reused") {
  Tape<double> t;
  Id x = t.leaf(Tensor<double>({2}, {3, 4}), true);
  Id loss = t.sum(t.add(x, x));
  t.backward(loss);
  CHECK(t.grad(x).data == std::vector<double>{2, 2});
}

TEST_CASE("dense layer gradients match central differences") {
  Rng rng(7);
  Tensor<double> x = random_tensor({4, 3}, rng);
  Tensor<double> w = random_tensor({3, 5}, rng);
  Tensor<double> b = random_tensor({5}, rng);
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return project(t, t.add_row_bias(t.matmul(ids[0], ids[1]), ids[2]), 99);
      },
      {&x, &w, &b});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("conv2d gradients match central differences") {
  Rng rng(13);
  Tensor<double> x = random_tensor({1, 5, 5}, rng);
  Tensor<double> k = random_tensor({2, 1, 3, 3}, rng);
  for (Padding pad : {Padding::Same, Padding::Valid}) {
    auto report = grad_check(
        [pad](Tape<double>& t, const std::vector<Id>& ids) {
          return project(t, t.conv2d(ids[0], ids[1], 1, pad), 5);
        },
        {&x, &k});
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("strided batched conv2d gradients match central differences") {
  Rng rng(17);
  Tensor<double> x = random_tensor({2, 3, 6, 6}, rng);
  Tensor<double> k = random_tensor({4, 3, 3, 3}, rng);
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return project(t, t.conv2d(ids[0], ids[1], 2, Padding::Same), 6);
      },
      {&x, &k});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("maxpool2d routes gradients to the argmax") {
  Tape<double> t;
  Id x = t.leaf(Tensor<double>({1, 2, 2}, {1, 9, 3, 2}), true);
  t.backward(t.sum(t.maxpool2d(x, 2, 2)));
  CHECK(t.grad(x).data == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("maxpool2d gradients match central differences") {
  // Distinct values keep the argmax stable under the probe step.
  Rng rng(19);
  Tensor<double> x({1, 2, 6, 6});
  std::vector<std::size_t> order(x.numel());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_in_place(order, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = 0.01 * static_cast<double>(order[i]);
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return project(t, t.maxpool2d(ids[0], 2, 2), 7);
      },
      {&x});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("conv2d_transpose gradients match central differences") {
  Rng rng(23);
  Tensor<double> x = random_tensor({1, 2, 4, 4}, rng);
  Tensor<double> k = random_tensor({2, 3, 5, 5}, rng);
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return project(t, t.conv2d_transpose(ids[0], ids[1], 2, 2, 1), 8);
      },
      {&x, &k});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("activation gradients match central differences") {
  Rng rng(29);
  for (Activation a : {Activation::Sigmoid, Activation::Tanh}) {
    Tensor<double> x = random_tensor({3, 4}, rng, 2.0);
    auto report = grad_check(
        [a](Tape<double>& t, const std::vector<Id>& ids) {
          return project(t, t.activation(ids[0], a), 9);
        },
        {&x});
    CHECK(report.max_rel_error < 1e-6);
  }
  // keep relu probes away from the kink
  Tensor<double> x = random_tensor({3, 4}, rng, 2.0);
  for (auto& v : x.data)
    if (std::abs(v) < 1e-3) v = 0.5;
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return project(t, t.activation(ids[0], Activation::Relu), 10);
      },
      {&x});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("elementwise, bias, reshape and reduction gradients") {
  Rng rng(31);
  Tensor<double> a = random_tensor({2, 3}, rng);
  Tensor<double> b = random_tensor({2, 3}, rng);
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        auto prod = t.mul(ids[0], ids[1]);
        auto diff = t.sub(prod, t.scale(ids[0], 0.25));
        auto flat = t.reshape(diff, {6});
        return t.sum_squares(flat);
      },
      {&a, &b});
  CHECK(report.max_rel_error < 1e-6);

  Tensor<double> img = random_tensor({2, 3, 4, 4}, rng);
  Tensor<double> cb = random_tensor({3}, rng);
  report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return project(t, t.add_channel_bias(ids[0], ids[1]), 11);
      },
      {&img, &cb});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("sqrt_scalar gradient matches central differences") {
  Tensor<double> x({4}, {0.3, -0.2, 0.5, 0.1});
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        return t.sqrt_scalar(t.scale(t.sum_squares(ids[0]), 1.0 / 4.0));
      },
      {&x});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("dropout gradient routes through the mask") {
  Tensor<double> x({100});
  Rng init(43);
  for (auto& v : x.data) v = 2.0 * uniform(init) - 1.0;
  auto report = grad_check(
      [](Tape<double>& t, const std::vector<Id>& ids) {
        Rng rng(1234);  // same mask on every rebuild
        return project(t, t.dropout(ids[0], 0.25, rng), 12);
      },
      {&x});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("dropout scales survivors and zeroes the rest") {
  Tape<double> t;
  Id x = t.constant(Tensor<double>::full({10000}, 1.0));
  Rng rng(7);
  Id y = t.dropout(x, 0.25, rng);
  std::size_t zeros = 0;
  for (double v : t.value(y).data) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == Catch::Approx(4.0 / 3.0));
  }
  double frac = static_cast<double>(zeros) / 10000.0;
  CHECK(frac > 0.23);
  CHECK(frac < 0.27);
}
