#include "bandfuse/ops.hpp"
#include "bandfuse/quantize.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bandfuse;

TEST(Quantize, GridDefinitions) {
  const QuantSpec w8{8, QuantMode::SymmetricWeight, 0.5};
  EXPECT_EQ(w8.grid_min(), -127);
  EXPECT_EQ(w8.grid_max(), 127);
  EXPECT_EQ(w8.grid_max() - w8.grid_min() + 1, 255);
  const QuantSpec a4{4, QuantMode::UnsignedActivation, 1.0};
  EXPECT_EQ(a4.grid_min(), 0);
  EXPECT_EQ(a4.grid_max(), 15);
  EXPECT_THROW((QuantSpec{5, QuantMode::SymmetricWeight, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((QuantSpec{8, QuantMode::SymmetricWeight, 0.0}.validate()), std::invalid_argument);
}

TEST(Quantize, Examples) {
  const QuantSpec a4{4, QuantMode::UnsignedActivation, 1.0 / 15.0};
  EXPECT_DOUBLE_EQ(fake_quantize(Tensor<double>::scalar(0.5), a4).item(), 8.0 / 15.0);
  // Clipping on both ends.
  EXPECT_DOUBLE_EQ(fake_quantize(Tensor<double>::scalar(3.0), a4).item(), 1.0);
  EXPECT_EQ(fake_quantize(Tensor<double>::scalar(-1.0), a4).item(), 0.0);

  const QuantSpec w8{8, QuantMode::SymmetricWeight, 0.01};
  EXPECT_DOUBLE_EQ(fake_quantize(Tensor<double>::scalar(100.0), w8).item(), 127 * 0.01);
  EXPECT_DOUBLE_EQ(fake_quantize(Tensor<double>::scalar(-100.0), w8).item(), -127 * 0.01);
}

TEST(Quantize, OnGridUnchangedAndIdempotent) {
  const QuantSpec w4{4, QuantMode::SymmetricWeight, 0.125};
  Array<double> v(15);
  for (int i = 0; i < 15; ++i) v[i] = (i - 7) * 0.125;
  Tensor<double> on_grid(Shape{15}, v);
  EXPECT_EQ(fake_quantize(on_grid, w4).values().matrix(), v.matrix());

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-2, 2);
  Array<double> r(200);
  for (auto& x : r) x = d(rng);
  Tensor<double> t(Shape{200}, r);
  auto once = fake_quantize(t, w4);
  auto twice = fake_quantize(once, w4);
  EXPECT_EQ(once.values().matrix(), twice.values().matrix());
}

TEST(Quantize, StraightThroughMask) {
  const QuantSpec a4{4, QuantMode::UnsignedActivation, 0.1};
  Tensor<double> x = Tensor<double>::from({4}, {-0.3, 0.42, 1.2, 1.9});
  x.set_requires_grad();
  GradTape<double> tape;
  tape.backward(sum(fake_quantize(x, a4)));
  // round(x/s) = -3, 4, 12, 19 against the grid [0, 15].
  EXPECT_EQ((*x.grad())[0], 0.0);
  EXPECT_EQ((*x.grad())[1], 1.0);
  EXPECT_EQ((*x.grad())[2], 1.0);
  EXPECT_EQ((*x.grad())[3], 0.0);
}

TEST(Quantize, Scales) {
  auto w = Tensor<double>::from({3}, {0.5, -1.4, 0.2});
  EXPECT_DOUBLE_EQ(weight_scale_max_abs(w, 8), 1.4 / 127.0);
  EXPECT_DOUBLE_EQ(weight_scale_max_abs(w, 4), 1.4 / 7.0);
  EXPECT_EQ(weight_scale_max_abs(Tensor<double>(Shape{3}, 0.0), 4), 1.0);
  EXPECT_DOUBLE_EQ(activation_scale_from_max(3.0, 4), 0.2);
  EXPECT_EQ(activation_scale_from_max(0.0, 4), 1.0);
  // Max-abs scaling keeps every weight inside the grid.
  auto q = fake_quantize(w, QuantSpec{4, QuantMode::SymmetricWeight, weight_scale_max_abs(w, 4)});
  EXPECT_DOUBLE_EQ(q[1], -1.4);
}
