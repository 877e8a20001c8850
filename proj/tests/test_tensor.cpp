#include "bandfuse/ops.hpp"
#include "bandfuse/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace bandfuse;

TEST(Tensor, ConstructionAndAccess) {
  Tensor<double> t = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2);
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor<double>(Shape{2, 0}), std::invalid_argument);
  EXPECT_THROW(Tensor<double>::from({2, 2}, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(t.item(), std::invalid_argument);
  EXPECT_EQ(Tensor<double>::scalar(4.0).item(), 4.0);
}

TEST(Tensor, GradientsOfSimpleLosses) {
  Tensor<double> x = Tensor<double>::from({3}, {1, -2, 5});
  x.set_requires_grad();
  {
    GradTape<double> tape;
    tape.backward(sum(x));
  }
  ASSERT_NE(x.grad(), nullptr);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ((*x.grad())[i], 1.0);

  Tensor<double> s = Tensor<double>::scalar(3.0);
  s.set_requires_grad();
  {
    GradTape<double> tape;
    tape.backward(mul(s, s));
  }
  EXPECT_EQ((*s.grad())[0], 6.0);
}

TEST(Tensor, GradientsAccumulateAcrossUses) {
  Tensor<double> x = Tensor<double>::from({2}, {2, 3});
  x.set_requires_grad();
  GradTape<double> tape;
  // y = sum(x + x*x) -> dy/dx = 1 + 2x
  tape.backward(sum(add(x, mul(x, x))));
  EXPECT_EQ((*x.grad())[0], 5.0);
  EXPECT_EQ((*x.grad())[1], 7.0);
}

TEST(Tensor, NonParticipantsHaveNoGradient) {
  Tensor<double> a = Tensor<double>::from({2}, {1, 2});
  Tensor<double> unused = Tensor<double>::from({2}, {3, 4});
  a.set_requires_grad();
  unused.set_requires_grad();
  GradTape<double> tape;
  tape.backward(sum(a));
  EXPECT_NE(a.grad(), nullptr);
  EXPECT_EQ(unused.grad(), nullptr);
}

TEST(Tensor, NoRecordingWithoutTapeOrGradInputs) {
  Tensor<double> a = Tensor<double>::from({2}, {1, 2});
  Tensor<double> y = add(a, a);
  EXPECT_NO_THROW(y.mutable_values());
  GradTape<double> tape;
  Tensor<double> z = add(a, a);  // no input requires grad
  EXPECT_EQ(tape.size(), 0u);
  a.set_requires_grad();
  Tensor<double> w = add(a, a);
  EXPECT_EQ(tape.size(), 1u);
  EXPECT_THROW(w.mutable_values(), std::logic_error);
}

TEST(Tensor, BackwardErrors) {
  Tensor<double> a = Tensor<double>::from({2}, {1, 2});
  a.set_requires_grad();
  Tensor<double> detached_loss;
  {
    GradTape<double> other;
    detached_loss = sum(a);
  }
  GradTape<double> tape;
  EXPECT_THROW(tape.backward(detached_loss), std::invalid_argument);
  Tensor<double> vec = mul(a, a);
  EXPECT_THROW(tape.backward(vec), std::invalid_argument);
  Tensor<double> loss = sum(vec);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(Tensor, BackwardVisitsRecordsInReverse) {
  Tensor<double> a = Tensor<double>::from({2}, {1, 2});
  a.set_requires_grad();
  GradTape<double> tape;
  Tensor<double> loss = sum(relu(scale(a, 2.0)));
  tape.backward(loss);
  const auto forward = tape.recorded_ops();
  std::vector<std::string> reversed(forward.rbegin(), forward.rend());
  EXPECT_EQ(tape.backward_order(), reversed);
}

TEST(Tensor, NestedTapesRestoreOuter) {
  GradTape<double> outer;
  EXPECT_EQ(GradTape<double>::active(), &outer);
  {
    GradTape<double> inner;
    EXPECT_EQ(GradTape<double>::active(), &inner);
  }
  EXPECT_EQ(GradTape<double>::active(), &outer);
}

TEST(Tensor, NonFiniteResultsAreRejected) {
  const double inf = std::numeric_limits<double>::infinity();
  Tensor<double> a = Tensor<double>::from({2}, {1e308, 1.0});
  EXPECT_THROW(scale(a, 10.0), std::domain_error);
  Tensor<double> b = Tensor<double>::from({1}, {inf});
  EXPECT_THROW(add(b, b), std::domain_error);
}

TEST(Tensor, DetachAndCast) {
  Tensor<double> a = Tensor<double>::from({2}, {1.5, 2.5});
  Tensor<double> c = a.detach();
  c.mutable_values()[0] = 9.0;
  EXPECT_EQ(a[0], 1.5);
  Tensor<float> f = a.cast<float>();
  EXPECT_EQ(f[1], 2.5f);
}
