#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lcnet/error.hpp"
#include "lcnet/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/random_nets.hpp"

using namespace lcnet;
using lcnet::testing::gradcheck;
using lcnet::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Tensor, AddElementwise) {
  Tensor<double> a({2}, {1, 2});
  Tensor<double> b({2}, {3, 4});
  EXPECT_EQ(values(add(a, b)), (std::vector<double>{4, 6}));
}

TEST(Tensor, MulByZeroIsZeroOfSameShape) {
  Rng rng(3);
  auto x = random_tensor<double>({2, 3, 4}, rng);
  auto z = mul(x, Tensor<double>::zeros({2, 3, 4}));
  EXPECT_EQ(z.shape(), x.shape());
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, ShapeMismatchThrows) {
  Tensor<double> a({2}, {1, 2});
  Tensor<double> b({3}, {1, 2, 3});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Autograd, LinearScalar) {
  auto w = Tensor<double>::scalar(1.5, true);
  sum(scale(w, 2.0)).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
}

TEST(Autograd, Square) {
  auto w = Tensor<double>::scalar(3.0, true);
  sum(mul(w, w)).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
}

TEST(Autograd, TensorUsedTwiceSumsPathGradients) {
  Tensor<double> x({3}, {1.0, -2.0, 0.5}, true);
  // 3x + x*x
  sum(add(scale(x, 3.0), mul(x, x))).backward();
  const std::vector<double> expect{3 + 2 * 1.0, 3 + 2 * -2.0, 3 + 2 * 0.5};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], expect[i]);
}

TEST(Autograd, GradientsAccumulateUntilZeroed) {
  auto w = Tensor<double>::scalar(2.0, true);
  sum(scale(w, 4.0)).backward();
  sum(scale(w, 4.0)).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 8.0);
  w.zero_grad();
  sum(scale(w, 4.0)).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 4.0);
}

TEST(Autograd, NonScalarBackwardThrows) {
  Tensor<double> x({2}, {1, 2}, true);
  EXPECT_THROW(add(x, x).backward(), AutogradError);
}

TEST(Autograd, ComposedGraphMatchesFiniteDifferences) {
  Rng rng(11);
  auto a = random_tensor<double>({2, 3, 2, 2}, rng, 1.0, true);
  auto s = random_tensor<double>({2, 3}, rng, 1.0, true);
  auto b = random_tensor<double>({2, 3, 2, 2}, rng, 1.0, true);
  auto f = [&] {
    auto y = broadcast_mul(mul(a, b), s);
    return mean(abs(sub(y, scale(reshape(b, {2, 3, 2, 2}), 0.3))));
  };
  const auto r = gradcheck(f, {a, s, b});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Autograd, ForwardIndependentOfRequiresGrad) {
  Rng rng(5);
  auto a = random_tensor<double>({4, 4}, rng);
  auto b = random_tensor<double>({4, 4}, rng);
  const auto plain = values(mean(mul(a, b)));
  auto ag = a.clone().set_requires_grad(true);
  auto bg = b.clone().set_requires_grad(true);
  EXPECT_EQ(values(mean(mul(ag, bg))), plain);
}

TEST(Autograd, NoGradGuardStopsRecording) {
  Tensor<double> x({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = sum(mul(x, x));
  EXPECT_FALSE(y.requires_grad());
}
