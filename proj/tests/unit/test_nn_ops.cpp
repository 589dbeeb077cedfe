#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lcnet/error.hpp"
#include "lcnet/nn_ops.hpp"
#include "support/gradcheck.hpp"
#include "support/naive_conv.hpp"
#include "support/random_nets.hpp"

using namespace lcnet;
using lcnet::testing::gradcheck;
using lcnet::testing::random_tensor;

namespace {

Conv2dParams<double> conv_from(Tensor<double> w, std::int64_t stride, std::int64_t pad, Tensor<double> bias = {}) {
  Conv2dParams<double> p;
  p.weight = std::move(w);
  p.bias = std::move(bias);
  p.stride = stride;
  p.padding = pad;
  return p;
}

}  // namespace

TEST(Conv2d, OnesKernelSumsWindow) {
  auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, conv_from(Tensor<double>::full({1, 1, 3, 3}, 1.0), 1, 0));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  auto w = Tensor<double>::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.mutable_data()[c * 3 + c] = 1.0;
  auto y = conv2d(x, conv_from(w, 1, 0));
  ASSERT_EQ(y.shape(), x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, MatchesNaiveReference) {
  Rng rng(2);
  auto x = random_tensor<double>({2, 3, 5, 5}, rng);
  auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto y = conv2d(x, conv_from(w, 1, 1, b));
  std::int64_t oh = 0, ow = 0;
  const auto ref = lcnet::testing::naive_conv2d(x.data(), 2, 3, 5, 5, w.data(), 4, 3, 3, b.data(), 1, 1, oh, ow);
  ASSERT_EQ(y.shape(), (Shape{2, 4, oh, ow}));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-6);
}

TEST(Conv2d, GridMatchesNaiveReference) {
  Rng rng(3);
  for (std::int64_t k : {1, 3})
    for (std::int64_t s : {1, 2})
      for (std::int64_t pad : {0, 1}) {
        auto x = random_tensor<double>({2, 4, 8, 8}, rng);
        auto w = random_tensor<double>({3, 4, k, k}, rng);
        auto y = conv2d(x, conv_from(w, s, pad));
        std::int64_t oh = 0, ow = 0;
        const auto ref = lcnet::testing::naive_conv2d(x.data(), 2, 4, 8, 8, w.data(), 3, k, k, {}, s, pad, oh, ow);
        ASSERT_EQ(y.shape(), (Shape{2, 3, oh, ow}));
        double worst = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y.data()[i] - ref[i]));
        EXPECT_LT(worst, 1e-6) << "k=" << k << " s=" << s << " pad=" << pad;
      }
}

TEST(Conv2d, ChannelMismatchThrows) {
  Rng rng(4);
  auto x = random_tensor<double>({1, 2, 4, 4}, rng);
  EXPECT_THROW(conv2d(x, conv_from(random_tensor<double>({1, 3, 3, 3}, rng), 1, 1)), ShapeError);
}

TEST(Conv2d, Gradients) {
  Rng rng(5);
  auto x = random_tensor<double>({2, 2, 5, 5}, rng, 1.0, true);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng, 0.5, true);
  auto b = random_tensor<double>({3}, rng, 0.5, true);
  const auto p = conv_from(w, 2, 1, b);
  auto r = gradcheck([&] { return sum(mul(conv2d(x, p), conv2d(x, p))); }, {x, w, b});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Pool, ConstantMap) {
  auto y = global_avg_pool(Tensor<double>::full({1, 2, 3, 3}, 0.75));
  EXPECT_EQ(y.data()[0], 0.75);
  EXPECT_EQ(y.data()[1], 0.75);
}

TEST(Pool, ArithmeticMean) {
  auto y = global_avg_pool(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(y.item(), 2.5);
}

TEST(Pool, MatchesSummationOracle) {
  Rng rng(6);
  auto x = random_tensor<double>({3, 4, 5, 6}, rng);
  auto y = global_avg_pool(x);
  for (std::int64_t n = 0; n < 3; ++n)
    for (std::int64_t c = 0; c < 4; ++c) {
      double s = 0.0;
      for (std::int64_t i = 0; i < 30; ++i) s += x.data()[(n * 4 + c) * 30 + i];
      EXPECT_NEAR(y.data()[n * 4 + c], s / 30.0, 1e-6);
    }
}

TEST(Linear, IdentityWeights) {
  LinearParams<double> p{Tensor<double>({2, 2}, {1, 0, 0, 1}), Tensor<double>::zeros({2})};
  auto y = linear(Tensor<double>({1, 2}, {0.3, -4.0}), p);
  EXPECT_EQ(y.data()[0], 0.3);
  EXPECT_EQ(y.data()[1], -4.0);
}

TEST(Linear, BiasPassthrough) {
  LinearParams<double> p{Tensor<double>::zeros({1, 3}), Tensor<double>({1}, {0.7})};
  Rng rng(7);
  auto y = linear(random_tensor<double>({4, 3}, rng), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.7);
}

TEST(Linear, Gradients) {
  Rng rng(8);
  auto x = random_tensor<double>({3, 4}, rng, 1.0, true);
  LinearParams<double> p{random_tensor<double>({2, 4}, rng, 1.0, true), random_tensor<double>({2}, rng, 1.0, true)};
  auto r = gradcheck([&] { auto y = linear(x, p); return sum(mul(y, y)); }, {x, p.weight, p.bias});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(BatchNorm, EvalUnitStatsIsNearIdentity) {
  auto p = make_batch_norm<double>(2);
  Rng rng(9);
  auto x = random_tensor<double>({2, 2, 3, 3}, rng);
  auto y = batch_norm_eval(x, p);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5 * std::abs(x.data()[i]) + 1e-12);
}

TEST(BatchNorm, EvalZeroScaleIsShift) {
  auto p = make_batch_norm<double>(2);
  for (auto& v : p.scale.mutable_data()) v = 0.0;
  for (auto& v : p.shift.mutable_data()) v = 5.0;
  Rng rng(10);
  auto y = batch_norm(random_tensor<double>({2, 2, 3, 3}, rng), p, false);
  for (double v : y.data()) EXPECT_EQ(v, 5.0);
}

TEST(BatchNorm, EvalNeverMutatesRunningStats) {
  auto p = make_batch_norm<double>(3);
  Rng rng(11);
  lcnet::testing::randomize_bn(p, rng);
  const auto mean = p.running_mean;
  const auto var = p.running_var;
  for (int i = 0; i < 3; ++i) batch_norm(random_tensor<double>({2, 3, 4, 4}, rng), p, false);
  EXPECT_EQ(p.running_mean, mean);
  EXPECT_EQ(p.running_var, var);
}

TEST(BatchNorm, TrainingUpdatesRunningStats) {
  auto p = make_batch_norm<double>(1);
  auto x = Tensor<double>({2, 1, 1, 2}, {1, 2, 3, 4});
  batch_norm(x, p, true);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.5, 1e-12);
  // unbiased batch variance 5/3
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(BatchNorm, TrainingGradients) {
  Rng rng(12);
  auto x = random_tensor<double>({2, 3, 3, 3}, rng, 1.0, true);
  auto p = make_batch_norm<double>(3);
  p.scale = random_tensor<double>({3}, rng, 1.0, true);
  p.shift = random_tensor<double>({3}, rng, 1.0, true);
  auto w = random_tensor<double>({2, 3, 3, 3}, rng);
  auto r = gradcheck([&] { return sum(mul(batch_norm(x, p, true), w)); }, {x, p.scale, p.shift});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Relu, Examples) {
  auto y = relu(Tensor<double>({2}, {-1.0, 2.0}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 2.0);
}

TEST(Relu, GradientIsIndicator) {
  Tensor<double> x({4}, {-1.5, -0.2, 0.3, 2.0}, true);
  sum(relu(x)).backward();
  EXPECT_EQ((std::vector<double>(x.grad().begin(), x.grad().end())), (std::vector<double>{0, 0, 1, 1}));
  auto r = gradcheck([&] { return sum(relu(x)); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(CrossEntropy, UniformLogits) {
  auto loss = cross_entropy(Tensor<double>::zeros({3, 10}), std::vector<int>{0, 4, 9});
  EXPECT_NEAR(loss.item(), std::log(10.0), 1e-12);
}

TEST(CrossEntropy, LargeMarginGoesToZero) {
  Tensor<double> logits({2, 3}, {100, 0, 0, 0, 0, 100});
  EXPECT_LT(cross_entropy(logits, std::vector<int>{0, 2}).item(), 1e-30);
}

TEST(CrossEntropy, Gradients) {
  Rng rng(13);
  auto logits = random_tensor<double>({4, 5}, rng, 2.0, true);
  const std::vector<int> labels{0, 3, 4, 1};
  auto r = gradcheck([&] { return cross_entropy(logits, labels); }, {logits});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(CrossEntropy, BadLabelThrows) {
  EXPECT_THROW(cross_entropy(Tensor<double>::zeros({1, 3}), std::vector<int>{3}), Error);
}
