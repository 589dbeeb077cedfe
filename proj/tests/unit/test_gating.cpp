#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lcnet/error.hpp"
#include "lcnet/gating.hpp"
#include "lcnet/optimizer.hpp"
#include "support/gradcheck.hpp"
#include "support/random_nets.hpp"

using namespace lcnet;
using lcnet::testing::gradcheck;
using lcnet::testing::random_tensor;

namespace {

double three_branch(double x) {
  if (x <= 0.0) return 0.0;
  if (x <= 1.0) return x;
  return 1.0;
}

GateNet<double> constant_gate(GateKind kind, std::int64_t in, std::int64_t out, double bias) {
  GateNet<double> g;
  g.kind = kind;
  g.fc.weight = Tensor<double>::zeros({out, in});
  g.fc.bias = Tensor<double>::full({out}, bias);
  return g;
}

}  // namespace

TEST(Relu1, StandardExamples) {
  const auto m = Relu1Mode::inference();
  EXPECT_EQ(relu1_value(-0.5, m), 0.0);
  EXPECT_EQ(relu1_value(0.3, m), 0.3);
  EXPECT_EQ(relu1_value(2.0, m), 1.0);
}

TEST(Relu1, LeakyExamples) {
  const auto m = Relu1Mode::training(0.01);
  EXPECT_DOUBLE_EQ(relu1_value(-1.0, m), -0.01);
  EXPECT_DOUBLE_EQ(relu1_value(2.0, m), 1.01);
  EXPECT_EQ(relu1_value(0.4, m), 0.4);
}

TEST(Relu1, InferenceEqualsLeakyWithZeroLeak) {
  Rng rng(1);
  const auto zero_leak = Relu1Mode::training(0.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(-3.0, 4.0);
    EXPECT_EQ(relu1_value(x, Relu1Mode::inference()), relu1_value(x, zero_leak));
  }
}

TEST(Relu1, MonotoneInBothModes) {
  Rng rng(2);
  std::vector<double> xs(2000);
  for (auto& x : xs) x = rng.uniform(-5.0, 5.0);
  std::sort(xs.begin(), xs.end());
  for (const auto& m : {Relu1Mode::inference(), Relu1Mode::training(0.01)}) {
    for (std::size_t i = 1; i < xs.size(); ++i) EXPECT_LE(relu1_value(xs[i - 1], m), relu1_value(xs[i], m));
  }
}

TEST(Relu1, TensorOpMatchesScalarFormula) {
  Rng rng(3);
  auto x = random_tensor<double>({50, 4}, rng, 2.0);
  for (const auto& m : {Relu1Mode::inference(), Relu1Mode::training(0.05)}) {
    auto y = relu1(x, m);
    for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], relu1_value(x.data()[i], m));
  }
  auto y = relu1(x, Relu1Mode::inference());
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], three_branch(x.data()[i]));
}

TEST(Relu1, LeakyGradients) {
  // keep inputs away from the kinks at 0 and 1
  Tensor<double> x({6}, {-2.0, -0.4, 0.2, 0.7, 1.3, 3.0}, true);
  auto r = gradcheck([&] { return sum(mul(relu1(x, Relu1Mode::training(0.01)), x)); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Relu1, InvalidModeRejected) {
  Relu1Mode m = Relu1Mode::inference();
  m.leak = 0.1;
  EXPECT_THROW(m.validate(), Error);
}

TEST(Gates, ZeroWeightsBiasOneFullyOn) {
  Rng rng(4);
  auto x = random_tensor<double>({3, 4, 5, 5}, rng, 3.0);
  auto sl = lnet_forward(x, constant_gate(GateKind::block_gate, 4, 1, 1.0), Relu1Mode::inference());
  auto sc = cnet_forward(x, constant_gate(GateKind::channel_gate, 4, 6, 1.0), Relu1Mode::inference());
  ASSERT_EQ(sl.shape(), (Shape{3}));
  ASSERT_EQ(sc.shape(), (Shape{3, 6}));
  for (double v : sl.data()) EXPECT_EQ(v, 1.0);
  for (double v : sc.data()) EXPECT_EQ(v, 1.0);
}

TEST(Gates, BiasMinusOneFullyOff) {
  Rng rng(5);
  auto x = random_tensor<double>({3, 4, 5, 5}, rng, 3.0);
  auto sl = lnet_forward(x, constant_gate(GateKind::block_gate, 4, 1, -1.0), Relu1Mode::inference());
  auto sc = cnet_forward(x, constant_gate(GateKind::channel_gate, 4, 6, -1.0), Relu1Mode::inference());
  for (double v : sl.data()) EXPECT_EQ(v, 0.0);
  for (double v : sc.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gates, EqualsCompositionOfPrimitives) {
  Rng rng(6);
  auto x = random_tensor<double>({4, 5, 3, 3}, rng);
  auto g = make_gate<double>(GateKind::channel_gate, 5, 7, rng);
  g.fc.weight = random_tensor<double>({7, 5}, rng);
  const auto mode = Relu1Mode::inference();
  auto got = cnet_forward(x, g, mode);
  auto want = relu1(linear(global_avg_pool(x), g.fc), mode);
  for (std::int64_t i = 0; i < got.numel(); ++i) EXPECT_EQ(got.data()[i], want.data()[i]);
}

TEST(Gates, ExactZeroWheneverPreactivationNonPositive) {
  Rng rng(7);
  auto x = random_tensor<double>({20, 4, 2, 2}, rng);
  auto g = make_gate<double>(GateKind::channel_gate, 4, 8, rng);
  g.fc.weight = random_tensor<double>({8, 4}, rng);
  g.fc.bias = random_tensor<double>({8}, rng, 0.3);
  auto pre = linear(global_avg_pool(x), g.fc);
  auto s = cnet_forward(x, g, Relu1Mode::inference());
  int zeros = 0;
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    if (pre.data()[i] <= 0.0) {
      EXPECT_EQ(s.data()[i], 0.0);
      ++zeros;
    }
  }
  EXPECT_GT(zeros, 0);
}

TEST(Gates, FreshGateStartsOpen) {
  Rng rng(8);
  auto g = make_gate<double>(GateKind::block_gate, 16, 1, rng);
  EXPECT_EQ(g.fc.bias.data()[0], 1.0);
  double sq = 0.0;
  for (double w : g.fc.weight.data()) sq += w * w;
  EXPECT_LT(std::sqrt(sq / 16.0), 0.05);
}

TEST(Gates, ShapeValidation) {
  Rng rng(9);
  auto g = make_gate<double>(GateKind::channel_gate, 4, 8, rng);
  EXPECT_NO_THROW(g.validate(4, 8));
  EXPECT_THROW(g.validate(5, 8), ShapeError);
  EXPECT_THROW(g.validate(4, 9), ShapeError);
}

TEST(Penalty, LambdaZero) {
  SalienceTensors<double> s{Tensor<double>({1}, {0.5}), Tensor<double>({1, 2}, {0.25, 0.25})};
  std::vector<SalienceTensors<double>> v{s};
  EXPECT_EQ(gate_l1_penalty<double>(v, 0.0).item(), 0.0);
}

TEST(Penalty, SingleRecordSum) {
  SalienceTensors<double> s{Tensor<double>({1}, {0.5}), Tensor<double>({1, 2}, {0.25, 0.25})};
  std::vector<SalienceTensors<double>> v{s};
  EXPECT_DOUBLE_EQ(gate_l1_penalty<double>(v, 1.0).item(), 1.0);
}

TEST(Penalty, SgdStepDecreasesSaliences) {
  Rng rng(10);
  auto x = random_tensor<double>({8, 4, 3, 3}, rng);
  auto gl = make_gate<double>(GateKind::block_gate, 4, 1, rng);
  auto gc = make_gate<double>(GateKind::channel_gate, 4, 5, rng);
  for (auto* g : {&gl, &gc}) {
    g->fc.bias = Tensor<double>::full({g->out_features()}, 0.6, true);
    g->fc.weight.set_requires_grad(true);
  }
  const auto mode = Relu1Mode::training(0.01);
  auto total = [&] {
    auto pooled = global_avg_pool(x);
    SalienceTensors<double> s{gate_from_pooled(pooled, gl, mode), gate_from_pooled(pooled, gc, mode)};
    std::vector<SalienceTensors<double>> v{s};
    return gate_l1_penalty<double>(v, 1e-2);
  };
  const double before = total().item();
  total().backward();
  for (auto* g : {&gl, &gc}) {
    for (auto* t : {&g->fc.weight, &g->fc.bias}) {
      std::vector<double> vel(static_cast<std::size_t>(t->numel()), 0.0);
      sgd_nesterov_step<double>(t->mutable_data(), t->grad(), vel, 0.1, 0.0, 0.0);
    }
  }
  EXPECT_LT(total().item(), before);
}

TEST(SalienceTensors, RecordExtractsInstance) {
  SalienceTensors<double> s{Tensor<double>({2}, {0.0, 0.6}), Tensor<double>({2, 3}, {1, 0, 0.5, 0.2, 0.3, 0})};
  const auto r = s.record(1);
  EXPECT_EQ(r.block_salience, 0.6);
  EXPECT_EQ(r.channel_salience, (std::vector<double>{0.2, 0.3, 0.0}));
}
