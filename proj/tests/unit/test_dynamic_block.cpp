#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lcnet/dynamic_block.hpp"
#include "lcnet/error.hpp"
#include "support/gradcheck.hpp"
#include "support/random_nets.hpp"
#include "support/ungated.hpp"

using namespace lcnet;
using lcnet::testing::random_tensor;

namespace {

struct Case {
  BlockKind kind;
  std::int64_t in, out, stride, mid;
};

const std::vector<Case> kCases{
    {BlockKind::basic, 4, 4, 1, 0},
    {BlockKind::basic, 4, 6, 2, 0},
    {BlockKind::bottleneck, 8, 8, 1, 2},
    {BlockKind::bottleneck, 4, 8, 2, 2},
};

BlockSpec<double> random_block(const Case& c, Rng& rng) {
  auto b = make_block<double>(c.kind, c.in, c.out, c.stride, rng, c.mid);
  for (auto& bn : b.bns) lcnet::testing::randomize_bn(bn, rng);
  if (b.projection_bn) lcnet::testing::randomize_bn(*b.projection_bn, rng);
  for (auto* g : {&b.block_gate, &b.channel_gate}) {
    for (auto& v : g->fc.weight.mutable_data()) v = rng.normal(0.0, 0.8);
    for (auto& v : g->fc.bias.mutable_data()) v = rng.uniform(-0.6, 1.4);
  }
  return b;
}

void set_gate(GateNet<double>& g, double bias) {
  for (auto& v : g.fc.weight.mutable_data()) v = 0.0;
  for (auto& v : g.fc.bias.mutable_data()) v = bias;
}

Tensor<double> shortcut(const Tensor<double>& x, const BlockSpec<double>& b) {
  if (!b.has_projection()) return x;
  return batch_norm_eval(conv2d(x, *b.projection), *b.projection_bn);
}

Tensor<double> composed(const Tensor<double>& x, const BlockSpec<double>& b) {
  const auto mode = Relu1Mode::inference();
  auto pooled = global_avg_pool(x);
  auto sl = relu1(linear(pooled, b.block_gate.fc), mode);
  auto sc = relu1(linear(pooled, b.channel_gate.fc), mode);
  auto h = broadcast_mul(relu(batch_norm_eval(conv2d(x, b.convs[0]), b.bns[0])), sc);
  h = batch_norm_eval(conv2d(h, b.convs[1]), b.bns[1]);
  if (b.kind == BlockKind::bottleneck) h = batch_norm_eval(conv2d(relu(h), b.convs[2]), b.bns[2]);
  return add(broadcast_mul(h, reshape(sl, {x.dim(0)})), shortcut(x, b));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Block, ProjectionPresentIffNeeded) {
  Rng rng(1);
  for (const auto& c : kCases) {
    auto b = make_block<double>(c.kind, c.in, c.out, c.stride, rng, c.mid);
    EXPECT_EQ(b.has_projection(), c.stride != 1 || c.in != c.out);
    EXPECT_NO_THROW(b.validate());
  }
}

TEST(Block, ValidateRejectsBrokenChannels) {
  Rng rng(2);
  auto b = make_block<double>(BlockKind::basic, 4, 4, 1, rng);
  b.convs[1] = make_conv2d<double>(3, 4, 3, 1, 1, false, rng);
  EXPECT_THROW(b.validate(), ShapeError);
  auto p = make_block<double>(BlockKind::basic, 4, 8, 2, rng);
  p.projection.reset();
  EXPECT_THROW(p.validate(), ShapeError);
}

TEST(Block, AllOnEqualsPlainResidualBlock) {
  Rng rng(3);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    set_gate(b.block_gate, 1.0);
    set_gate(b.channel_gate, 1.0);
    auto x = random_tensor<double>({3, c.in, 6, 6}, rng);
    auto got = block_forward_dense(x, b, ForwardMode::eval()).output;
    auto want = lcnet::testing::ungated_block(x, b, false);
    EXPECT_LT(max_abs_diff(got, want), 1e-12);
  }
}

TEST(Block, GateOffIdentityShortcutIsIdentity) {
  Rng rng(4);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    set_gate(b.block_gate, -1.0);
    auto x = random_tensor<double>({2, c.in, 6, 6}, rng);
    auto dense = block_forward_dense(x, b, ForwardMode::eval());
    auto skip = block_forward_skipping(x, b);
    const auto sc = shortcut(x, b);
    for (std::int64_t i = 0; i < sc.numel(); ++i) {
      EXPECT_EQ(skip.output.data()[i], sc.data()[i]);
      if (!b.has_projection()) EXPECT_EQ(dense.output.data()[i], x.data()[i]);
    }
    for (const auto& t : skip.traces) EXPECT_FALSE(t.executed);
  }
}

TEST(Block, DenseEqualsHandComposition) {
  Rng rng(5);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    auto x = random_tensor<double>({4, c.in, 6, 6}, rng);
    EXPECT_LT(max_abs_diff(block_forward_dense(x, b, ForwardMode::eval()).output, composed(x, b)), 1e-6);
  }
}

TEST(Block, AllChannelsOffStillRunsTail) {
  Rng rng(6);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    set_gate(b.block_gate, 0.7);
    set_gate(b.channel_gate, -1.0);
    auto x = random_tensor<double>({2, c.in, 6, 6}, rng);
    auto dense = block_forward_dense(x, b, ForwardMode::eval()).output;
    auto skip = block_forward_skipping(x, b);
    EXPECT_LT(max_abs_diff(dense, skip.output), 1e-12);
    EXPECT_GT(max_abs_diff(dense, shortcut(x, b)), 0.0);
    for (const auto& t : skip.traces) {
      EXPECT_TRUE(t.executed);
      EXPECT_EQ(t.active_channels, 0);
    }
  }
}

TEST(Block, SkippingMatchesDenseOnRandomGates) {
  Rng rng(7);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    auto x = random_tensor<double>({100, c.in, 6, 6}, rng);
    auto dense = block_forward_dense(x, b, ForwardMode::eval());
    auto skip = block_forward_skipping(x, b);
    EXPECT_LT(max_abs_diff(dense.output, skip.output), 1e-5);
    ASSERT_EQ(skip.traces.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) {
      EXPECT_EQ(skip.traces[i].salience.block_salience, dense.traces[i].salience.block_salience);
      EXPECT_EQ(skip.traces[i].salience.channel_salience, dense.traces[i].salience.channel_salience);
    }
  }
}

TEST(Block, SkippingMatchesDenseAfterTraining) {
  Rng rng(8);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    std::vector<Tensor<double>*> params;
    for (auto& cv : b.convs) params.push_back(&cv.weight);
    for (auto& bn : b.bns) {
      params.push_back(&bn.scale);
      params.push_back(&bn.shift);
    }
    params.push_back(&b.block_gate.fc.weight);
    params.push_back(&b.block_gate.fc.bias);
    params.push_back(&b.channel_gate.fc.weight);
    params.push_back(&b.channel_gate.fc.bias);
    for (auto* p : params) p->set_requires_grad(true);
    for (int step = 0; step < 5; ++step) {
      auto x = random_tensor<double>({8, c.in, 6, 6}, rng);
      auto target = random_tensor<double>({8, c.out, 6 / c.stride, 6 / c.stride}, rng);
      for (auto* p : params) p->zero_grad();
      auto r = block_forward_dense(x, b, ForwardMode::train(0.01));
      mean(mul(sub(r.output, target), sub(r.output, target))).backward();
      for (auto* p : params) {
        auto w = p->mutable_data();
        const auto g = p->grad();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.05 * g[i];
      }
    }
    auto x = random_tensor<double>({100, c.in, 6, 6}, rng);
    NoGradGuard guard;
    auto dense = block_forward_dense(x, b, ForwardMode::eval()).output;
    EXPECT_LT(max_abs_diff(dense, block_forward_skipping(x, b).output), 1e-5);
  }
}

TEST(Block, TraceFidelity) {
  Rng rng(9);
  for (const auto& c : kCases) {
    auto b = random_block(c, rng);
    auto x = random_tensor<double>({50, c.in, 6, 6}, rng);
    for (const auto& t : block_forward_skipping(x, b, 3).traces) {
      EXPECT_TRUE(t.consistent());
      EXPECT_EQ(t.block_index, 3u);
      EXPECT_EQ(t.executed, t.salience.block_salience > 0.0);
      std::int64_t active = 0;
      for (double s : t.salience.channel_salience) active += s > 0.0 ? 1 : 0;
      EXPECT_EQ(t.active_channels, active);
    }
  }
}

TEST(Block, GradientsThroughGatedBlock) {
  Rng rng(10);
  auto b = make_block<double>(BlockKind::basic, 2, 3, 2, rng);
  for (auto* g : {&b.block_gate, &b.channel_gate}) {
    for (auto& v : g->fc.weight.mutable_data()) v = rng.normal(0.0, 0.3);
    for (auto& v : g->fc.bias.mutable_data()) v = 0.5;
  }
  auto x = random_tensor<double>({2, 2, 4, 4}, rng, 1.0, true);
  std::vector<Tensor<double>> leaves{x};
  for (auto* t : {&b.convs[0].weight, &b.convs[1].weight, &b.bns[0].scale, &b.block_gate.fc.weight,
                  &b.channel_gate.fc.bias, &b.projection->weight}) {
    t->set_requires_grad(true);
    leaves.push_back(*t);
  }
  auto w = random_tensor<double>({2, 3, 2, 2}, rng);
  auto f = [&] {
    auto local = b;
    return sum(mul(block_forward_dense(x, local, ForwardMode::train(0.01)).output, w));
  };
  const auto r = lcnet::testing::gradcheck(f, leaves);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Block, NonFiniteInputRaises) {
  Rng rng(11);
  auto b = make_block<double>(BlockKind::basic, 2, 2, 1, rng);
  auto x = Tensor<double>::full({1, 2, 4, 4}, std::nan(""));
  EXPECT_THROW(block_forward_dense(x, b, ForwardMode::eval()), NumericError);
}
