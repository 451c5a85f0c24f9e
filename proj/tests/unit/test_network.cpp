#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "aupt/network.hpp"
#include "aupt/ops.hpp"
#include "aupt/random.hpp"
#include "oracles.hpp"

using namespace aupt;

namespace {

struct Row {
  LayerKind kind;
  int filter, stride;
  double drop;
  Shape output;
};

// Reference architecture, written out row by row.
std::vector<Row> reference_rows(Index in_channels, Index outputs) {
  using K = LayerKind;
  return {
      {K::Input, 0, 0, 0.0, {in_channels, 64, 64}},
      {K::Conv, 3, 1, 0.0, {64, 64, 64}},
      {K::Conv, 3, 1, 0.0, {64, 64, 64}},
      {K::MaxPool, 2, 2, 0.25, {64, 32, 32}},
      {K::Conv, 3, 1, 0.0, {128, 32, 32}},
      {K::Conv, 3, 1, 0.0, {128, 32, 32}},
      {K::MaxPool, 2, 2, 0.25, {128, 16, 16}},
      {K::Conv, 3, 1, 0.0, {256, 16, 16}},
      {K::Conv, 3, 1, 0.0, {256, 16, 16}},
      {K::Conv, 3, 1, 0.0, {256, 16, 16}},
      {K::MaxPool, 2, 2, 0.25, {256, 8, 8}},
      {K::Conv, 3, 1, 0.0, {256, 8, 8}},
      {K::Conv, 3, 1, 0.0, {256, 8, 8}},
      {K::Conv, 3, 1, 0.0, {256, 8, 8}},
      {K::MaxPool, 2, 2, 0.25, {256, 4, 4}},
      {K::FullyConnected, 0, 0, 0.5, {1024}},
      {K::FullyConnected, 0, 0, 0.5, {1024}},
      {K::Output, 0, 0, 0.0, {outputs}},
  };
}

Index reference_parameter_count(Index in_channels, Index outputs) {
  Index total = 0;
  Index c = in_channels;
  for (Index w : {64, 64, 128, 128, 256, 256, 256, 256, 256, 256}) {
    total += w * c * 9 + w;
    c = w;
  }
  total += 4096 * 1024 + 1024;
  total += 1024 * 1024 + 1024;
  total += 1024 * outputs + outputs;
  return total;
}

Tensor<float> random_batch(Index b, Index c, std::uint64_t seed) {
  auto rng = keyed_rng(seed, {});
  std::normal_distribution<float> n(0.0f, 0.3f);
  Tensor<float> x({b, c, 64, 64});
  for (Index i = 0; i < x.size(); ++i) x.values()[i] = n(rng);
  return x;
}

}  // namespace

class LayoutAudit : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(LayoutAudit, EveryRowMatchesReference) {
  const auto [channels, outputs] = GetParam();
  const auto layers = vgg13_layout(channels, outputs);
  const auto rows = reference_rows(channels, outputs);
  ASSERT_EQ(layers.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SCOPED_TRACE(layers[i].name);
    EXPECT_EQ(layers[i].kind, rows[i].kind);
    EXPECT_EQ(layers[i].filter, rows[i].filter);
    EXPECT_EQ(layers[i].stride, rows[i].stride);
    EXPECT_EQ(layers[i].drop, rows[i].drop);
    EXPECT_EQ(layers[i].output, rows[i].output);
  }
}

TEST_P(LayoutAudit, ForwardTraceMatchesReferenceShapes) {
  const auto [channels, outputs] = GetParam();
  const auto net = build_vgg13<float>(channels, outputs, 3);
  std::vector<Shape> trace;
  auto rng = keyed_rng(0, {});
  NoGradGuard g;
  const auto y = net.forward(random_batch(1, channels, 1), false, rng, &trace);
  const auto rows = reference_rows(channels, outputs);
  ASSERT_EQ(trace.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(trace[i], rows[i].output) << "row " << i;
  EXPECT_EQ(y.dims(), (Shape{1, outputs}));
}

TEST_P(LayoutAudit, ParameterCount) {
  const auto [channels, outputs] = GetParam();
  EXPECT_EQ(build_vgg13<float>(channels, outputs, 0).parameter_count(), reference_parameter_count(channels, outputs));
}

INSTANTIATE_TEST_SUITE_P(Heads, LayoutAudit,
                         ::testing::Values(std::pair{1, 17}, std::pair{1, 12}, std::pair{3, 17}, std::pair{3, 12}));

TEST(Network, KnownParameterCounts) {
  EXPECT_EQ(build_vgg13<float>(1, 17, 0).parameter_count(), 8766929);
  EXPECT_EQ(build_vgg13<float>(1, 12, 0).parameter_count(), 8761804);
}

TEST(Network, InvalidGeometryIsConfigError) {
  EXPECT_THROW(build_vgg13<float>(2, 17, 0), ConfigError);
  EXPECT_THROW(build_vgg13<float>(1, 0, 0), ConfigError);
  EXPECT_THROW(build_vgg13<float>(1, 17, 0, 3), ConfigError);
}

TEST(Network, WrongInputShapeIsShapeError) {
  const auto net = build_vgg13<float>(1, 17, 0, 16);
  EXPECT_THROW(net.predict(Tensor<float>({2, 1, 32, 32})), ShapeError);
  EXPECT_THROW(net.predict(Tensor<float>({2, 3, 64, 64})), ShapeError);
}

TEST(Network, SameSeedSameParameters) {
  const auto a = build_vgg13<float>(1, 17, 42, 8);
  const auto b = build_vgg13<float>(1, 17, 42, 8);
  const auto c = build_vgg13<float>(1, 17, 43, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.named_parameters().size(); ++i) {
    EXPECT_EQ(a.named_parameters()[i].tensor.values(), b.named_parameters()[i].tensor.values());
    any_diff |= a.named_parameters()[i].tensor.values() != c.named_parameters()[i].tensor.values();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Network, ProbabilitiesInUnitIntervalAndDeterministicInEval) {
  const auto net = build_vgg13<float>(1, 17, 5, 8);
  const auto x = random_batch(4, 1, 2);
  const auto p = net.predict(x);
  ASSERT_EQ(p.dims(), (Shape{4, 17}));
  EXPECT_TRUE((p.values().array() > 0.0f).all() && (p.values().array() < 1.0f).all());
  EXPECT_EQ(net.predict(x).values(), p.values());
}

TEST(Network, TrainingForwardKeyedByRng) {
  const auto net = build_vgg13<float>(1, 17, 5, 8);
  const auto x = random_batch(2, 1, 3);
  NoGradGuard g;
  auto r1 = keyed_rng(1, {7});
  auto r2 = keyed_rng(1, {7});
  auto r3 = keyed_rng(1, {8});
  const auto a = net.forward(x, true, r1);
  EXPECT_EQ(a.values(), net.forward(x, true, r2).values());
  EXPECT_NE(a.values(), net.forward(x, true, r3).values());
}

TEST(Network, CopiesAreDeep) {
  auto a = build_vgg13<float>(1, 17, 5, 16);
  const auto b = a;
  a.parameter("conv1_1.weight").values()[0] += 1.0f;
  EXPECT_NE(a.parameter("conv1_1.weight").values()[0], b.parameter("conv1_1.weight").values()[0]);
}

TEST(ReplaceHead, OnlyHeadChanges) {
  const auto net = build_vgg13<float>(1, 17, 11);
  const auto swapped = replace_head(net, 12, 99);
  std::set<std::string> before, after;
  for (const auto& p : net.named_parameters()) before.insert(p.name);
  for (const auto& p : swapped.named_parameters()) after.insert(p.name);
  EXPECT_EQ(before, after);
  for (const auto& p : net.named_parameters()) {
    const auto& q = swapped.parameter(p.name);
    if (p.name == kHeadWeight || p.name == kHeadBias) continue;
    ASSERT_EQ(p.tensor.dims(), q.dims());
    EXPECT_EQ(std::memcmp(p.tensor.data(), q.data(), sizeof(float) * std::size_t(q.size())), 0) << p.name;
  }
  EXPECT_EQ(swapped.parameter(kHeadWeight).dims(), (Shape{12, 1024}));
  EXPECT_EQ(swapped.parameter(kHeadBias).dims(), (Shape{12}));
  EXPECT_EQ(swapped.num_outputs(), 12);
  EXPECT_EQ(swapped.layers().back().output, (Shape{12}));
}

TEST(ReplaceHead, SameWidthIsFreshHead) {
  const auto net = build_vgg13<float>(1, 17, 11, 16);
  const auto swapped = replace_head(net, 17, 12);
  EXPECT_NE(net.parameter(kHeadWeight).values(), swapped.parameter(kHeadWeight).values());
}

TEST(ReplaceHead, NonPositiveWidthIsConfigError) {
  EXPECT_THROW(replace_head(build_vgg13<float>(1, 17, 0, 16), 0, 1), ConfigError);
}

TEST(ReplaceHead, HeadStatisticsMatchInitScheme) {
  // U(-b, b): mean 0, variance b^2/3, and the sample variance has variance
  // (mu4 - sigma^4)/n with mu4 = b^4/5.
  const auto base = build_vgg13<float>(1, 17, 0);
  const double b = init_bound(1024);
  const double var = b * b / 3.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto head = replace_head(base, 12, seed).parameter(kHeadWeight).values().cast<double>().eval();
    const double n = double(head.size());
    const double mean = head.mean();
    const double sample_var = (head.array() - mean).square().sum() / (n - 1);
    EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / n)) << "seed " << seed;
    EXPECT_LT(std::abs(sample_var - var), 3.0 * std::sqrt((std::pow(b, 4) / 5.0 - var * var) / n)) << "seed " << seed;
    EXPECT_LE(head.cwiseAbs().maxCoeff(), b);
    EXPECT_TRUE((replace_head(base, 12, seed).parameter(kHeadBias).values().array() == 0.0f).all());
  }
}

TEST(Network, CastRoundTripPreservesValues) {
  const auto net = build_vgg13<float>(1, 17, 4, 16);
  const auto back = net.cast<double>().cast<float>();
  for (const auto& p : net.named_parameters()) EXPECT_EQ(p.tensor.values(), back.parameter(p.name).values());
}

// Full network, double precision, central differences on sampled coordinates
// of every parameter tensor. Dropout is active with a fixed mask.
TEST(NetworkGradient, EndToEndMatchesFiniteDifferences) {
  auto net = build_vgg13<float>(1, 17, 21).cast<double>();
  auto rng = keyed_rng(5, {});
  std::normal_distribution<double> n(0.0, 0.3);
  Tensor<double> x({2, 1, 64, 64});
  for (Index i = 0; i < x.size(); ++i) x.values()[i] = n(rng);
  Tensor<double> target({2, 17});
  std::bernoulli_distribution coin(0.5);
  for (Index i = 0; i < target.size(); ++i) target.values()[i] = coin(rng);

  auto loss = [&] {
    auto mask = keyed_rng(77, {});
    return bce_loss(net.forward(x, true, mask), target);
  };
  net.zero_grad();
  loss().backward();

  double worst = 0.0;
  int checked = 0;
  std::uniform_int_distribution<Index> pick;
  for (auto& p : net.named_parameters()) {
    const auto analytic = p.tensor.grad().eval();
    for (int k = 0; k < 4; ++k) {
      // Prefer coordinates with a gradient large enough to measure.
      Index i = 0;
      for (int attempt = 0; attempt < 50; ++attempt) {
        i = pick(rng, decltype(pick)::param_type(0, p.tensor.size() - 1));
        if (std::abs(analytic[i]) > 1e-6) break;
      }
      const double numeric = oracle::central_difference(
          [&] {
            NoGradGuard g;
            return loss().item();
          },
          p.tensor.values()[i], 1e-7);
      const double err = oracle::relative_error(analytic[i], numeric, 1e-7);
      worst = std::max(worst, err);
      EXPECT_LT(err, 1e-3) << p.name << "[" << i << "] analytic " << analytic[i] << " numeric " << numeric;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 26 * 4);
  RecordProperty("max_rel_err", std::to_string(worst));
}
