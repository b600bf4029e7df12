#include <gtest/gtest.h>

#include <random>

#include "mvclip/model.hpp"
#include "test_util.hpp"

using namespace mvclip;
using testutil::random_tensor;

namespace {

template <typename T>
AttentionParams<T> make_attention(ParameterRegistry<T>& reg, std::size_t d, std::size_t heads, std::uint64_t seed,
                                  double std = 0.3) {
  for (const char* n : {"q_proj", "k_proj", "v_proj", "out_proj"}) {
    reg.declare(std::string("attn.") + n + ".weight", Shape{d, d}, Init::kTruncNormal, std);
    reg.declare(std::string("attn.") + n + ".bias", Shape{d}, Init::kTruncNormal, std);
  }
  reg.materialize(seed);
  return load_attention(reg, "attn", heads);
}

oracle::AttentionWeights oracle_weights(const AttentionParams<double>& p) {
  return {testutil::to_matrix(p.q.weight), testutil::to_matrix(p.k.weight), testutil::to_matrix(p.v.weight),
          testutil::to_matrix(p.out.weight), testutil::to_vector(p.q.bias),  testutil::to_vector(p.k.bias),
          testutil::to_vector(p.v.bias),     testutil::to_vector(p.out.bias)};
}

}  // namespace

TEST(PatchEmbed, TokenCounts) {
  for (auto [p, expected] : {std::pair<std::size_t, std::size_t>{32, 49}, {16, 196}}) {
    ParameterRegistry<float> reg;
    declare_linear(reg, "pe", p * p * 3, 4);
    reg.materialize(0);
    auto tokens = patch_embed(Tensor<float>({224, 224, 3}, 0.5f), p, load_linear(reg, "pe"));
    EXPECT_EQ(tokens.shape(), (Shape{expected, 4}));
  }
}

TEST(PatchEmbed, ConstantImageGivesIdenticalTokens) {
  ParameterRegistry<float> reg;
  declare_linear(reg, "pe", 8 * 8 * 3, 6);
  reg.materialize(1);
  auto tokens = patch_embed(Tensor<float>({32, 32, 3}, 0.7f), 8, load_linear(reg, "pe"));
  for (std::size_t i = 1; i < tokens.dim(0); ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(tokens(i, j), tokens(0, j));
}

TEST(PatchEmbed, IndivisibleSizeRejected) {
  ParameterRegistry<float> reg;
  declare_linear(reg, "pe", 8 * 8 * 3, 6);
  reg.materialize(1);
  EXPECT_THROW(patch_embed(Tensor<float>({30, 32, 3}), 8, load_linear(reg, "pe")), ShapeError);
}

TEST(AssembleSequence, ClassTokenAndPositions) {
  std::mt19937_64 rng(1);
  const std::size_t l = 49, d = 8;
  auto cls = random_tensor<float>({1, d}, rng);
  auto patches = random_tensor<float>({l, d}, rng);
  auto z = assemble_sequence(Tensor<float>({l, d}), cls, Tensor<float>({l + 1, d}));
  EXPECT_EQ(z.shape(), (Shape{50, 8}));
  for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(z(0, j), cls(0, j));
  auto z2 = assemble_sequence(patches, cls, Tensor<float>({l + 1, d}));
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(z2(i + 1, j), patches(i, j));
  EXPECT_THROW(assemble_sequence(patches, cls, Tensor<float>({l, d})), ShapeError);
}

TEST(Attention, ZeroValuesGiveOutputBias) {
  ParameterRegistry<double> reg;
  auto p = make_attention(reg, 4, 2, 3);
  std::fill(p.v.weight.storage().begin(), p.v.weight.storage().end(), 0.0);
  std::fill(p.v.bias.storage().begin(), p.v.bias.storage().end(), 0.0);
  std::mt19937_64 rng(4);
  auto y = mha_forward(random_tensor<double>({5, 4}, rng), p, false);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y(i, j), p.out.bias.data()[j]);
}

TEST(Attention, SingleTokenAttendsToItself) {
  ParameterRegistry<double> reg;
  auto p = make_attention(reg, 4, 2, 5);
  std::mt19937_64 rng(6);
  AttentionTrace<double> trace;
  mha_forward(random_tensor<double>({1, 4}, rng, -10, 10), p, false, &trace);
  for (const auto& w : trace.weights) EXPECT_EQ(w.item(), 1.0);
}

TEST(Attention, MatchesBruteForceOracle) {
  std::mt19937_64 rng(7);
  for (auto [t, d, h] : {std::tuple<std::size_t, std::size_t, std::size_t>{5, 8, 2}, {8, 6, 3}, {3, 4, 1}, {7, 8, 4}}) {
    for (bool causal : {false, true}) {
      ParameterRegistry<double> reg;
      auto p = make_attention(reg, d, h, rng());
      auto x = random_tensor<double>({t, d}, rng);
      auto y = mha_forward(x, p, causal);
      auto ref = oracle::attention(testutil::to_matrix(x), oracle_weights(p), h, causal);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(y(i, j), ref[i][j], 1e-5);
    }
  }
}

TEST(Attention, CausalMaskBlocksFutureTokens) {
  ParameterRegistry<float> reg;
  auto p = make_attention(reg, 8, 2, 8);
  std::mt19937_64 rng(9);
  auto x = random_tensor<float>({6, 8}, rng);
  auto base = mha_forward(x, p, true);
  for (std::size_t j = 1; j < 6; ++j) {
    auto x2 = x.detach();
    for (std::size_t c = 0; c < 8; ++c) x2(j, c) += 3.0f;
    auto y = mha_forward(x2, p, true);
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y(i, c), base(i, c)) << "row " << i << " changed by token " << j;
  }
}

TEST(Attention, WeightRowsSumToOne) {
  ParameterRegistry<float> reg;
  auto p = make_attention(reg, 8, 4, 10, 1.0);
  std::mt19937_64 rng(11);
  AttentionTrace<float> trace;
  mha_forward(random_tensor<float>({7, 8}, rng, -5, 5), p, false, &trace);
  ASSERT_EQ(trace.weights.size(), 4u);
  for (const auto& w : trace.weights)
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) s += w(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Attention, HeadDivisibility) {
  ParameterRegistry<float> reg;
  auto p = make_attention(reg, 6, 4, 12);
  EXPECT_THROW(mha_forward(Tensor<float>({2, 6}), p, false), ShapeError);
}

TEST(Mlp, ZeroWeightsGiveZeros) {
  ParameterRegistry<float> reg;
  reg.declare("mlp.fc1.weight", Shape{4, 16}, Init::kZeros);
  reg.declare("mlp.fc1.bias", Shape{16}, Init::kZeros);
  reg.declare("mlp.fc2.weight", Shape{16, 4}, Init::kZeros);
  reg.declare("mlp.fc2.bias", Shape{4}, Init::kZeros);
  reg.materialize(0);
  std::mt19937_64 rng(13);
  auto y = mlp_forward(random_tensor<float>({3, 4}, rng), load_mlp(reg, "mlp"));
  EXPECT_EQ(y.shape(), (Shape{3, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Mlp, ScalarChainByHand) {
  // D = 1, hidden 4: y = sum_k w2_k * gelu(w1_k * x + b1_k) + b2.
  ParameterRegistry<double> reg;
  declare_mlp(reg, "mlp", 1);
  reg.materialize(0);
  auto p = load_mlp(reg, "mlp");
  const std::vector<double> w1{0.5, -1.0, 2.0, 0.25}, b1{0.1, 0.0, -0.3, 1.0}, w2{1.0, 2.0, -0.5, 0.75};
  const double b2 = 0.2, x = 0.8;
  p.expand.weight.storage() = w1;
  p.expand.bias.storage() = b1;
  p.contract.weight.storage() = w2;
  p.contract.bias.storage() = {b2};
  double expected = b2;
  for (int k = 0; k < 4; ++k) expected += w2[k] * oracle::gelu(w1[k] * x + b1[k]);
  EXPECT_NEAR(mlp_forward(Tensor<double>({1, 1}, x), p).item(), expected, 1e-12);
}

TEST(ParamCount, SingleLinear) {
  ParameterRegistry<float> reg;
  declare_linear(reg, "fc", 768, 768);
  EXPECT_EQ(param_count(reg), 590592u);
}

TEST(ParamCount, RegistryOrderAndUniqueness) {
  ParameterRegistry<float> reg;
  reg.declare("b", Shape{2});
  reg.declare("a", Shape{3, 2});
  EXPECT_THROW(reg.declare("a", Shape{1}), ValidationError);
  ASSERT_EQ(reg.size(), 2u);
  EXPECT_EQ(reg.entries()[0].name, "b");
  EXPECT_EQ(reg.entries()[1].name, "a");
  EXPECT_EQ(param_count(reg), 8u);
}

TEST(ParamCount, InitIsIndependentOfDeclarationSet) {
  ParameterRegistry<float> a, b;
  a.declare("x", Shape{5});
  b.declare("extra", Shape{7});
  b.declare("x", Shape{5});
  a.materialize(42);
  b.materialize(42);
  EXPECT_EQ(a.at("x").storage(), b.at("x").storage());
  for (float v : a.at("x").data()) EXPECT_LE(std::abs(v), 0.04f);
}

TEST(ParamCount, VitB32WithinTableValue) {
  auto reg = declare_model<float>(backbone_preset("vitb32"));
  const double total = static_cast<double>(param_count(reg));
  EXPECT_NEAR(total / 151.3e6, 1.0, 0.10);
  apply_freeze_policy(reg, FreezeMode::kAdaptersOnly);
  EXPECT_NEAR(static_cast<double>(param_count(reg, true)) / 1.3e6, 1.0, 0.10);
  apply_freeze_policy(reg, FreezeMode::kFull);
  EXPECT_EQ(static_cast<double>(param_count(reg)), total);
}
