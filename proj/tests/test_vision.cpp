#include <gtest/gtest.h>

#include <random>

#include "mvclip/model.hpp"
#include "test_util.hpp"

using namespace mvclip;
using testutil::random_tensor;

namespace {

VisionEncoderConfig small_config(std::size_t local, std::size_t global, std::size_t views = 4) {
  VisionEncoderConfig cfg;
  cfg.image_size = 16;
  cfg.channels = 1;
  cfg.patch_size = 8;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.local_depth = local;
  cfg.global_depth = global;
  cfg.embed_dim = 8;
  cfg.views.assign(kAllViews.begin(), kAllViews.begin() + static_cast<std::ptrdiff_t>(views));
  return cfg;
}

template <typename T>
ParameterRegistry<T> build(const VisionEncoderConfig& cfg, bool adapters, std::uint64_t seed,
                           AdapterConfig acfg = AdapterConfig{4}) {
  ParameterRegistry<T> reg;
  declare_vision_encoder(reg, cfg);
  if (adapters) inject_adapters(reg, vision_host_blocks(cfg), acfg);
  reg.materialize(seed);
  return reg;
}

template <typename T>
std::vector<Tensor<T>> random_views(const VisionEncoderConfig& cfg, std::mt19937_64& rng, bool grad = false) {
  std::vector<Tensor<T>> views;
  for (std::size_t k = 0; k < cfg.view_count(); ++k) {
    views.push_back(random_tensor<T>({cfg.image_size, cfg.image_size, cfg.channels}, rng, -1, 1, grad));
  }
  return views;
}

}  // namespace

TEST(LocalStack, EmptyStackIsIdentity) {
  auto cfg = small_config(0, 2);
  auto reg = build<float>(cfg, false, 1);
  VisionEncoder<float> enc(reg, cfg);
  std::mt19937_64 rng(2);
  std::vector<Tensor<float>> seqs;
  for (int k = 0; k < 4; ++k) seqs.push_back(random_tensor<float>({5, 16}, rng));
  auto out = enc.local_stack_forward(seqs);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(out[k].storage(), seqs[k].storage());
}

TEST(LocalStack, SharedWeightsGiveIdenticalOutputs) {
  auto cfg = small_config(2, 0);
  auto reg = build<float>(cfg, true, 3);
  VisionEncoder<float> enc(reg, cfg);
  std::mt19937_64 rng(4);
  auto a = random_tensor<float>({5, 16}, rng);
  auto out = enc.local_stack_forward({a, a.detach(), random_tensor<float>({5, 16}, rng), a.detach()});
  EXPECT_EQ(out[0].storage(), out[1].storage());
  EXPECT_EQ(out[0].storage(), out[3].storage());
  EXPECT_NE(out[0].storage(), out[2].storage());
  EXPECT_THROW(enc.local_stack_forward({a, Tensor<float>({4, 16})}), ShapeError);
}

TEST(LocalStack, ZeroInitAdaptersMatchAdapterFreeStack) {
  auto cfg = small_config(2, 0);
  auto with = build<double>(cfg, true, 5);
  auto without = build<double>(cfg, false, 5);
  VisionEncoder<double> a(with, cfg), b(without, cfg);
  std::mt19937_64 rng(6);
  std::vector<Tensor<double>> seqs;
  for (int k = 0; k < 4; ++k) seqs.push_back(random_tensor<double>({5, 16}, rng));
  auto ya = a.local_stack_forward(seqs), yb = b.local_stack_forward(seqs);
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < ya[k].numel(); ++i) EXPECT_NEAR(ya[k].data()[i], yb[k].data()[i], 1e-6);
}

TEST(FuseTokens, ExtentsAndOffsets) {
  std::mt19937_64 rng(7);
  std::vector<Tensor<float>> seqs;
  for (int k = 0; k < 4; ++k) seqs.push_back(random_tensor<float>({50, 8}, rng));
  auto fused = fuse_tokens(seqs);
  EXPECT_EQ(fused.tokens.shape(), (Shape{200, 8}));
  EXPECT_EQ(fused.offsets, (std::vector<std::size_t>{0, 50, 100, 150}));
  auto back = split_tokens(fused);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(back[k].storage(), seqs[k].storage());

  auto two = fuse_tokens(std::vector<Tensor<float>>{seqs[0], seqs[1]});
  EXPECT_EQ(two.tokens.dim(0), 2u + 2u * 49u);
  EXPECT_THROW(fuse_tokens(std::vector<Tensor<float>>{seqs[0], Tensor<float>({49, 8})}), ShapeError);
}

TEST(FuseTokens, ShapeLaw) {
  for (std::size_t v : {1u, 2u, 4u})
    for (std::size_t p : {4u, 8u}) {
      auto cfg = small_config(1, 1, v);
      cfg.patch_size = p;
      EXPECT_EQ(cfg.fused_length(), v * (1 + (16 / p) * (16 / p)));
      auto reg = build<float>(cfg, false, 8);
      VisionEncoder<float> enc(reg, cfg);
      std::mt19937_64 rng(9);
      std::vector<Tensor<float>> seqs;
      auto views = random_views<float>(cfg, rng);
      for (std::size_t k = 0; k < v; ++k) seqs.push_back(enc.embed_view(views[k], k));
      EXPECT_EQ(fuse_tokens(seqs).tokens.dim(0), cfg.fused_length());
    }
}

TEST(GlobalStack, EmptyStackIsIdentityAndExtentPreserved) {
  std::mt19937_64 rng(10);
  auto cfg0 = small_config(2, 0);
  auto reg0 = build<float>(cfg0, false, 11);
  VisionEncoder<float> enc0(reg0, cfg0);
  std::vector<Tensor<float>> seqs;
  for (int k = 0; k < 4; ++k) seqs.push_back(random_tensor<float>({5, 16}, rng));
  auto fused = fuse_tokens(seqs);
  EXPECT_EQ(enc0.global_stack_forward(fused).tokens.storage(), fused.tokens.storage());

  auto cfg = small_config(0, 2);
  auto reg = build<float>(cfg, false, 11);
  VisionEncoder<float> enc(reg, cfg);
  EXPECT_EQ(enc.global_stack_forward(fused).tokens.shape(), fused.tokens.shape());
}

TEST(GlobalStack, CrossViewAttentionIsLive) {
  auto cfg = small_config(0, 1);
  auto reg = build<double>(cfg, false, 12);
  VisionEncoder<double> enc(reg, cfg);
  std::mt19937_64 rng(13);
  std::vector<Tensor<double>> seqs;
  for (int k = 0; k < 4; ++k) seqs.push_back(random_tensor<double>({5, 16}, rng));
  auto base = enc.global_stack_forward(fuse_tokens(seqs));
  seqs[1] = random_tensor<double>({5, 16}, rng);
  auto moved = enc.global_stack_forward(fuse_tokens(seqs));
  double diff = 0.0;
  for (std::size_t j = 0; j < 16; ++j) diff += std::abs(base.tokens(0, j) - moved.tokens(0, j));
  EXPECT_GT(diff, 0.0);
}

TEST(PoolAndProject, EqualClassTokensAndSelector) {
  std::mt19937_64 rng(14);
  auto proj = random_tensor<double>({8, 4}, rng);
  auto c = random_tensor<double>({1, 8}, rng);
  std::vector<Tensor<double>> seqs;
  for (int k = 0; k < 3; ++k) seqs.push_back(concat(std::vector<Tensor<double>>{c, random_tensor<double>({2, 8}, rng)}, 0));
  auto fused = fuse_tokens(seqs);
  auto y = pool_and_project(fused, proj, Pooling::kMeanClassTokens);
  auto expect = oracle::matmul(testutil::to_matrix(c), testutil::to_matrix(proj));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(0, j), expect[0][j], 1e-12);

  auto first = pool_and_project(fused, proj, Pooling::kFirstClassToken);
  seqs[1] = random_tensor<double>({3, 8}, rng);
  seqs[2] = random_tensor<double>({3, 8}, rng);
  EXPECT_EQ(pool_and_project(fuse_tokens(seqs), proj, Pooling::kFirstClassToken).storage(), first.storage());
}

TEST(PoolAndProject, MatchesMeanThenMatmulOracle) {
  std::mt19937_64 rng(15);
  auto proj = random_tensor<double>({8, 4}, rng);
  std::vector<Tensor<double>> seqs;
  for (int k = 0; k < 4; ++k) seqs.push_back(random_tensor<double>({3, 8}, rng));
  auto y = pool_and_project(fuse_tokens(seqs), proj, Pooling::kMeanClassTokens);
  oracle::Matrix mean_row(1, std::vector<double>(8, 0.0));
  for (int k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 8; ++j) mean_row[0][j] += seqs[k](0, j) / 4.0;
  auto expect = oracle::matmul(mean_row, testutil::to_matrix(proj));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(0, j), expect[0][j], 1e-6);
}

TEST(EncodeViews, LateFusionIsMeanOfIndependentClassTokens) {
  auto cfg = small_config(2, 0);
  auto reg = build<double>(cfg, true, 16, AdapterConfig{4, AdapterPlacement::kBoth, false});
  VisionEncoder<double> enc(reg, cfg);
  std::mt19937_64 rng(17);
  auto views = random_views<double>(cfg, rng);
  auto y = enc.encode_views(views);

  oracle::Matrix mean_row(1, std::vector<double>(cfg.width, 0.0));
  for (std::size_t k = 0; k < 4; ++k) {
    auto alone = enc.local_stack_forward({enc.embed_view(views[k], k)});
    for (std::size_t j = 0; j < cfg.width; ++j) mean_row[0][j] += alone[0](0, j) / 4.0;
  }
  auto expect = oracle::matmul(mean_row, testutil::to_matrix(reg.at("vision.proj.weight")));
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) EXPECT_NEAR(y(0, j), expect[0][j], 1e-9);
}

TEST(EncodeViews, EarlyFusionCouplesViewsFromTheFirstBlock) {
  // With N_l = 0 the first block already sees the fused sequence, so the first
  // view's class token depends on the last view.
  auto cfg = small_config(0, 1);
  cfg.pooling = Pooling::kFirstClassToken;
  auto reg = build<double>(cfg, false, 18);
  VisionEncoder<double> enc(reg, cfg);
  std::mt19937_64 rng(19);
  auto views = random_views<double>(cfg, rng);
  auto a = enc.encode_views(views);
  views[3] = random_tensor<double>({16, 16, 1}, rng);
  auto b = enc.encode_views(views);
  EXPECT_EQ(a.shape(), (Shape{1, 8}));
  EXPECT_NE(a.storage(), b.storage());
}

TEST(EncodeViews, GradientReachesEveryView) {
  auto cfg = small_config(1, 1);
  auto reg = build<double>(cfg, true, 20);
  VisionEncoder<double> enc(reg, cfg);
  std::mt19937_64 rng(21);
  auto views = random_views<double>(cfg, rng, true);
  backward(sum(enc.encode_views(views)));
  for (auto& v : views) {
    double mag = 0.0;
    for (double g : v.grad()) mag += std::abs(g);
    EXPECT_GT(mag, 0.0);
  }
}

TEST(EncodeViews, LateFusionFirstTokenIgnoresOtherViews) {
  auto cfg = small_config(2, 0);
  cfg.pooling = Pooling::kFirstClassToken;
  auto reg = build<double>(cfg, false, 22);
  VisionEncoder<double> enc(reg, cfg);
  std::mt19937_64 rng(23);
  auto views = random_views<double>(cfg, rng, true);
  backward(sum(enc.encode_views(views)));
  for (std::size_t k = 1; k < 4; ++k)
    for (double g : views[k].grad()) EXPECT_EQ(g, 0.0);
}

TEST(EncodeViews, StackSplitIrrelevantForSingleView) {
  std::mt19937_64 rng(24);
  auto probe_cfg = small_config(0, 4, 1);
  auto views = random_views<float>(probe_cfg, rng);
  std::vector<float> reference;
  for (std::size_t local = 0; local < 4; ++local) {
    auto cfg = small_config(local, 4 - local, 1);
    auto reg = build<float>(cfg, true, 25, AdapterConfig{4, AdapterPlacement::kBoth, false});
    VisionEncoder<float> enc(reg, cfg);
    auto y = enc.encode_views(views);
    if (reference.empty()) reference = y.storage();
    EXPECT_EQ(y.storage(), reference) << "split " << local << "/" << 4 - local;
  }
}

TEST(EncodeViews, SwappingViewsKeepsMeanPooledEmbedding) {
  for (std::size_t local : {0u, 1u, 2u}) {
    auto cfg = small_config(local, 2 - local);
    auto reg = build<double>(cfg, false, 26);
    VisionEncoder<double> enc(reg, cfg);
    std::mt19937_64 rng(27);
    auto views = random_views<double>(cfg, rng);
    auto a = enc.encode_views(views);
    std::swap(views[0], views[2]);
    auto b = enc.encode_views(views);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) EXPECT_NEAR(a(0, j), b(0, j), 1e-6);
  }
}

TEST(EncodeViews, RejectsWrongViewCountAndImageSize) {
  auto cfg = small_config(1, 1);
  auto reg = build<float>(cfg, false, 28);
  VisionEncoder<float> enc(reg, cfg);
  std::mt19937_64 rng(29);
  auto views = random_views<float>(cfg, rng);
  views.pop_back();
  EXPECT_THROW(enc.encode_views(views), ValidationError);
  views.push_back(Tensor<float>({8, 8, 1}));
  EXPECT_THROW(enc.encode_views(views), ValidationError);
}
