#include <gtest/gtest.h>

#include "mvclip/trainer.hpp"
#include "test_util.hpp"

using namespace mvclip;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.vision.image_size = 16;
  cfg.vision.channels = 1;
  cfg.vision.patch_size = 8;
  cfg.vision.width = 16;
  cfg.vision.heads = 2;
  cfg.vision.local_depth = 1;
  cfg.vision.global_depth = 1;
  cfg.vision.embed_dim = 8;
  cfg.text.context_length = 40;
  cfg.text.width = 16;
  cfg.text.heads = 2;
  cfg.text.depth = 1;
  cfg.text.embed_dim = 8;
  cfg.adapter.bottleneck_ratio = 4;
  return cfg;
}

std::vector<Case> tiny_cases(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.cases = n;
  spec.image_size = 16;
  spec.radius_min = 1.5;
  spec.radius_max = 2.5;
  spec.seed = seed;
  std::vector<Case> out;
  for (const auto& s : synthesize(spec)) out.push_back(to_case(s, four_views(), 16, 1));
  return out;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig cfg;
  cfg.schedule = {epochs, 1, 1e-2, 1e-4};
  cfg.batch_size = 4;
  return cfg;
}

bool any(const ParameterRegistry<float>::Entry&) { return true; }

}  // namespace

TEST(Fit, ZeroLearningRateKeepsParametersAndPicksFirstEpoch) {
  MultiViewClip<float> model(tiny_model(), build_vocab(prompt_corpus()), 1);
  const auto before = checksum(model.params(), any);
  auto cfg = quick_train(3);
  cfg.schedule.base_lr = 0.0;
  cfg.schedule.min_lr = 0.0;
  cfg.mode = FreezeMode::kFull;
  const auto train = tiny_cases(8, 1), val = tiny_cases(4, 2);
  const auto r = fit(model, train, val, cfg, 0);
  EXPECT_EQ(checksum(model.params(), any), before);
  EXPECT_EQ(checksum(r.best, any), before);
  EXPECT_EQ(r.best_epoch, 0u);
  ASSERT_EQ(r.history.size(), 3u);
  for (const auto& rec : r.history) {
    EXPECT_EQ(rec.lr, 0.0);
    EXPECT_EQ(rec.val_accuracy, r.history[0].val_accuracy);
  }
}

TEST(Fit, SameSeedGivesIdenticalHistory) {
  const auto train = tiny_cases(8, 1), val = tiny_cases(4, 2);
  auto run = [&]() {
    MultiViewClip<float> model(tiny_model(), build_vocab(prompt_corpus()), 5);
    return fit(model, train, val, quick_train(3), 9);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_accuracy, b.history[i].val_accuracy);
  }
  EXPECT_EQ(checksum(a.best, any), checksum(b.best, any));
}

TEST(Fit, AdaptersOnlyLeavesFrozenParametersUntouched) {
  MultiViewClip<float> model(tiny_model(), build_vocab(prompt_corpus()), 3);
  auto frozen = [](const ParameterRegistry<float>::Entry& e) { return !is_adapter_param(e.name); };
  auto adapters = [](const ParameterRegistry<float>::Entry& e) { return is_adapter_param(e.name); };
  const auto frozen_before = checksum(model.params(), frozen);
  const auto adapters_before = checksum(model.params(), adapters);
  const auto r = fit(model, tiny_cases(8, 1), tiny_cases(4, 2), quick_train(3), 0);
  EXPECT_EQ(checksum(model.params(), frozen), frozen_before);
  EXPECT_NE(checksum(model.params(), adapters), adapters_before);
  EXPECT_EQ(checksum(r.best, frozen), frozen_before);
}

TEST(Fit, StopsOnceTrainAccuracyIsReached) {
  MultiViewClip<float> model(tiny_model(), build_vocab(prompt_corpus()), 3);
  auto cfg = quick_train(5);
  cfg.stop_at_train_accuracy = 1e-9;  // any accuracy above zero
  const auto r = fit(model, tiny_cases(8, 1), tiny_cases(4, 2), cfg, 0);
  ASSERT_TRUE(r.history.front().train_accuracy.has_value());
  if (*r.history.front().train_accuracy > 0.0) {
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_TRUE(r.stopped_early);
  }
}

TEST(Fit, RejectsEmptySets) {
  MultiViewClip<float> model(tiny_model(), build_vocab(prompt_corpus()), 3);
  EXPECT_THROW(fit(model, {}, tiny_cases(2, 1), quick_train(2), 0), ValidationError);
  EXPECT_THROW(fit(model, tiny_cases(2, 1), {}, quick_train(2), 0), ValidationError);
}

TEST(Evaluate, ProbabilitiesSumToOneForBothPromptSets) {
  MultiViewClip<float> model(tiny_model(), build_vocab(prompt_corpus()), 3);
  const auto cases = prepare_all(tiny_cases(6, 4), NormStats{0.5, 0.25}, true);
  for (const auto& prompts : {training_prompts(), zeroshot_prompts()}) {
    const auto ev = evaluate(model, cases, prompts);
    ASSERT_EQ(ev.predictions.size(), 6u);
    for (const auto& p : ev.predictions) EXPECT_NEAR(p.probabilities[0] + p.probabilities[1], 1.0, 1e-12);
  }
}
