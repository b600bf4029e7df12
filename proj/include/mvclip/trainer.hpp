#pragma once

// Supervised fine-tuning loop with best-epoch selection, and case-level
// evaluation helpers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "mvclip/augment.hpp"
#include "mvclip/config.hpp"
#include "mvclip/metrics.hpp"
#include "mvclip/model.hpp"

namespace mvclip {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  std::optional<double> train_accuracy;  // clean (unaugmented) accuracy, when tracked
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  ParameterRegistry<float> best;  // parameter snapshot after the best epoch
  NormStats norm;
  bool stopped_early = false;
};

struct Evaluation {
  std::vector<CasePrediction> predictions;
  std::vector<double> scores;  // positive-class probability
  std::vector<int> labels;
  double accuracy = 0.0;
};

// Runs inference without recording a graph.
inline Evaluation evaluate(const MultiViewClip<float>& model, const std::vector<Case>& prepared,
                           const PromptPair& prompts) {
  NoGradGuard no_grad;
  Evaluation ev;
  const auto texts = model.encode_prompts(prompts);
  std::vector<int> pred;
  for (const auto& c : prepared) {
    auto p = model.predict_case(c.views, texts);
    pred.push_back(p.label);
    ev.scores.push_back(p.positive_probability());
    ev.labels.push_back(c.label);
    ev.predictions.push_back(p);
  }
  ev.accuracy = prepared.empty() ? 0.0 : accuracy(pred, ev.labels);
  return ev;
}

inline std::vector<Case> prepare_all(const std::vector<Case>& cases, const NormStats& stats, bool normalize) {
  std::vector<Case> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(prepare_case(c, stats, normalize));
  return out;
}

// Mean image-to-text cross-entropy over one mini-batch.
inline Tensor<float> batch_loss(const MultiViewClip<float>& model, const std::vector<Case>& batch,
                                const Tensor<float>& texts) {
  std::vector<Tensor<float>> images;
  std::vector<int> labels;
  for (const auto& c : batch) {
    images.push_back(model.encode_case(c.views));
    labels.push_back(c.label);
  }
  const auto embeddings = reshape(concat(images, 0), {batch.size(), model.config().vision.embed_dim});
  return image_ce_loss(similarity_logits(embeddings, texts, model.config().head), labels);
}

// Trains `model` in place. The model is left at its final-epoch state; the
// best-epoch parameters are returned in FitResult::best.
inline FitResult fit(MultiViewClip<float>& model, const std::vector<Case>& train, const std::vector<Case>& val,
                     const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw ValidationError("fit: empty training set");
  if (val.empty()) throw ValidationError("fit: empty validation set");

  auto& params = model.params();
  apply_freeze_policy(params, cfg.mode, cfg.train_heads);

  FitResult result;
  result.norm = compute_norm_stats(train);
  const auto val_ready = prepare_all(val, result.norm, cfg.augment.normalize);
  const bool track = cfg.track_train_accuracy || cfg.stop_at_train_accuracy > 0.0;
  std::vector<Case> train_ready;
  if (track) train_ready = prepare_all(train, result.norm, cfg.augment.normalize);

  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  Rng augment_rng(derive_seed(seed, "augment"));
  AdamWState<float> state;
  const auto prompts = training_prompts();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.schedule);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Case> batch;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(augment(train[order[i]], augment_rng, cfg.augment, result.norm));
      }
      params.zero_grad();
      const auto texts = model.encode_prompts(prompts);
      const auto loss = batch_loss(model, batch, texts);
      if (!std::isfinite(loss.item())) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      backward(loss);
      adamw_step(params, state, lr, cfg.adamw);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
    }

    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(train.size()), evaluate(model, val_ready, prompts).accuracy,
                    std::nullopt};
    if (track) rec.train_accuracy = evaluate(model, train_ready, prompts).accuracy;
    result.history.push_back(rec);
    if (!have_best || rec.val_accuracy > result.best_val_accuracy) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_accuracy = rec.val_accuracy;
      result.best = params.clone();
    }
    if (cfg.stop_at_train_accuracy > 0.0 && *rec.train_accuracy >= cfg.stop_at_train_accuracy) {
      result.stopped_early = epoch + 1 < cfg.schedule.epochs;
      break;
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace mvclip
