#pragma once

// Cosine-similarity head: temperature-scaled logits against the two class
// prompts, softmax probabilities, and the image-side cross-entropy.
// Class order is fixed: index 0 negative, index 1 positive.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "mvclip/ops.hpp"

namespace mvclip {

struct ClipHeadConfig {
  double temperature = 0.07;

  void validate() const {
    if (!(temperature > 0.0)) throw ValidationError("head temperature must be positive");
  }
};

struct CasePrediction {
  std::array<double, 2> logits{};
  std::array<double, 2> probabilities{};
  int label = 0;

  double positive_probability() const { return probabilities[1]; }
};

inline constexpr double kNormEps = 1e-12;

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: vector lengths differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= kNormEps || nb <= kNormEps) throw NumericError("degenerate (zero) embedding in cosine similarity");
  return dot / (std::max(na, kNormEps) * std::max(nb, kNormEps));
}

// Two-class softmax with ties resolved to the negative class.
inline CasePrediction prediction_from_logits(double neg, double pos) {
  CasePrediction p;
  p.logits = {neg, pos};
  const double m = std::max(neg, pos);
  const double en = std::exp(neg - m), ep = std::exp(pos - m);
  p.probabilities = {en / (en + ep), ep / (en + ep)};
  p.label = pos > neg ? 1 : 0;
  return p;
}

template <typename T>
CasePrediction predict(std::span<const T> image, std::span<const T> text_negative, std::span<const T> text_positive,
                       const ClipHeadConfig& cfg) {
  cfg.validate();
  return prediction_from_logits(cosine_similarity(image, text_negative) / cfg.temperature,
                                cosine_similarity(image, text_positive) / cfg.temperature);
}

// images [B, D_e], texts [2, D_e] (negative, positive) -> logits [B, 2].
template <typename T>
Tensor<T> similarity_logits(const Tensor<T>& images, const Tensor<T>& texts, const ClipHeadConfig& cfg) {
  cfg.validate();
  if (texts.rank() != 2 || texts.dim(0) != 2) {
    throw ShapeError("similarity_logits: expected 2 text embeddings, got " + shape_str(texts.shape()));
  }
  auto sims = matmul(l2_normalize_rows(images, T(kNormEps)), transpose(l2_normalize_rows(texts, T(kNormEps))));
  return scale(sims, static_cast<T>(1.0 / cfg.temperature));
}

// Mean over the batch of -log softmax(logits)[label]; image logits only.
template <typename T>
Tensor<T> image_ce_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (labels.empty()) throw ValidationError("image_ce_loss: empty batch");
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(1) != 2) {
    throw ShapeError("image_ce_loss: logits " + shape_str(logits.shape()) + " for " + std::to_string(labels.size()) +
                     " labels");
  }
  std::vector<std::size_t> cols;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("image_ce_loss: labels must be 0 or 1");
    cols.push_back(static_cast<std::size_t>(l));
  }
  return scale(mean(pick(log_softmax(logits, 1), cols)), T(-1));
}

template <typename T>
std::vector<CasePrediction> predictions_from_logits(const Tensor<T>& logits) {
  std::vector<CasePrediction> out;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    out.push_back(prediction_from_logits(static_cast<double>(logits(i, 0)), static_cast<double>(logits(i, 1))));
  }
  return out;
}

}  // namespace mvclip
