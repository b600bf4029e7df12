#pragma once

// The full image-text model: multi-view vision encoder, text encoder, adapters
// on either or both, and the cosine head.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvclip/clip_head.hpp"
#include "mvclip/text_encoder.hpp"
#include "mvclip/vision_encoder.hpp"

namespace mvclip {

struct ModelConfig {
  VisionEncoderConfig vision;
  TextEncoderConfig text;
  AdapterConfig adapter;
  bool vision_adapters = true;
  bool text_adapters = true;
  ClipHeadConfig head;

  void validate() const {
    vision.validate();
    text.validate();
    head.validate();
    if (vision.embed_dim != text.embed_dim) {
      throw ValidationError("vision embed_dim " + std::to_string(vision.embed_dim) + " differs from text embed_dim " +
                            std::to_string(text.embed_dim));
    }
    if (vision_adapters) validate_adapter_widths(vision_host_blocks(vision), adapter);
    if (text_adapters) validate_adapter_widths(text_host_blocks(text), adapter);
  }
};

// Declares every parameter of the model without allocating.
template <typename T>
ParameterRegistry<T> declare_model(const ModelConfig& cfg) {
  cfg.validate();
  ParameterRegistry<T> reg;
  declare_vision_encoder(reg, cfg.vision);
  declare_text_encoder(reg, cfg.text);
  if (cfg.vision_adapters) inject_adapters(reg, vision_host_blocks(cfg.vision), cfg.adapter);
  if (cfg.text_adapters) inject_adapters(reg, text_host_blocks(cfg.text), cfg.adapter);
  return reg;
}

template <typename T>
class MultiViewClip {
 public:
  // Builds and initializes a model. text.vocab_size is taken from vocab when 0.
  MultiViewClip(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
      : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    if (cfg_.text.vocab_size == 0) cfg_.text.vocab_size = vocab_.size();
    if (cfg_.text.vocab_size < vocab_.size()) {
      throw ValidationError("text vocab_size " + std::to_string(cfg_.text.vocab_size) + " is smaller than vocabulary (" +
                            std::to_string(vocab_.size()) + ")");
    }
    registry_ = declare_model<T>(cfg_);
    registry_.materialize(seed);
    bind();
  }

  MultiViewClip(const MultiViewClip&) = delete;
  MultiViewClip& operator=(const MultiViewClip&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterRegistry<T>& params() { return registry_; }
  const ParameterRegistry<T>& params() const { return registry_; }
  const VisionEncoder<T>& vision() const { return *vision_; }
  const TextEncoder<T>& text() const { return *text_; }

  Tensor<T> encode_case(const std::vector<Tensor<T>>& views) const { return vision_->encode_views(views); }

  Tensor<T> encode_prompt(const std::string& prompt) const {
    return text_->encode(tokenize(prompt, vocab_, cfg_.text.context_length));
  }

  // [2, D_e]: negative then positive.
  Tensor<T> encode_prompts(const PromptPair& prompts) const {
    return concat(std::vector<Tensor<T>>{encode_prompt(prompts.negative), encode_prompt(prompts.positive)}, 0);
  }

  CasePrediction predict_case(const std::vector<Tensor<T>>& views, const Tensor<T>& prompt_embeddings) const {
    const auto image = encode_case(views);
    const auto d = cfg_.text.embed_dim;
    auto texts = prompt_embeddings.data();
    return predict<T>(image.data(), texts.subspan(0, d), texts.subspan(d, d), cfg_.head);
  }

 private:
  void bind() {
    vision_.emplace(registry_, cfg_.vision);
    text_.emplace(registry_, cfg_.text);
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  ParameterRegistry<T> registry_;
  std::optional<VisionEncoder<T>> vision_;
  std::optional<TextEncoder<T>> text_;
};

// Encodes the case once and both zero-shot prompts, then applies the head.
template <typename T>
CasePrediction zero_shot_classify(const MultiViewClip<T>& model, const std::vector<Tensor<T>>& views,
                                  const PromptPair& prompts = zeroshot_prompts()) {
  return model.predict_case(views, model.encode_prompts(prompts));
}

// Full-size CLIP backbones for parameter audits.
inline ModelConfig backbone_preset(std::string_view name) {
  ModelConfig cfg;
  cfg.vision.image_size = 224;
  cfg.vision.channels = 3;
  cfg.vision.local_depth = 0;
  cfg.text.context_length = 77;
  cfg.text.vocab_size = 49408;
  cfg.text.depth = 12;
  cfg.adapter.bottleneck_ratio = 32;
  if (name == "vitb32" || name == "vitb16") {
    cfg.vision.patch_size = name == "vitb32" ? 32 : 16;
    cfg.vision.width = 768;
    cfg.vision.heads = 12;
    cfg.vision.global_depth = 12;
    cfg.vision.embed_dim = 512;
    cfg.text.width = 512;
    cfg.text.heads = 8;
    cfg.text.embed_dim = 512;
  } else if (name == "vitl14") {
    cfg.vision.patch_size = 14;
    cfg.vision.width = 1024;
    cfg.vision.heads = 16;
    cfg.vision.global_depth = 24;
    cfg.vision.embed_dim = 768;
    cfg.text.width = 768;
    cfg.text.heads = 12;
    cfg.text.embed_dim = 768;
  } else {
    throw ValidationError("unknown backbone '" + std::string(name) + "' (expected vitb32, vitb16 or vitl14)");
  }
  return cfg;
}

// Counts a preset with adapters injected and the adapters-only policy applied.
inline Audit audit_backbone(std::string_view name) {
  auto reg = declare_model<float>(backbone_preset(name));
  apply_freeze_policy(reg, FreezeMode::kAdaptersOnly);
  return audit(reg);
}

}  // namespace mvclip
