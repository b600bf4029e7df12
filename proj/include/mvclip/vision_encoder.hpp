#pragma once

// Multi-view image encoder.
//
// Each view is patch-embedded and run through N_l local blocks whose weights are
// shared across views. The per-view sequences are then concatenated along the
// token axis and run through N_g global blocks, so attention spans all views.
// The V class tokens of the final sequence are pooled and projected into the
// shared embedding space.
//
// Blocks are named by depth (vision.blocks.<n>) regardless of whether they run
// locally or globally, so a checkpoint fits every (N_l, N_g) split of the same
// depth.

#include <string>
#include <vector>

#include "mvclip/transformer.hpp"
#include "mvclip/views.hpp"

namespace mvclip {

enum class Pooling { kMeanClassTokens, kFirstClassToken };

struct VisionEncoderConfig {
  std::size_t image_size = 64;
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t local_depth = 0;
  std::size_t global_depth = 4;
  std::size_t embed_dim = 32;
  std::vector<View> views = four_views();
  Pooling pooling = Pooling::kMeanClassTokens;
  bool view_embedding = false;

  std::size_t depth() const { return local_depth + global_depth; }
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens_per_view() const { return grid() * grid(); }
  std::size_t view_count() const { return views.size(); }
  std::size_t sequence_length() const { return 1 + tokens_per_view(); }
  std::size_t fused_length() const { return view_count() * sequence_length(); }

  void validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
      throw ValidationError("vision image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                            std::to_string(patch_size));
    }
    if (channels == 0 || width == 0 || embed_dim == 0) throw ValidationError("vision extents must be positive");
    if (heads == 0 || width % heads != 0) {
      throw ValidationError("vision width " + std::to_string(width) + " is not divisible by " +
                            std::to_string(heads) + " heads");
    }
    if (views.empty() || views.size() > 4) throw ValidationError("vision views must list 1 to 4 views");
    for (std::size_t i = 1; i < views.size(); ++i) {
      if (static_cast<int>(views[i]) <= static_cast<int>(views[i - 1])) {
        throw ValidationError("vision views must be distinct and in LCC, RCC, LMLO, RMLO order");
      }
    }
  }
};

inline std::string vision_block_prefix(std::size_t depth_index) {
  return "vision.blocks." + std::to_string(depth_index);
}

inline std::vector<HostBlock> vision_host_blocks(const VisionEncoderConfig& cfg) {
  std::vector<HostBlock> blocks;
  for (std::size_t n = 0; n < cfg.depth(); ++n) blocks.push_back({vision_block_prefix(n), cfg.width});
  return blocks;
}

template <typename T>
void declare_vision_encoder(ParameterRegistry<T>& reg, const VisionEncoderConfig& cfg) {
  cfg.validate();
  const std::size_t patch_len = cfg.patch_size * cfg.patch_size * cfg.channels;
  declare_linear(reg, "vision.patch_embed", patch_len, cfg.width);
  reg.declare("vision.class_token", Shape{1, cfg.width});
  reg.declare("vision.pos_embed", Shape{cfg.sequence_length(), cfg.width});
  if (cfg.view_embedding) reg.declare("vision.view_embed", Shape{cfg.view_count(), cfg.width});
  for (std::size_t n = 0; n < cfg.depth(); ++n) declare_block(reg, vision_block_prefix(n), cfg.width);
  reg.declare("vision.proj.weight", Shape{cfg.width, cfg.embed_dim});
}

// Concatenated multi-view tokens plus the start row of each view's sequence.
template <typename T>
struct FusedSequence {
  Tensor<T> tokens;                  // (V + V*L) x D
  std::vector<std::size_t> offsets;  // k * (1 + L)
  std::size_t view_length = 0;       // 1 + L
};

template <typename T>
FusedSequence<T> fuse_tokens(const std::vector<Tensor<T>>& views) {
  if (views.empty()) throw ShapeError("fuse_tokens: no views");
  FusedSequence<T> fused;
  fused.view_length = views.front().dim(0);
  for (std::size_t k = 0; k < views.size(); ++k) {
    if (views[k].shape() != views.front().shape()) {
      throw ShapeError("fuse_tokens: view " + std::to_string(k) + " has shape " + shape_str(views[k].shape()) +
                       ", expected " + shape_str(views.front().shape()));
    }
    fused.offsets.push_back(k * fused.view_length);
  }
  fused.tokens = views.size() == 1 ? views.front() : concat(views, 0);
  return fused;
}

template <typename T>
std::vector<Tensor<T>> split_tokens(const FusedSequence<T>& fused) {
  std::vector<Tensor<T>> views;
  for (std::size_t off : fused.offsets) views.push_back(slice(fused.tokens, 0, off, fused.view_length));
  return views;
}

// Gathers the class tokens at the recorded offsets, pools them, projects to D_e.
template <typename T>
Tensor<T> pool_and_project(const FusedSequence<T>& fused, const Tensor<T>& projection, Pooling pooling) {
  Tensor<T> pooled;
  if (pooling == Pooling::kFirstClassToken) {
    pooled = gather_rows(fused.tokens, {fused.offsets.front()});
  } else {
    pooled = mean_axis(gather_rows(fused.tokens, fused.offsets), 0);
  }
  return matmul(pooled, projection);
}

template <typename T>
class VisionEncoder {
 public:
  VisionEncoder(const ParameterRegistry<T>& reg, VisionEncoderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    patch_proj_ = load_linear(reg, "vision.patch_embed");
    class_token_ = reg.at("vision.class_token");
    pos_embed_ = reg.at("vision.pos_embed");
    if (cfg_.view_embedding) view_embed_ = reg.at("vision.view_embed");
    for (std::size_t n = 0; n < cfg_.depth(); ++n) blocks_.push_back(load_block(reg, vision_block_prefix(n), cfg_.heads));
    projection_ = reg.at("vision.proj.weight");
  }

  const VisionEncoderConfig& config() const { return cfg_; }

  // One view's token sequence z^0: (1 + L) x D.
  Tensor<T> embed_view(const Tensor<T>& image, std::size_t view_index) const {
    check_image(image);
    auto z = assemble_sequence(patch_embed(image, cfg_.patch_size, patch_proj_), class_token_, pos_embed_);
    if (cfg_.view_embedding) {
      auto row = gather_rows(view_embed_, std::vector<std::size_t>(z.dim(0), view_index));
      z = add(z, row);
    }
    return z;
  }

  std::vector<Tensor<T>> local_stack_forward(std::vector<Tensor<T>> views) const {
    for (const auto& v : views) {
      if (v.shape() != views.front().shape()) {
        throw ShapeError("local_stack_forward: view shapes differ, " + shape_str(v.shape()) + " vs " +
                         shape_str(views.front().shape()));
      }
    }
    for (std::size_t n = 0; n < cfg_.local_depth; ++n) {
      for (auto& z : views) z = block_forward(z, blocks_[n], false);
    }
    return views;
  }

  FusedSequence<T> global_stack_forward(FusedSequence<T> fused) const {
    for (std::size_t n = cfg_.local_depth; n < cfg_.depth(); ++n) {
      fused.tokens = block_forward(fused.tokens, blocks_[n], false);
    }
    return fused;
  }

  Tensor<T> pool_and_project(const FusedSequence<T>& fused) const {
    return mvclip::pool_and_project(fused, projection_, cfg_.pooling);
  }

  // images in configured view order, each H x W x C. Returns 1 x D_e.
  Tensor<T> encode_views(const std::vector<Tensor<T>>& images) const {
    if (images.size() != cfg_.view_count()) {
      throw ValidationError("encode_views: expected " + std::to_string(cfg_.view_count()) + " views, got " +
                            std::to_string(images.size()));
    }
    std::vector<Tensor<T>> seqs;
    seqs.reserve(images.size());
    for (std::size_t k = 0; k < images.size(); ++k) seqs.push_back(embed_view(images[k], k));
    return pool_and_project(global_stack_forward(fuse_tokens(local_stack_forward(std::move(seqs)))));
  }

 private:
  void check_image(const Tensor<T>& image) const {
    const Shape want{cfg_.image_size, cfg_.image_size, cfg_.channels};
    if (image.shape() != want) {
      throw ValidationError("image shape " + shape_str(image.shape()) + " does not match configured " + shape_str(want));
    }
  }

  VisionEncoderConfig cfg_;
  Linear<T> patch_proj_;
  Tensor<T> class_token_;
  Tensor<T> pos_embed_;
  Tensor<T> view_embed_;
  std::vector<BlockParams<T>> blocks_;
  Tensor<T> projection_;
};

}  // namespace mvclip
