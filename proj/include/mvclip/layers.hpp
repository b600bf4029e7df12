#pragma once

// Transformer building blocks: linear maps, layer norm, multi-head
// self-attention, the GELU MLP, patch embedding and sequence assembly.
// Weights are stored [in, out] so a linear map is x * W + b.

#include <cmath>
#include <string>
#include <vector>

#include "mvclip/ops.hpp"
#include "mvclip/registry.hpp"

namespace mvclip {

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out], may be undefined

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
struct AttentionParams {
  Linear<T> q, k, v, out;
  std::size_t heads = 1;
};

template <typename T>
struct MlpParams {
  Linear<T> expand;    // D -> 4D
  Linear<T> contract;  // 4D -> D
};

// Optional sink for per-head attention weights, for inspection in tests.
template <typename T>
struct AttentionTrace {
  std::vector<Tensor<T>> weights;
};

template <typename T>
void declare_linear(ParameterRegistry<T>& reg, const std::string& prefix, std::size_t in, std::size_t out,
                    bool bias = true) {
  reg.declare(prefix + ".weight", Shape{in, out});
  if (bias) reg.declare(prefix + ".bias", Shape{out}, Init::kZeros);
}

template <typename T>
void declare_layer_norm(ParameterRegistry<T>& reg, const std::string& prefix, std::size_t width) {
  reg.declare(prefix + ".weight", Shape{width}, Init::kOnes);
  reg.declare(prefix + ".bias", Shape{width}, Init::kZeros);
}

template <typename T>
void declare_attention(ParameterRegistry<T>& reg, const std::string& prefix, std::size_t width) {
  for (const char* name : {"q_proj", "k_proj", "v_proj", "out_proj"}) {
    declare_linear(reg, prefix + "." + name, width, width);
  }
}

template <typename T>
void declare_mlp(ParameterRegistry<T>& reg, const std::string& prefix, std::size_t width) {
  declare_linear(reg, prefix + ".fc1", width, 4 * width);
  declare_linear(reg, prefix + ".fc2", 4 * width, width);
}

template <typename T>
Linear<T> load_linear(const ParameterRegistry<T>& reg, const std::string& prefix) {
  Linear<T> l;
  l.weight = reg.at(prefix + ".weight");
  if (reg.contains(prefix + ".bias")) l.bias = reg.at(prefix + ".bias");
  return l;
}

template <typename T>
LayerNormParams<T> load_layer_norm(const ParameterRegistry<T>& reg, const std::string& prefix) {
  return {reg.at(prefix + ".weight"), reg.at(prefix + ".bias")};
}

template <typename T>
AttentionParams<T> load_attention(const ParameterRegistry<T>& reg, const std::string& prefix, std::size_t heads) {
  return {load_linear(reg, prefix + ".q_proj"), load_linear(reg, prefix + ".k_proj"),
          load_linear(reg, prefix + ".v_proj"), load_linear(reg, prefix + ".out_proj"), heads};
}

template <typename T>
MlpParams<T> load_mlp(const ParameterRegistry<T>& reg, const std::string& prefix) {
  return {load_linear(reg, prefix + ".fc1"), load_linear(reg, prefix + ".fc2")};
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Linear<T>& l) {
  auto y = matmul(x, l.weight);
  return l.bias.defined() ? add_row(y, l.bias) : y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p, T eps = T(1e-5)) {
  return layer_norm(x, p.gamma, p.beta, eps);
}

// Scaled dot-product attention per head with scale 1/sqrt(D/h); heads are
// concatenated and output-projected. With causal set, row i attends to j <= i.
template <typename T>
Tensor<T> mha_forward(const Tensor<T>& x, const AttentionParams<T>& p, bool causal,
                      AttentionTrace<T>* trace = nullptr) {
  if (x.rank() != 2) throw ShapeError("mha_forward: expected TxD tokens, got " + shape_str(x.shape()));
  const std::size_t d = x.dim(1);
  if (p.heads == 0 || d % p.heads != 0) {
    throw ShapeError("mha_forward: width " + std::to_string(d) + " is not divisible by " +
                     std::to_string(p.heads) + " heads");
  }
  const std::size_t head_dim = d / p.heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  auto q = linear(x, p.q);
  auto k = linear(x, p.k);
  auto v = linear(x, p.v);
  std::vector<Tensor<T>> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    auto qh = p.heads == 1 ? q : slice(q, 1, h * head_dim, head_dim);
    auto kh = p.heads == 1 ? k : slice(k, 1, h * head_dim, head_dim);
    auto vh = p.heads == 1 ? v : slice(v, 1, h * head_dim, head_dim);
    auto scores = scale(matmul(qh, transpose(kh)), inv_scale);
    auto weights = causal ? causal_softmax(scores) : softmax(scores, 1);
    if (trace) trace->weights.push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  auto merged = p.heads == 1 ? heads.front() : concat(heads, 1);
  return linear(merged, p.out);
}

template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const MlpParams<T>& p) {
  return linear(gelu(linear(x, p.expand)), p.contract);
}

// image[H, W, C] -> L x D tokens; a stride-P convolution as unfold + matmul.
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, std::size_t patch_size, const Linear<T>& projection) {
  auto patches = unfold_patches(image, patch_size);
  if (patches.dim(1) != projection.in_features()) {
    throw ShapeError("patch_embed: flattened patch length " + std::to_string(patches.dim(1)) +
                     " does not match projection input " + std::to_string(projection.in_features()));
  }
  return linear(patches, projection);
}

// Prepends the class token and adds positional embeddings: (1+L) x D.
template <typename T>
Tensor<T> assemble_sequence(const Tensor<T>& patches, const Tensor<T>& class_token, const Tensor<T>& pos_embed) {
  if (patches.rank() != 2) throw ShapeError("assemble_sequence: patches must be LxD, got " + shape_str(patches.shape()));
  const std::size_t l = patches.dim(0), d = patches.dim(1);
  if (class_token.numel() != d) {
    throw ShapeError("assemble_sequence: class token " + shape_str(class_token.shape()) + " vs width " +
                     std::to_string(d));
  }
  if (pos_embed.shape() != Shape{l + 1, d}) {
    throw ShapeError("assemble_sequence: positional embedding " + shape_str(pos_embed.shape()) +
                     " does not match " + shape_str(Shape{l + 1, d}));
  }
  auto cls = class_token.rank() == 2 ? class_token : reshape(class_token, Shape{1, d});
  return add(concat(std::vector<Tensor<T>>{cls, patches}, 0), pos_embed);
}

}  // namespace mvclip
