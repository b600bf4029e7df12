#pragma once

// Pre-norm transformer block with optional sequential adapters:
//   h = Adap1(MSA(LN1(x)) + x)
//   y = Adap2(MLP(LN2(h)) + h)
// A missing adapter is the identity.

#include <optional>
#include <string>

#include "mvclip/adapters.hpp"

namespace mvclip {

template <typename T>
struct BlockParams {
  LayerNormParams<T> ln1;
  AttentionParams<T> attn;
  LayerNormParams<T> ln2;
  MlpParams<T> mlp;
  std::optional<AdapterParams<T>> adapter1;
  std::optional<AdapterParams<T>> adapter2;
};

template <typename T>
void declare_block(ParameterRegistry<T>& reg, const std::string& prefix, std::size_t width) {
  declare_layer_norm(reg, prefix + ".ln1", width);
  declare_attention(reg, prefix + ".msa", width);
  declare_layer_norm(reg, prefix + ".ln2", width);
  declare_mlp(reg, prefix + ".mlp", width);
}

template <typename T>
BlockParams<T> load_block(const ParameterRegistry<T>& reg, const std::string& prefix, std::size_t heads) {
  BlockParams<T> b{load_layer_norm(reg, prefix + ".ln1"), load_attention(reg, prefix + ".msa", heads),
                   load_layer_norm(reg, prefix + ".ln2"), load_mlp(reg, prefix + ".mlp"), std::nullopt,
                   std::nullopt};
  if (reg.contains(prefix + ".adapter1.down.weight")) b.adapter1 = load_adapter(reg, prefix + ".adapter1");
  if (reg.contains(prefix + ".adapter2.down.weight")) b.adapter2 = load_adapter(reg, prefix + ".adapter2");
  return b;
}

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& p, bool causal,
                        AttentionTrace<T>* trace = nullptr) {
  auto h = add(mha_forward(layer_norm(x, p.ln1), p.attn, causal, trace), x);
  if (p.adapter1) h = adapter_forward(h, *p.adapter1);
  auto y = add(mlp_forward(layer_norm(h, p.ln2), p.mlp), h);
  if (p.adapter2) y = adapter_forward(y, *p.adapter2);
  return y;
}

}  // namespace mvclip
