#pragma once

// Bottleneck adapters, their injection into transformer blocks, and the
// parameter-efficient freeze policy.

#include <string>
#include <string_view>
#include <vector>

#include "mvclip/layers.hpp"

namespace mvclip {

enum class AdapterPlacement { kMsaOnly, kMlpOnly, kBoth };

struct AdapterConfig {
  std::size_t bottleneck_ratio = 32;
  AdapterPlacement placement = AdapterPlacement::kBoth;
  bool zero_init_up = true;

  bool after_msa() const { return placement != AdapterPlacement::kMlpOnly; }
  bool after_mlp() const { return placement != AdapterPlacement::kMsaOnly; }
};

template <typename T>
struct AdapterParams {
  Linear<T> down;  // D -> D/r
  Linear<T> up;    // D/r -> D
};

// A transformer block an adapter can attach to.
struct HostBlock {
  std::string prefix;
  std::size_t width = 0;
};

inline std::size_t adapter_param_count(std::size_t width, std::size_t ratio) {
  const std::size_t d = width / ratio;
  return 2 * width * d + d + width;
}

// x + up(gelu(down(x))). With a zero up-projection this is the identity.
template <typename T>
Tensor<T> adapter_forward(const Tensor<T>& x, const AdapterParams<T>& p) {
  if (x.shape().back() != p.down.in_features() || p.up.out_features() != p.down.in_features()) {
    throw ShapeError("adapter_forward: input width " + std::to_string(x.shape().back()) +
                     " does not match adapter width " + std::to_string(p.down.in_features()));
  }
  return add(x, linear(gelu(linear(x, p.down)), p.up));
}

template <typename T>
void declare_adapter(ParameterRegistry<T>& reg, const std::string& prefix, std::size_t width,
                     const AdapterConfig& cfg) {
  const std::size_t d = width / cfg.bottleneck_ratio;
  reg.declare(prefix + ".down.weight", Shape{width, d});
  reg.declare(prefix + ".down.bias", Shape{d}, Init::kZeros);
  reg.declare(prefix + ".up.weight", Shape{d, width}, cfg.zero_init_up ? Init::kZeros : Init::kTruncNormal);
  reg.declare(prefix + ".up.bias", Shape{width}, Init::kZeros);
}

template <typename T>
AdapterParams<T> load_adapter(const ParameterRegistry<T>& reg, const std::string& prefix) {
  return {load_linear(reg, prefix + ".down"), load_linear(reg, prefix + ".up")};
}

inline void validate_adapter_widths(const std::vector<HostBlock>& blocks, const AdapterConfig& cfg) {
  if (cfg.bottleneck_ratio == 0) throw ValidationError("adapter bottleneck ratio must be positive");
  for (const auto& b : blocks) {
    if (b.width % cfg.bottleneck_ratio != 0 || b.width < cfg.bottleneck_ratio) {
      throw ValidationError("host width " + std::to_string(b.width) + " of block '" + b.prefix +
                            "' is not divisible by bottleneck ratio " + std::to_string(cfg.bottleneck_ratio));
    }
  }
}

// Declares adapter1 (after the attention residual) and/or adapter2 (after the
// MLP residual) for every host block. Returns the number of adapters added.
template <typename T>
std::size_t inject_adapters(ParameterRegistry<T>& reg, const std::vector<HostBlock>& blocks,
                            const AdapterConfig& cfg) {
  validate_adapter_widths(blocks, cfg);
  std::size_t added = 0;
  for (const auto& b : blocks) {
    if (cfg.after_msa()) {
      declare_adapter(reg, b.prefix + ".adapter1", b.width, cfg);
      ++added;
    }
    if (cfg.after_mlp()) {
      declare_adapter(reg, b.prefix + ".adapter2", b.width, cfg);
      ++added;
    }
  }
  return added;
}

inline bool is_adapter_param(std::string_view name) {
  return name.find(".adapter1.") != std::string_view::npos || name.find(".adapter2.") != std::string_view::npos;
}

inline bool is_projection_head(std::string_view name) {
  return name == "vision.proj.weight" || name == "text.proj.weight";
}

enum class FreezeMode { kFull, kAdaptersOnly };

// kAdaptersOnly: trainable exactly for adapter parameters (plus the projection
// heads when train_heads is set). kFull: everything trainable.
template <typename T>
void apply_freeze_policy(ParameterRegistry<T>& reg, FreezeMode mode, bool train_heads = false) {
  for (auto& e : reg.entries()) {
    const bool on = mode == FreezeMode::kFull || is_adapter_param(e.name) || (train_heads && is_projection_head(e.name));
    ParameterRegistry<T>::set_trainable(e, on);
  }
}

struct Audit {
  std::size_t total = 0;
  std::size_t trainable = 0;
  double fraction = 0.0;
};

template <typename T>
Audit audit(const ParameterRegistry<T>& reg) {
  Audit a;
  a.total = reg.param_count(false);
  a.trainable = reg.param_count(true);
  a.fraction = a.total == 0 ? 0.0 : static_cast<double>(a.trainable) / static_cast<double>(a.total);
  return a;
}

}  // namespace mvclip
