#pragma once

// Warmup + cosine learning-rate schedule and AdamW with decoupled weight decay.

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvclip/registry.hpp"

namespace mvclip {

struct ScheduleConfig {
  std::size_t epochs = 400;
  std::size_t warmup_epochs = 10;
  double base_lr = 5e-4;
  double min_lr = 1e-5;

  void validate() const {
    if (epochs == 0) throw ValidationError("train.epochs must be positive");
    if (warmup_epochs >= epochs) {
      throw ValidationError("train.warmup_epochs (" + std::to_string(warmup_epochs) + ") must be below train.epochs (" +
                            std::to_string(epochs) + ")");
    }
    if (base_lr < 0.0 || min_lr < 0.0) throw ValidationError("learning rates must be non-negative");
  }
};

// Linear warmup to base_lr over the first warmup_epochs, then cosine decay that
// reaches min_lr on the last epoch.
inline double lr_at(std::size_t epoch, const ScheduleConfig& cfg) {
  cfg.validate();
  if (epoch >= cfg.epochs) {
    throw ValidationError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  if (epoch < cfg.warmup_epochs) {
    return cfg.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  }
  const std::size_t span = cfg.epochs - cfg.warmup_epochs - 1;
  const double progress = span == 0 ? 0.0 : static_cast<double>(epoch - cfg.warmup_epochs) / static_cast<double>(span);
  return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <typename T>
struct AdamWState {
  std::unordered_map<std::string, std::vector<double>> first;
  std::unordered_map<std::string, std::vector<double>> second;
  std::size_t step = 0;
};

// One update of every trainable parameter from its accumulated gradient.
// Frozen entries are never touched.
template <typename T>
void adamw_step(ParameterRegistry<T>& reg, AdamWState<T>& state, double lr, const AdamWConfig& cfg) {
  for (const auto& e : reg.entries()) {
    if (e.trainable && !e.tensor.has_grad()) throw Error("adamw_step: no gradient for trainable parameter '" + e.name + "'");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& e : reg.entries()) {
    if (!e.trainable) continue;
    auto& m = state.first[e.name];
    auto& v = state.second[e.name];
    if (m.empty()) {
      m.assign(e.tensor.numel(), 0.0);
      v.assign(e.tensor.numel(), 0.0);
    }
    auto p = e.tensor.data();
    auto g = e.tensor.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      double pi = static_cast<double>(p[i]);
      pi -= lr * cfg.weight_decay * pi;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      pi -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
      p[i] = static_cast<T>(pi);
    }
  }
}

}  // namespace mvclip
