#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvclip/tensor.hpp"
#include "mvclip/util.hpp"

namespace mvclip {

enum class Init { kTruncNormal, kZeros, kOnes };

// Named parameters with trainable flags, in declaration order.
//
// Entries are declared with a shape and an init rule first and allocated by
// materialize(). Counting works on declared shapes, so full-size backbones can
// be audited without allocating them. Each entry draws its initial values from
// a stream seeded by (seed, name): adding or removing entries never changes the
// values of the others.
template <typename T>
class ParameterRegistry {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    Init init = Init::kTruncNormal;
    double init_std = 0.02;
    bool trainable = true;
    Tensor<T> tensor;

    std::size_t numel() const { return numel_of(shape); }
  };

  Entry& declare(const std::string& name, Shape shape, Init init = Init::kTruncNormal, double init_std = 0.02) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    for (auto e : shape) {
      if (e == 0) throw ShapeError("parameter '" + name + "' has a zero extent " + shape_str(shape));
    }
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, std::move(shape), init, init_std, true, {}});
    return entries_.back();
  }

  void materialize(std::uint64_t seed) {
    for (auto& e : entries_) {
      if (e.tensor.defined()) continue;
      e.tensor = Tensor<T>(e.shape, T(0), e.trainable);
      switch (e.init) {
        case Init::kZeros:
          break;
        case Init::kOnes:
          std::fill(e.tensor.storage().begin(), e.tensor.storage().end(), T(1));
          break;
        case Init::kTruncNormal: {
          Rng rng(derive_seed(seed, e.name));
          for (auto& v : e.tensor.storage()) v = truncated_normal<T>(rng, static_cast<T>(e.init_std));
          break;
        }
      }
    }
  }

  bool materialized() const {
    for (const auto& e : entries_) {
      if (!e.tensor.defined()) return false;
    }
    return true;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }

  const Tensor<T>& at(const std::string& name) const {
    const auto& e = entry(name);
    if (!e.tensor.defined()) throw Error("parameter '" + name + "' is declared but not materialized");
    return e.tensor;
  }

  void set_trainable(const std::string& name, bool on) { set_trainable(entry(name), on); }
  static void set_trainable(Entry& e, bool on) {
    e.trainable = on;
    if (e.tensor.defined()) e.tensor.set_requires_grad(on);
  }

  std::span<Entry> entries() { return entries_; }
  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t param_count(bool trainable_only = false) const {
    std::size_t total = 0;
    for (const auto& e : entries_) {
      if (!trainable_only || e.trainable) total += e.numel();
    }
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) {
      if (e.tensor.defined()) e.tensor.zero_grad();
    }
  }

  // Deep copy of values and flags; the copy shares no storage.
  ParameterRegistry clone() const {
    ParameterRegistry out;
    for (const auto& e : entries_) {
      auto& c = out.declare(e.name, e.shape, e.init, e.init_std);
      c.trainable = e.trainable;
      if (e.tensor.defined()) {
        c.tensor = e.tensor.detach();
        c.tensor.set_requires_grad(e.trainable);
      }
    }
    return out;
  }

  // Overwrites values from another registry with identical names and shapes.
  void copy_values_from(const ParameterRegistry& other) {
    for (auto& e : entries_) {
      const auto& src = other.entry(e.name);
      if (src.shape != e.shape) {
        throw ShapeError("parameter '" + e.name + "' has shape " + shape_str(e.shape) + ", source has " +
                         shape_str(src.shape));
      }
      std::copy(src.tensor.data().begin(), src.tensor.data().end(), e.tensor.storage().begin());
    }
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
std::size_t param_count(const ParameterRegistry<T>& registry, bool trainable_only = false) {
  return registry.param_count(trainable_only);
}

// Byte-level checksum over the values of the selected entries.
template <typename T, typename Pred>
std::uint64_t checksum(const ParameterRegistry<T>& registry, Pred select) {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : registry.entries()) {
    if (!select(e)) continue;
    h = fnv1a(e.name, h);
    h = fnv1a_values<T>(e.tensor.data(), h);
  }
  return h;
}

}  // namespace mvclip
