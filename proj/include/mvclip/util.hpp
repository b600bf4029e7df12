#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string_view>

namespace mvclip {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h = kFnvOffset) {
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = kFnvOffset) {
  return fnv1a(std::as_bytes(std::span<const char>(text.data(), text.size())), h);
}

template <typename T>
std::uint64_t fnv1a_values(std::span<const T> values, std::uint64_t h = kFnvOffset) {
  return fnv1a(std::as_bytes(values), h);
}

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return mix64(fnv1a(purpose, mix64(seed)));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
  return mix64(derive_seed(seed, purpose) ^ mix64(index));
}

using Rng = std::mt19937_64;

// Normal draw truncated to +-2 std by rejection.
template <typename T>
T truncated_normal(Rng& rng, T stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  double v = 0.0;
  do {
    v = dist(rng);
  } while (v < -2.0 || v > 2.0);
  return static_cast<T>(v * static_cast<double>(stddev));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace mvclip
