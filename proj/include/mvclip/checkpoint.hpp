#pragma once

// Checkpoint = JSON manifest (format version, config snapshot, tensor table)
// plus a blob of little-endian float32 values next to it.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "mvclip/registry.hpp"

namespace mvclip {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  ParameterRegistry<float> params;
};

namespace detail {

inline std::string blob_path_for(const std::string& manifest) {
  return std::filesystem::path(manifest).replace_extension(".bin").string();
}

inline void put_le32(std::ostream& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline float get_le32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

// Writes `path` (manifest) and the sibling .bin blob.
inline void save_checkpoint(const ParameterRegistry<float>& reg, const nlohmann::json& config, const std::string& path) {
  const auto blob_path = detail::blob_path_for(path);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot write checkpoint blob '" + blob_path + "'");
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : reg.entries()) {
    if (!e.tensor.defined()) throw Error("save_checkpoint: parameter '" + e.name + "' is not materialized");
    for (float v : e.tensor.data()) detail::put_le32(blob, v);
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"trainable", e.trainable}});
    offset += 4 * e.tensor.numel();
  }
  if (!blob) throw IoError("failed writing checkpoint blob '" + blob_path + "'");
  nlohmann::json doc = {{"format_version", kCheckpointFormatVersion},
                        {"config", config},
                        {"blob", std::filesystem::path(blob_path).filename().string()},
                        {"blob_bytes", offset},
                        {"tensors", tensors}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << doc.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptCheckpoint("checkpoint manifest '" + path + "' is not valid JSON");
  }
  if (!doc.contains("format_version") || doc["format_version"] != kCheckpointFormatVersion) {
    throw CorruptCheckpoint("checkpoint '" + path + "' has format version " +
                            (doc.contains("format_version") ? doc["format_version"].dump() : std::string("(none)")) +
                            ", expected " + std::to_string(kCheckpointFormatVersion));
  }
  const auto blob_path = (std::filesystem::path(path).parent_path() / doc.at("blob").get<std::string>()).string();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot read checkpoint blob '" + blob_path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  const auto declared = doc.at("blob_bytes").get<std::size_t>();
  if (bytes.size() != declared) {
    throw CorruptCheckpoint("checkpoint blob '" + blob_path + "' holds " + std::to_string(bytes.size()) +
                            " bytes, manifest declares " + std::to_string(declared));
  }

  Checkpoint ck;
  ck.config = doc.at("config");
  std::size_t expected_offset = 0;
  for (const auto& t : doc.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t n = numel_of(shape);
    if (offset != expected_offset || offset + 4 * n > bytes.size()) {
      throw CorruptCheckpoint("tensor '" + name + "' has offset " + std::to_string(offset) + " inconsistent with blob");
    }
    expected_offset = offset + 4 * n;
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = detail::get_le32(bytes.data() + offset + 4 * i);
    auto& e = ck.params.declare(name, shape);
    e.tensor = Tensor<float>(shape, std::move(values));
    ParameterRegistry<float>::set_trainable(e, t.at("trainable").get<bool>());
  }
  if (expected_offset != bytes.size()) throw CorruptCheckpoint("checkpoint blob has trailing bytes");
  return ck;
}

// Copies checkpoint values into an existing registry; names and shapes must match.
inline void load_into(ParameterRegistry<float>& reg, const Checkpoint& ck) {
  for (const auto& e : reg.entries()) {
    if (!ck.params.contains(e.name)) throw ShapeError("checkpoint has no tensor '" + e.name + "'");
  }
  for (const auto& e : ck.params.entries()) {
    if (!reg.contains(e.name)) throw ShapeError("checkpoint tensor '" + e.name + "' is not part of the model");
  }
  reg.copy_values_from(ck.params);
  for (auto& e : reg.entries()) ParameterRegistry<float>::set_trainable(e, ck.params.entry(e.name).trainable);
}

}  // namespace mvclip
