#pragma once

// Case manifest CSV: header case_id,view,path,label; one row per image.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvclip/text_encoder.hpp"
#include "mvclip/views.hpp"

namespace mvclip {

struct CaseRecord {
  std::string case_id;
  std::map<View, std::string> images;  // absolute or manifest-relative resolved paths
  int label = 0;
};

inline int parse_label(const std::string& text) {
  if (text == "0" || text == "negative") return 0;
  if (text == "1" || text == "positive") return 1;
  throw ValidationError("unknown label '" + text + "' (expected 0, 1, negative or positive)");
}

inline const std::string& label_text(int label) {
  if (label == 0) return canonical_prompts().train_negative;
  if (label == 1) return canonical_prompts().train_positive;
  throw ValidationError("label must be 0 or 1, got " + std::to_string(label));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

}  // namespace detail

// Cases in first-appearance order. Every view in `required` must be present
// for every case; views outside it are ignored.
inline std::vector<CaseRecord> load_manifest(const std::string& path, const std::vector<View>& required = four_views()) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path + "'");
  const auto base = std::filesystem::path(path).parent_path();
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "case_id,view,path,label") {
    throw ValidationError("manifest '" + path + "' must start with header case_id,view,path,label");
  }
  std::vector<CaseRecord> cases;
  std::map<std::string, std::size_t> index;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv_line(line);
    for (auto& x : f) x = detail::trim(x);
    if (f.size() != 4) throw ValidationError("manifest row " + std::to_string(row) + ": expected 4 fields");
    const View view = parse_view(f[1]);
    const int label = parse_label(f[3]);
    auto [it, fresh] = index.emplace(f[0], cases.size());
    if (fresh) cases.push_back({f[0], {}, label});
    auto& rec = cases[it->second];
    if (rec.label != label) throw ValidationError("case '" + f[0] + "' has inconsistent labels");
    if (rec.images.count(view)) {
      throw ValidationError("case '" + f[0] + "' lists view " + std::string(view_name(view)) + " twice");
    }
    auto image = std::filesystem::path(f[2]);
    if (image.is_relative()) image = base / image;
    rec.images[view] = image.string();
  }
  for (auto& rec : cases) {
    for (View v : required) {
      auto it = rec.images.find(v);
      if (it == rec.images.end()) {
        throw ValidationError("case '" + rec.case_id + "' is missing view " + std::string(view_name(v)));
      }
      std::ifstream probe(it->second, std::ios::binary);
      if (!probe) throw IoError("case '" + rec.case_id + "': cannot read image '" + it->second + "'");
    }
  }
  return cases;
}

inline void write_manifest(const std::string& path, const std::vector<CaseRecord>& cases) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << "case_id,view,path,label\n";
  // Absolute image paths are written relative to the manifest directory.
  const auto base = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  for (const auto& c : cases) {
    for (const auto& [view, image] : c.images) {
      std::filesystem::path p(image);
      if (p.is_absolute()) p = p.lexically_relative(base);
      out << c.case_id << ',' << view_name(view) << ',' << p.generic_string() << ',' << c.label << '\n';
    }
  }
}

}  // namespace mvclip
