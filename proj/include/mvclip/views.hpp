#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "mvclip/errors.hpp"

namespace mvclip {

// Screening views in canonical fusion order.
enum class View { kLCC = 0, kRCC = 1, kLMLO = 2, kRMLO = 3 };

inline constexpr std::array<View, 4> kAllViews{View::kLCC, View::kRCC, View::kLMLO, View::kRMLO};

inline std::string_view view_name(View v) {
  switch (v) {
    case View::kLCC: return "LCC";
    case View::kRCC: return "RCC";
    case View::kLMLO: return "LMLO";
    case View::kRMLO: return "RMLO";
  }
  return "?";
}

inline View parse_view(std::string_view name) {
  for (View v : kAllViews) {
    if (view_name(v) == name) return v;
  }
  throw ValidationError("unknown view name '" + std::string(name) + "' (expected LCC, RCC, LMLO or RMLO)");
}

inline bool is_left(View v) { return v == View::kLCC || v == View::kLMLO; }
inline bool is_cc(View v) { return v == View::kLCC || v == View::kRCC; }

inline std::vector<View> four_views() { return {kAllViews.begin(), kAllViews.end()}; }
inline std::vector<View> cc_views() { return {View::kLCC, View::kRCC}; }
inline std::vector<View> mlo_views() { return {View::kLMLO, View::kRMLO}; }

}  // namespace mvclip
