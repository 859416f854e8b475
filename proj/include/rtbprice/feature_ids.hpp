#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "rtbprice/error.hpp"
#include "rtbprice/features.hpp"

namespace rtbprice {

// The reported metadata fields, in table order. Names double as report
// record JSON keys.
enum class FeatureId {
  gender,
  age,
  location,
  time_of_day,
  day_of_week,
  cookie_syncing,
  do_not_track,
  ad_format,
  winner_dsp,
  category,
  price_keyword,
  price_value,
};

inline constexpr std::size_t kFeatureCount = 12;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "gender",      "age",          "location",   "time_of_day", "day_of_week",   "cookie_syncing",
    "do_not_track", "ad_format",   "winner_dsp", "category",    "price_keyword", "price_value"};

inline std::string_view to_string(FeatureId f) { return kFeatureNames[static_cast<int>(f)]; }

inline std::optional<FeatureId> feature_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i) {
    if (kFeatureNames[i] == name) return static_cast<FeatureId>(i);
  }
  return std::nullopt;
}

inline FeatureId feature_from_name_or_throw(std::string_view name) {
  if (auto f = feature_from_name(name)) return *f;
  throw ParseError("unknown feature '" + std::string(name) + "'");
}

// A raw feature value: a label, and a number where the feature is ordered.
struct RawValue {
  std::string label;
  std::optional<double> numeric;
};

inline RawValue raw_value(const AdEvent& e, FeatureId f) {
  switch (f) {
    case FeatureId::gender: return {std::string(to_string(e.gender)), std::nullopt};
    case FeatureId::age: {
      static constexpr std::array<double, 7> kLower = {0, 15, 25, 35, 45, 55, 65};
      if (e.age == AgeBucket::undisclosed) return {std::string(to_string(e.age)), std::nullopt};
      return {std::string(to_string(e.age)), kLower[static_cast<int>(e.age)]};
    }
    case FeatureId::location: return {e.location, std::nullopt};
    case FeatureId::time_of_day:
      return {e.time.label(), static_cast<double>(e.time.start_hour())};
    case FeatureId::day_of_week:
      return {std::string(to_string(e.time.day_of_week)),
              static_cast<double>(static_cast<int>(e.time.day_of_week))};
    case FeatureId::cookie_syncing: return {e.cookie_sync ? "1" : "0", e.cookie_sync ? 1.0 : 0.0};
    case FeatureId::do_not_track: return {e.dnt ? "1" : "0", e.dnt ? 1.0 : 0.0};
    case FeatureId::ad_format:
      if (!e.ad_format) return {"unknown", std::nullopt};
      return {e.ad_format->label(), static_cast<double>(e.ad_format->area())};
    case FeatureId::winner_dsp: return {e.winner_dsp, std::nullopt};
    case FeatureId::category: return {e.iab_category, std::nullopt};
    case FeatureId::price_keyword: return {e.price_keyword, std::nullopt};
    case FeatureId::price_value: return {e.price_value.to_string(), e.price_value.to_double()};
  }
  throw InvariantError("bad feature id");
}

}  // namespace rtbprice
