#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/features.hpp"

namespace rtbprice {

// JSON form of an AdEvent. Prices travel as decimal strings so they stay
// exact.
inline nlohmann::json event_to_json(const AdEvent& e) {
  nlohmann::json j;
  j["gender"] = to_string(e.gender);
  j["age"] = to_string(e.age);
  j["location"] = e.location;
  j["time_of_day"] = e.time.time_of_day;
  j["time_bins"] = e.time.bins_per_day;
  j["day_of_week"] = to_string(e.time.day_of_week);
  j["cookie_syncing"] = e.cookie_sync;
  j["do_not_track"] = e.dnt;
  j["ad_format"] = e.ad_format ? nlohmann::json(e.ad_format->label()) : nlohmann::json(nullptr);
  j["winner_dsp"] = e.winner_dsp;
  j["category"] = e.iab_category;
  j["price_keyword"] = e.price_keyword;
  j["price_value"] = e.price_value.to_string();
  j["price_kind"] = to_string(e.price_kind);
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("event lacks `") + key + "`");
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw ParseError(std::string("`") + key + "` must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline AdEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("event is not a JSON object");
  AdEvent e;
  e.gender = parse_gender(detail::require_string(j, "gender"));
  e.age = parse_age_bucket(detail::require_string(j, "age"));
  e.location = detail::require_string(j, "location");
  const auto& tod = detail::require(j, "time_of_day");
  if (!tod.is_number_integer()) throw ParseError("`time_of_day` must be an integer");
  e.time.time_of_day = tod.get<int>();
  if (const auto it = j.find("time_bins"); it != j.end()) {
    if (!it->is_number_integer() || !valid_bins_per_day(it->get<int>())) throw ParseError("bad `time_bins`");
    e.time.bins_per_day = it->get<int>();
  }
  if (e.time.time_of_day < 0 || e.time.time_of_day >= e.time.bins_per_day) throw ParseError("`time_of_day` out of range");
  e.time.day_of_week = parse_day(detail::require_string(j, "day_of_week"));
  const auto& cs = detail::require(j, "cookie_syncing");
  const auto& dnt = detail::require(j, "do_not_track");
  if (!cs.is_boolean() || !dnt.is_boolean()) throw ParseError("`cookie_syncing` and `do_not_track` must be booleans");
  e.cookie_sync = cs.get<bool>();
  e.dnt = dnt.get<bool>();
  if (const auto it = j.find("ad_format"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("`ad_format` must be a string or null");
    e.ad_format = detail::parse_joint_size(it->get<std::string>());
    if (!e.ad_format) throw ParseError("bad `ad_format` '" + it->get<std::string>() + "'");
  }
  e.winner_dsp = detail::require_string(j, "winner_dsp");
  e.iab_category = detail::require_string(j, "category");
  e.price_keyword = detail::require_string(j, "price_keyword");
  const auto& pv = detail::require(j, "price_value");
  if (pv.is_string()) {
    e.price_value = Decimal::parse_or_throw(pv.get<std::string>());
  } else if (pv.is_number()) {
    e.price_value = Decimal::parse_or_throw(pv.dump());
  } else {
    throw ParseError("`price_value` must be a decimal");
  }
  if (const auto it = j.find("price_kind"); it != j.end()) {
    const std::string k = it->is_string() ? it->get<std::string>() : "";
    if (k == "cleartext") {
      e.price_kind = PriceSource::cleartext;
    } else if (k == "inferred") {
      e.price_kind = PriceSource::inferred;
    } else {
      throw ParseError("bad `price_kind`");
    }
  }
  return e;
}

// An event line as used by the analysis commands: the event fields plus an
// optional `user` (needed only for k-anonymity).
struct LabelledEvent {
  std::string user;
  AdEvent event;
};

struct EventFile {
  std::vector<LabelledEvent> events;
  std::vector<std::string> diagnostics;
};

// JSONL; malformed lines are skipped with a diagnostic naming the line.
inline EventFile read_events(std::istream& in) {
  EventFile out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabelledEvent le;
      le.event = event_from_json(j);
      if (const auto it = j.find("user"); it != j.end()) {
        if (!it->is_string()) throw ParseError("`user` must be a string");
        le.user = it->get<std::string>();
      }
      out.events.push_back(std::move(le));
    } catch (const std::exception& e) {
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline EventFile read_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_events(in);
}

}  // namespace rtbprice
