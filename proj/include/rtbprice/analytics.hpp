#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/features.hpp"

namespace rtbprice {

enum class GroupKey { day_of_week, time_of_day, iab, age, country, cookie_sync };

inline constexpr std::array<std::string_view, 6> kGroupKeyNames = {"day-of-week", "time-of-day", "iab",
                                                                   "age",         "country",     "cookie-sync"};

inline std::string_view to_string(GroupKey k) { return kGroupKeyNames[static_cast<int>(k)]; }

inline GroupKey parse_group_key(std::string_view s) {
  for (std::size_t i = 0; i < kGroupKeyNames.size(); ++i) {
    if (kGroupKeyNames[i] == s) return static_cast<GroupKey>(i);
  }
  throw ParseError("unknown grouping key '" + std::string(s) + "'");
}

// Nearest rank: the smallest value with at least p% of the sample at or
// below it. `sorted` must be ascending and non-empty; 0 < p <= 100.
inline Decimal nearest_rank(const std::vector<Decimal>& sorted, int percent) {
  if (sorted.empty()) throw InvariantError("quantile of an empty sample");
  if (percent <= 0 || percent > 100) throw InvariantError("percentile out of range");
  const std::size_t n = sorted.size();
  const std::size_t rank = std::max<std::size_t>(1, (static_cast<std::size_t>(percent) * n + 99) / 100);
  return sorted[rank - 1];
}

struct PriceCdfPoint {
  Decimal value;
  std::size_t at_or_below = 0;
};

struct GroupStats {
  std::string group;
  std::size_t count = 0;
  Decimal min, q1, median, q3, p95, max;
  std::vector<PriceCdfPoint> cdf;
};

struct AnalysisTable {
  GroupKey key = GroupKey::day_of_week;
  std::vector<GroupStats> groups;
};

namespace detail {

// (sort order, label)
inline std::pair<int, std::string> group_of(const AdEvent& e, GroupKey key) {
  switch (key) {
    case GroupKey::day_of_week:
      return {static_cast<int>(e.time.day_of_week), std::string(to_string(e.time.day_of_week))};
    case GroupKey::time_of_day: return {e.time.time_of_day, e.time.label()};
    case GroupKey::iab: return {0, e.iab_category};
    case GroupKey::age: return {static_cast<int>(e.age), std::string(to_string(e.age))};
    case GroupKey::country: return {0, e.location};
    case GroupKey::cookie_sync: return {e.cookie_sync ? 1 : 0, e.cookie_sync ? "synced" : "not-synced"};
  }
  throw InvariantError("bad group key");
}

}  // namespace detail

inline GroupStats group_stats(std::string label, std::vector<Decimal> prices) {
  std::sort(prices.begin(), prices.end());
  GroupStats g;
  g.group = std::move(label);
  g.count = prices.size();
  g.min = prices.front();
  g.q1 = nearest_rank(prices, 25);
  g.median = nearest_rank(prices, 50);
  g.q3 = nearest_rank(prices, 75);
  g.p95 = nearest_rank(prices, 95);
  g.max = prices.back();
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (i + 1 == prices.size() || prices[i + 1] != prices[i]) g.cdf.push_back({prices[i], i + 1});
  }
  return g;
}

inline AnalysisTable analyze_prices(const std::vector<AdEvent>& events, GroupKey key) {
  if (events.empty()) throw ParseError("no events to analyze");
  std::map<std::pair<int, std::string>, std::vector<Decimal>> groups;
  for (const auto& e : events) groups[detail::group_of(e, key)].push_back(e.price_value);
  AnalysisTable t;
  t.key = key;
  for (auto& [g, prices] : groups) t.groups.push_back(group_stats(g.second, std::move(prices)));
  return t;
}

// ---------------------------------------------------------------------------
// Output

enum class OutputFormat { table, csv, jsonl };

inline OutputFormat parse_output_format(std::string_view s) {
  if (s == "table") return OutputFormat::table;
  if (s == "csv") return OutputFormat::csv;
  if (s == "jsonl") return OutputFormat::jsonl;
  throw ParseError("unknown output format '" + std::string(s) + "'");
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Summary rows; with `with_cdf` the jsonl rows also carry the CDF points and
// csv gets a second block of (group, price, fraction) rows.
inline void write_table(std::ostream& out, const AnalysisTable& t, OutputFormat fmt, bool with_cdf = false) {
  switch (fmt) {
    case OutputFormat::jsonl:
      for (const auto& g : t.groups) {
        nlohmann::json j;
        j["key"] = to_string(t.key);
        j["group"] = g.group;
        j["count"] = g.count;
        j["min"] = g.min.to_string();
        j["q1"] = g.q1.to_string();
        j["median"] = g.median.to_string();
        j["q3"] = g.q3.to_string();
        j["p95"] = g.p95.to_string();
        j["max"] = g.max.to_string();
        if (with_cdf) {
          auto& arr = j["cdf"] = nlohmann::json::array();
          for (const auto& p : g.cdf) {
            arr.push_back({p.value.to_string(), static_cast<double>(p.at_or_below) / static_cast<double>(g.count)});
          }
        }
        out << j.dump() << '\n';
      }
      return;
    case OutputFormat::csv:
      out << "key,group,count,min,q1,median,q3,p95,max\n";
      for (const auto& g : t.groups) {
        out << to_string(t.key) << ',' << csv_field(g.group) << ',' << g.count << ',' << g.min.to_string() << ','
            << g.q1.to_string() << ',' << g.median.to_string() << ',' << g.q3.to_string() << ','
            << g.p95.to_string() << ',' << g.max.to_string() << '\n';
      }
      if (with_cdf) {
        out << "\ngroup,price_usd,fraction\n";
        for (const auto& g : t.groups) {
          for (const auto& p : g.cdf) {
            out << csv_field(g.group) << ',' << p.value.to_string() << ','
                << static_cast<double>(p.at_or_below) / static_cast<double>(g.count) << '\n';
          }
        }
      }
      return;
    case OutputFormat::table: {
      // Prices shown in CPM, which is how they are usually quoted.
      auto cpm = [](Decimal usd) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(3) << usd.times(1000).to_double();
        return s.str();
      };
      std::size_t w = std::string_view("group").size();
      for (const auto& g : t.groups) w = std::max(w, g.group.size());
      out << std::left << std::setw(static_cast<int>(w)) << "group" << std::right;
      for (const char* h : {"count", "min", "q1", "median", "q3", "p95", "max"}) out << std::setw(10) << h;
      out << "   (CPM, usd)\n";
      for (const auto& g : t.groups) {
        out << std::left << std::setw(static_cast<int>(w)) << g.group << std::right << std::setw(10) << g.count;
        for (const Decimal& v : {g.min, g.q1, g.median, g.q3, g.p95, g.max}) out << std::setw(10) << cpm(v);
        out << '\n';
      }
      return;
    }
  }
}

}  // namespace rtbprice
