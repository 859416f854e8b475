#pragma once

#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtbprice/error.hpp"
#include "rtbprice/features.hpp"
#include "rtbprice/pipeline.hpp"

namespace rtbprice {

// Replay log: one JSON object per line, in capture order.
//
//   {"type":"jar","id":"j1","cookies":[{"name":..,"value":..,"domain":..,"session":false}]}
//   {"ts":1420072833,"utc_offset_minutes":60,"first_party":"example.com",
//    "url":"https://...","jar":"j1","dnt":false,"gender":"female","age":31}
//
// A request may carry `cookies` inline instead of naming a jar. `gender`
// and `age` are optional.
struct ReplayRequest {
  Capture capture;
  UserMeta user;
};

struct ReplayResult {
  std::vector<AdEvent> events;
  Totals totals;
  std::size_t requests = 0;
  std::vector<std::string> diagnostics;
};

namespace detail {

inline std::vector<CookieEntry> parse_cookies(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("`cookies` must be an array");
  std::vector<CookieEntry> out;
  for (const auto& c : j) {
    if (!c.is_object()) throw ParseError("cookie must be an object");
    CookieEntry e;
    e.name = c.value("name", "");
    e.value = c.value("value", "");
    e.source_domain = c.value("domain", "");
    e.is_session = c.value("session", false);
    out.push_back(std::move(e));
  }
  return out;
}

inline nlohmann::json cookies_to_json(const std::vector<CookieEntry>& cookies) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cookies) {
    arr.push_back({{"name", c.name}, {"value", c.value}, {"domain", c.source_domain}, {"session", c.is_session}});
  }
  return arr;
}

}  // namespace detail

class ReplayReader {
 public:
  // nullopt for jar lines; throws ParseError on a malformed line.
  std::optional<ReplayRequest> parse_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object");
    if (j.value("type", "") == "jar") {
      if (!j.contains("id") || !j["id"].is_string()) throw ParseError("jar lacks string `id`");
      jars_[j["id"].get<std::string>()] = detail::parse_cookies(j.value("cookies", nlohmann::json::array()));
      return std::nullopt;
    }
    ReplayRequest r;
    if (!j.contains("ts") || !j["ts"].is_number_integer()) throw ParseError("request lacks integer `ts`");
    if (!j.contains("url") || !j["url"].is_string()) throw ParseError("request lacks string `url`");
    r.capture.timestamp = j["ts"].get<std::int64_t>();
    r.capture.url = j["url"].get<std::string>();
    if (const auto it = j.find("utc_offset_minutes"); it != j.end()) {
      if (!it->is_number_integer()) throw ParseError("`utc_offset_minutes` must be an integer");
      r.capture.utc_offset_minutes = it->get<int>();
    }
    if (const auto it = j.find("first_party"); it != j.end()) {
      if (!it->is_string()) throw ParseError("`first_party` must be a string");
      r.capture.first_party = it->get<std::string>();
    }
    if (const auto it = j.find("jar"); it != j.end()) {
      if (!it->is_string()) throw ParseError("`jar` must name a jar");
      const auto jar = jars_.find(it->get<std::string>());
      if (jar == jars_.end()) throw ParseError("unknown jar `" + it->get<std::string>() + "`");
      r.capture.cookies = jar->second;
    } else if (const auto c = j.find("cookies"); c != j.end()) {
      r.capture.cookies = detail::parse_cookies(*c);
    }
    if (const auto it = j.find("dnt"); it != j.end()) {
      if (!it->is_boolean()) throw ParseError("`dnt` must be a boolean");
      r.capture.dnt = it->get<bool>();
    }
    if (const auto it = j.find("gender"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError("`gender` must be a string");
      r.user.gender = parse_gender(it->get<std::string>());
    }
    if (const auto it = j.find("age"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<int>() < 0) throw ParseError("`age` must be a non-negative integer");
      r.user.age = it->get<int>();
    }
    return r;
  }

 private:
  std::map<std::string, std::vector<CookieEntry>> jars_;
};

// Streams a replay log through `pipeline`. One log is one session.
inline ReplayResult replay(std::istream& in, Pipeline& pipeline) {
  ReplayResult out;
  ReplayReader reader;
  pipeline.reset_session();
  std::string line;
  int lineno = 0;
  std::optional<std::int64_t> last_ts;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::optional<ReplayRequest> req;
    try {
      req = reader.parse_line(line);
    } catch (const std::exception& e) {
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": skipped: " + e.what());
      continue;
    }
    if (!req) continue;
    ++out.requests;
    if (last_ts && req->capture.timestamp < *last_ts) {
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": timestamp goes backwards");
    }
    last_ts = req->capture.timestamp;
    pipeline.set_user(req->user);
    Diagnostics diag;
    try {
      if (auto e = pipeline.process(req->capture, &diag)) out.events.push_back(std::move(*e));
    } catch (const std::exception& e) {
      diag.push_back(std::string("skipped: ") + e.what());
    }
    for (auto& d : diag) out.diagnostics.push_back("line " + std::to_string(lineno) + ": " + d);
  }
  out.totals = pipeline.totals();
  return out;
}

inline ReplayResult replay_file(const std::string& path, Pipeline& pipeline) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open replay log " + path);
  return replay(in, pipeline);
}

// ---------------------------------------------------------------------------
// HAR 1.2 import

struct IsoTime {
  std::int64_t utc_seconds = 0;
  int offset_minutes = 0;
};

// `YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM)`
inline IsoTime parse_iso8601(const std::string& s) {
  int y, mo, d, h, mi, sec;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &sec, &consumed) != 6) {
    throw ParseError("bad timestamp '" + s + "'");
  }
  std::size_t i = static_cast<std::size_t>(consumed);
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  }
  int offset = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    int oh = 0, om = 0;
    if (std::sscanf(s.c_str() + i + 1, "%2d:%2d", &oh, &om) != 2) throw ParseError("bad UTC offset in '" + s + "'");
    offset = (s[i] == '-' ? -1 : 1) * (oh * 60 + om);
  } else if (i >= s.size() || s[i] != 'Z') {
    throw ParseError("timestamp '" + s + "' lacks a zone");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw ParseError("bad date in '" + s + "'");
  const std::int64_t local = sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600 + mi * 60 + sec;
  return {local - offset * 60LL, offset};
}

namespace detail {

inline std::optional<std::string> header(const nlohmann::json& headers, std::string_view name) {
  if (!headers.is_array()) return std::nullopt;
  for (const auto& h : headers) {
    if (to_lower(h.value("name", "")) == name) return h.value("value", "");
  }
  return std::nullopt;
}

inline std::optional<std::string> host_of(const std::string& url) {
  try {
    return parse_url(url).host;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace detail

struct HarImport {
  std::vector<std::string> lines;  // replay log lines
  std::vector<std::string> diagnostics;
};

// Converts a HAR capture to a replay log. The jar is the union of every
// cookie seen so far; a cookie counts as persistent when any record of it
// carries an expiry. The first party of an entry is its page's URL (page
// title), else the Referer, else the request host.
inline HarImport import_har(std::istream& in) {
  const auto har = nlohmann::json::parse(in, nullptr, false);
  if (har.is_discarded() || !har.contains("log")) throw ParseError("not a HAR document");
  const auto& log = har["log"];
  std::map<std::string, std::string> page_host;
  if (log.contains("pages") && log["pages"].is_array()) {
    for (const auto& p : log["pages"]) {
      const std::string id = p.value("id", "");
      const std::string title = p.value("title", "");
      if (auto host = detail::host_of(title)) page_host[id] = *host;
    }
  }
  if (!log.contains("entries") || !log["entries"].is_array()) throw ParseError("HAR has no entries");

  HarImport out;
  std::map<std::pair<std::string, std::string>, CookieEntry> jar;  // (domain, name)
  int jar_gen = 0;
  std::string jar_json;
  std::size_t index = 0;
  for (const auto& entry : log["entries"]) {
    ++index;
    try {
      const auto& req = entry.at("request");
      const std::string url = req.at("url").get<std::string>();
      const auto host = detail::host_of(url);
      if (!host) throw ParseError("bad request url");
      const IsoTime t = parse_iso8601(entry.at("startedDateTime").get<std::string>());

      auto absorb = [&](const nlohmann::json& cookies, const std::string& default_domain) {
        if (!cookies.is_array()) return;
        for (const auto& c : cookies) {
          CookieEntry e;
          e.name = c.value("name", "");
          e.value = c.value("value", "");
          e.source_domain = to_lower(c.value("domain", default_domain));
          if (!e.source_domain.empty() && e.source_domain.front() == '.') e.source_domain.erase(0, 1);
          const bool has_expiry = c.contains("expires") && !c["expires"].is_null();
          auto& slot = jar[{e.source_domain, e.name}];
          const bool was_persistent = !slot.name.empty() && !slot.is_session;
          e.is_session = !(has_expiry || was_persistent);
          slot = e;
        }
      };
      absorb(req.value("cookies", nlohmann::json::array()), *host);

      std::vector<CookieEntry> cookies;
      for (const auto& [key, c] : jar) cookies.push_back(c);
      const std::string current = detail::cookies_to_json(cookies).dump();
      if (current != jar_json) {
        jar_json = current;
        ++jar_gen;
        nlohmann::json j = {{"type", "jar"}, {"id", "j" + std::to_string(jar_gen)}};
        j["cookies"] = nlohmann::json::parse(current);
        out.lines.push_back(j.dump());
      }

      std::string first_party = *host;
      if (const auto pr = entry.find("pageref"); pr != entry.end() && pr->is_string() && page_host.count(*pr)) {
        first_party = page_host[*pr];
      } else if (const auto ref = detail::header(req.value("headers", nlohmann::json::array()), "referer")) {
        if (auto h = detail::host_of(*ref)) first_party = *h;
      }
      const auto dnt = detail::header(req.value("headers", nlohmann::json::array()), "dnt");

      nlohmann::json r;
      r["ts"] = t.utc_seconds;
      r["utc_offset_minutes"] = t.offset_minutes;
      r["first_party"] = registrable_domain(first_party);
      r["url"] = url;
      if (jar_gen > 0) r["jar"] = "j" + std::to_string(jar_gen);
      r["dnt"] = dnt && *dnt == "1";
      out.lines.push_back(r.dump());

      if (const auto res = entry.find("response"); res != entry.end() && res->is_object()) {
        absorb(res->value("cookies", nlohmann::json::array()), *host);
      }
    } catch (const std::exception& e) {
      out.diagnostics.push_back("entry " + std::to_string(index) + ": skipped: " + e.what());
    }
  }
  return out;
}

}  // namespace rtbprice
