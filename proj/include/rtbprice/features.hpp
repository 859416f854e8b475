#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/rtb_parse.hpp"
#include "rtbprice/url.hpp"

namespace rtbprice {

enum class Gender { male, female, undisclosed };

// Ten-year buckets aligned at 5; nothing finer is ever stored.
enum class AgeBucket { under_15, a15_24, a25_34, a35_44, a45_54, a55_64, a65_plus, undisclosed };

enum class DayOfWeek { monday, tuesday, wednesday, thursday, friday, saturday, sunday };

enum class PriceSource { cleartext, inferred };

inline constexpr std::string_view kUnknownLocation = "ZZ";
inline constexpr std::string_view kUnspecifiedIab = "not specified IAB";

inline std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::undisclosed: return "undisclosed";
  }
  return "undisclosed";
}

inline Gender parse_gender(std::string_view s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  if (s == "undisclosed" || s.empty()) return Gender::undisclosed;
  throw ParseError("unknown gender '" + std::string(s) + "'");
}

inline constexpr std::array<std::string_view, 8> kAgeLabels = {
    "0-14", "15-24", "25-34", "35-44", "45-54", "55-64", "65+", "undisclosed"};

inline std::string_view to_string(AgeBucket a) { return kAgeLabels[static_cast<int>(a)]; }

inline AgeBucket parse_age_bucket(std::string_view s) {
  for (std::size_t i = 0; i < kAgeLabels.size(); ++i) {
    if (kAgeLabels[i] == s) return static_cast<AgeBucket>(i);
  }
  throw ParseError("unknown age bucket '" + std::string(s) + "'");
}

inline AgeBucket age_bucket_for(std::optional<int> age) {
  if (!age || *age < 0) return AgeBucket::undisclosed;
  if (*age < 15) return AgeBucket::under_15;
  if (*age >= 65) return AgeBucket::a65_plus;
  return static_cast<AgeBucket>(1 + (*age - 15) / 10);
}

inline constexpr std::array<std::string_view, 7> kDayLabels = {"mon", "tue", "wed", "thu",
                                                                "fri", "sat", "sun"};

inline std::string_view to_string(DayOfWeek d) { return kDayLabels[static_cast<int>(d)]; }

inline DayOfWeek parse_day(std::string_view s) {
  for (std::size_t i = 0; i < kDayLabels.size(); ++i) {
    if (kDayLabels[i] == s) return static_cast<DayOfWeek>(i);
  }
  throw ParseError("unknown day '" + std::string(s) + "'");
}

inline std::string_view to_string(PriceSource s) {
  return s == PriceSource::cleartext ? "cleartext" : "inferred";
}

struct AdFormat {
  int width = 0;
  int height = 0;

  std::string label() const { return std::to_string(width) + "x" + std::to_string(height); }
  std::int64_t area() const { return static_cast<std::int64_t>(width) * height; }
  friend bool operator==(const AdFormat&, const AdFormat&) = default;
};

struct TimeBins {
  int time_of_day = 0;   // bin index within the day
  int bins_per_day = 8;
  DayOfWeek day_of_week = DayOfWeek::monday;

  int bin_hours() const { return 24 / bins_per_day; }
  int start_hour() const { return time_of_day * bin_hours(); }
  std::string label() const {
    return std::to_string(start_hour()) + "-" + std::to_string(start_hour() + bin_hours());
  }
  friend bool operator==(const TimeBins&, const TimeBins&) = default;
};

// One reported ad. Carries no identifier, cookie value, URL or first-party
// domain.
struct AdEvent {
  Gender gender = Gender::undisclosed;
  AgeBucket age = AgeBucket::undisclosed;
  std::string location{kUnknownLocation};
  TimeBins time;
  bool cookie_sync = false;
  bool dnt = false;
  std::optional<AdFormat> ad_format;
  std::string winner_dsp;
  std::string iab_category{kUnspecifiedIab};
  std::string price_keyword;
  Decimal price_value;
  PriceSource price_kind = PriceSource::cleartext;

  friend bool operator==(const AdEvent&, const AdEvent&) = default;
};

// ---------------------------------------------------------------------------
// Cookie synchronization

struct CookieEntry {
  std::string name;
  std::string value;
  std::string source_domain;
  bool is_session = false;
};

class CookieJarSnapshot {
 public:
  static constexpr std::size_t kMinIdentifierLength = 10;

  CookieJarSnapshot() = default;
  explicit CookieJarSnapshot(const std::vector<CookieEntry>& all) {
    for (const auto& e : all) {
      if (e.is_session || e.value.size() < kMinIdentifierLength) continue;
      entries_.push_back(e);
    }
  }

  const std::vector<CookieEntry>& entries() const { return entries_; }

 private:
  std::vector<CookieEntry> entries_;
};

// Domain set with suffix matching (`tracker.com` covers `a.tracker.com`).
class DomainSet {
 public:
  DomainSet() = default;
  explicit DomainSet(const std::vector<std::string>& domains) {
    for (const auto& d : domains) domains_.insert(to_lower(d));
  }

  static DomainSet parse(std::istream& in) {
    std::vector<std::string> domains;
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string d;
      if (ss >> d) domains.push_back(d);
    }
    return DomainSet(domains);
  }

  static DomainSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open domain list " + path);
    return parse(in);
  }

  bool contains(std::string_view host) const {
    std::string h = to_lower(host);
    while (true) {
      if (domains_.count(h)) return true;
      const auto dot = h.find('.');
      if (dot == std::string::npos) return false;
      h.erase(0, dot + 1);
    }
  }

  std::size_t size() const { return domains_.size(); }

 private:
  std::unordered_set<std::string> domains_;
};

// True iff a jar identifier appears verbatim in the URL's parameter values or
// path, the URL goes to a tracker, and the tracker is not the first party.
inline bool detect_cookie_sync(std::string_view request_url, std::string_view first_party,
                               const CookieJarSnapshot& jar, const DomainSet& trackers) {
  const Url url = parse_url(request_url);
  if (!trackers.contains(url.host)) return false;
  if (registrable_domain(url.host) == registrable_domain(first_party)) return false;

  const auto params = url.params();
  const std::string decoded_path = percent_decode(url.path);
  for (const auto& cookie : jar.entries()) {
    if (decoded_path.find(cookie.value) != std::string::npos) return true;
    for (const auto& p : params) {
      if (p.value.find(cookie.value) != std::string::npos) return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// IAB category

class IabMapping {
 public:
  static constexpr std::size_t kDefaultCapacity = 500;

  IabMapping() = default;
  explicit IabMapping(std::map<std::string, std::string> entries,
                      std::size_t capacity = kDefaultCapacity) {
    if (entries.size() > capacity) {
      throw InvariantError("IAB mapping exceeds capacity " + std::to_string(capacity));
    }
    for (auto& [domain, category] : entries) entries_[normalize(domain)] = category;
  }

  // UTF-8 TSV: `domain<TAB>category`, `#` comments.
  static IabMapping parse(std::istream& in, std::size_t capacity = kDefaultCapacity) {
    std::map<std::string, std::string> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line.front() == '#') continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
        throw ParseError("IAB mapping line " + std::to_string(lineno) + ": expected domain<TAB>category");
      }
      entries[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return IabMapping(std::move(entries), capacity);
  }

  static IabMapping load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open IAB mapping " + path);
    return parse(in);
  }

  static std::string normalize(std::string_view domain) {
    std::string d = to_lower(domain);
    while (d.rfind("www.", 0) == 0) d.erase(0, 4);
    return d;
  }

  std::string lookup(std::string_view domain) const {
    const auto it = entries_.find(normalize(domain));
    return it == entries_.end() ? std::string(kUnspecifiedIab) : it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::string> entries_;
};

inline std::string iab_category(std::string_view domain, const IabMapping& mapping) {
  return mapping.lookup(domain);
}

// ---------------------------------------------------------------------------
// Ad format

struct SizeKeywords {
  std::vector<std::string> joint;                           // `300x250` tokens
  std::vector<std::pair<std::string, std::string>> pairs;  // separate w/h

  // Lines: `joint <name>` or `pair <width-name> <height-name>`.
  static SizeKeywords parse(std::istream& in) {
    SizeKeywords k;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string kind;
      if (!(ss >> kind)) continue;
      if (kind == "joint") {
        std::string name;
        if (!(ss >> name)) throw ParseError("size keywords line " + std::to_string(lineno));
        k.joint.push_back(name);
      } else if (kind == "pair") {
        std::string w, h;
        if (!(ss >> w >> h)) throw ParseError("size keywords line " + std::to_string(lineno));
        k.pairs.emplace_back(w, h);
      } else {
        throw ParseError("size keywords line " + std::to_string(lineno) + ": unknown kind");
      }
    }
    return k;
  }

  static SizeKeywords load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open size keyword list " + path);
    return parse(in);
  }
};

namespace detail {

inline std::optional<int> parse_dimension(std::string_view s) {
  if (s.empty() || s.size() > 5) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  if (v <= 0) return std::nullopt;
  return v;
}

inline std::optional<AdFormat> parse_joint_size(std::string_view token) {
  const auto x = token.find_first_of("xX*");
  if (x == std::string_view::npos) return std::nullopt;
  const auto w = parse_dimension(token.substr(0, x));
  const auto h = parse_dimension(token.substr(x + 1));
  if (!w || !h) return std::nullopt;
  return AdFormat{*w, *h};
}

}  // namespace detail

inline std::optional<AdFormat> extract_ad_format(const NurlCandidate& c, const SizeKeywords& keys) {
  for (const auto& p : c.params) {
    for (const auto& j : keys.joint) {
      if (p.name == j) {
        if (auto f = detail::parse_joint_size(p.value)) return f;
      }
    }
    for (const auto& [wname, hname] : keys.pairs) {
      if (p.name != wname) continue;
      const auto w = detail::parse_dimension(p.value);
      if (!w) continue;
      for (const auto& q : c.params) {
        if (q.name == hname) {
          if (auto h = detail::parse_dimension(q.value)) return AdFormat{*w, *h};
        }
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Temporal bins

inline bool valid_bins_per_day(int bins) { return bins > 0 && bins <= 24 && 24 % bins == 0; }

inline TimeBins temporal_bins(std::int64_t observed_at, int utc_offset_minutes,
                              int bins_per_day = 8) {
  if (!valid_bins_per_day(bins_per_day)) {
    throw InvariantError("bins per day must divide 24, got " + std::to_string(bins_per_day));
  }
  using namespace std::chrono;
  const sys_seconds local{seconds{observed_at + std::int64_t{utc_offset_minutes} * 60}};
  const sys_days day = floor<days>(local);
  const auto seconds_of_day = (local - day).count();
  const unsigned iso = weekday{day}.iso_encoding();  // Monday = 1
  TimeBins b;
  b.bins_per_day = bins_per_day;
  b.time_of_day = static_cast<int>(seconds_of_day / (86400 / bins_per_day));
  b.day_of_week = static_cast<DayOfWeek>(iso - 1);
  return b;
}

// ---------------------------------------------------------------------------
// Location

class GeoResolver {
 public:
  virtual ~GeoResolver() = default;
  // Country code, or nullopt when the service is unreachable.
  virtual std::optional<std::string> resolve() = 0;
};

// Reads a country code from a file; used for replay and tests.
class StaticFileGeoResolver : public GeoResolver {
 public:
  explicit StaticFileGeoResolver(std::string path) : path_(std::move(path)) {}

  std::optional<std::string> resolve() override {
    std::ifstream in(path_);
    std::string code;
    if (!(in >> code) || code.size() != 2) return std::nullopt;
    for (auto& ch : code) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return code;
  }

 private:
  std::string path_;
};

class FixedGeoResolver : public GeoResolver {
 public:
  explicit FixedGeoResolver(std::optional<std::string> code) : code_(std::move(code)) {}
  std::optional<std::string> resolve() override { return code_; }

 private:
  std::optional<std::string> code_;
};

// Session cache: at most one resolver call per session, failures included.
class LocationCache {
 public:
  std::string resolve(GeoResolver& resolver) {
    std::lock_guard lock(mu_);
    if (!attempted_) {
      attempted_ = true;
      auto code = resolver.resolve();
      code_ = code ? *code : std::string(kUnknownLocation);
    }
    return code_;
  }

  std::optional<std::string> cached() const {
    std::lock_guard lock(mu_);
    if (!attempted_) return std::nullopt;
    return code_;
  }

  void reset_session() {
    std::lock_guard lock(mu_);
    attempted_ = false;
    code_.clear();
  }

 private:
  mutable std::mutex mu_;
  bool attempted_ = false;
  std::string code_;
};

inline std::string resolve_location(GeoResolver& resolver, LocationCache& session) {
  return session.resolve(resolver);
}

// ---------------------------------------------------------------------------
// Event assembly

struct UserMeta {
  Gender gender = Gender::undisclosed;
  std::optional<int> age;
};

struct EventContext {
  std::string location{kUnknownLocation};
  TimeBins time;
  bool cookie_sync = false;
  bool dnt = false;
  std::optional<AdFormat> ad_format;
  std::string winner_dsp;
  std::string iab_category{kUnspecifiedIab};
};

// Strings that must never reach a record.
struct LeakGuard {
  std::string first_party;
  std::string raw_url;
  std::vector<std::string> cookie_values;
};

namespace detail {

inline void check_leak(std::string_view field, const std::string& value, const LeakGuard& guard) {
  auto leaks = [&](const std::string& forbidden) {
    return !forbidden.empty() && !value.empty() &&
           (value == forbidden || value.find(forbidden) != std::string::npos);
  };
  bool bad = leaks(guard.raw_url);
  if (!guard.first_party.empty()) {
    bad = bad || leaks(guard.first_party) || leaks(registrable_domain(guard.first_party));
  }
  for (const auto& c : guard.cookie_values) bad = bad || leaks(c);
  if (bad) throw LeakError("event field '" + std::string(field) + "' carries an identifying string");
}

}  // namespace detail

// Builds an event from a resolved price. `inferred` supplies the value when
// the observation is encrypted. Fails closed on any identifying string.
inline AdEvent assemble_event(const PriceObservation& price, std::optional<Decimal> inferred,
                              const EventContext& ctx, const UserMeta& user,
                              const LeakGuard& guard) {
  AdEvent e;
  if (price.kind == PriceKind::cleartext && price.value_usd_per_impression) {
    e.price_value = *price.value_usd_per_impression;
    e.price_kind = PriceSource::cleartext;
  } else if (inferred) {
    if (inferred->is_negative()) throw InvariantError("negative inferred price");
    e.price_value = *inferred;
    e.price_kind = PriceSource::inferred;
  } else {
    throw InvariantError("price for keyword '" + price.keyword + "' is unresolved");
  }
  e.price_keyword = price.keyword;
  e.gender = user.gender;
  e.age = age_bucket_for(user.age);
  e.location = ctx.location.empty() ? std::string(kUnknownLocation) : ctx.location;
  e.time = ctx.time;
  e.cookie_sync = ctx.cookie_sync;
  e.dnt = ctx.dnt;
  e.ad_format = ctx.ad_format;
  e.winner_dsp = ctx.winner_dsp;
  e.iab_category = ctx.iab_category.empty() ? std::string(kUnspecifiedIab) : ctx.iab_category;

  detail::check_leak("location", e.location, guard);
  detail::check_leak("winner_dsp", e.winner_dsp, guard);
  detail::check_leak("category", e.iab_category, guard);
  detail::check_leak("price_keyword", e.price_keyword, guard);
  return e;
}

}  // namespace rtbprice
