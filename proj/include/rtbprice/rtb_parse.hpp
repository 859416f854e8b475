#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/url.hpp"

namespace rtbprice {

using Diagnostics = std::vector<std::string>;

enum class PriceEncoding { cleartext, encrypted, either };
enum class PriceUnit { cpm, micros, usd };
enum class PriceKind { cleartext, encrypted };

inline std::string_view to_string(PriceUnit u) {
  switch (u) {
    case PriceUnit::cpm: return "cpm";
    case PriceUnit::micros: return "micros";
    case PriceUnit::usd: return "usd";
  }
  return "cpm";
}

inline std::string_view to_string(PriceEncoding e) {
  switch (e) {
    case PriceEncoding::cleartext: return "cleartext";
    case PriceEncoding::encrypted: return "encrypted";
    case PriceEncoding::either: return "either";
  }
  return "either";
}

inline std::string_view to_string(PriceKind k) {
  return k == PriceKind::cleartext ? "cleartext" : "encrypted";
}

struct DspRegistryEntry {
  std::string dsp_name;
  std::vector<std::string> host_patterns;
  std::vector<std::string> price_keywords;
  PriceEncoding expects_encrypted = PriceEncoding::either;
  PriceUnit unit = PriceUnit::cpm;
  // Price-like parameters recorded alongside the charge price (bid price...).
  std::vector<std::string> auxiliary_keywords;

  void validate() const {
    if (dsp_name.empty()) throw InvariantError("DSP entry without a name");
    if (host_patterns.empty()) throw InvariantError("DSP '" + dsp_name + "' has no host patterns");
    for (const auto& p : host_patterns) {
      if (p.empty() || p.find("://") != std::string::npos || p.find('/') != std::string::npos ||
          p.front() == '.' || p.back() == '.') {
        throw InvariantError("DSP '" + dsp_name + "': bad host pattern '" + p + "'");
      }
    }
    if (price_keywords.empty()) throw InvariantError("DSP '" + dsp_name + "' has no price keywords");
    std::unordered_set<std::string> seen;
    for (const auto& k : price_keywords) {
      if (k.empty() || !seen.insert(k).second) {
        throw InvariantError("DSP '" + dsp_name + "': duplicate or empty keyword '" + k + "'");
      }
    }
  }
};

// Immutable after load. Line format (whitespace-separated, `#` comments):
//
//   version <n>
//   <name> <pattern,pattern...> <keyword,keyword...> <cleartext|encrypted|either> <cpm|micros|usd> [aux,aux...]
class DspRegistry {
 public:
  DspRegistry() = default;
  explicit DspRegistry(std::vector<DspRegistryEntry> entries, int version = 1)
      : entries_(std::move(entries)), version_(version) {
    for (const auto& e : entries_) e.validate();
  }

  static DspRegistry parse(std::istream& in) {
    std::vector<DspRegistryEntry> entries;
    int version = 0;
    std::string line;
    int lineno = 0;
    auto split_list = [](const std::string& s) {
      std::vector<std::string> out;
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
      }
      return out;
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream fields(line);
      std::vector<std::string> cols;
      for (std::string col; fields >> col;) cols.push_back(col);
      if (cols.empty()) continue;
      const std::string where = "registry line " + std::to_string(lineno) + ": ";
      if (cols[0] == "version") {
        if (cols.size() != 2) throw ParseError(where + "expected `version <n>`");
        version = std::stoi(cols[1]);
        continue;
      }
      if (cols.size() < 5 || cols.size() > 6) throw ParseError(where + "expected 5 or 6 columns");
      DspRegistryEntry e;
      e.dsp_name = cols[0];
      for (auto& p : split_list(cols[1])) e.host_patterns.push_back(to_lower(p));
      e.price_keywords = split_list(cols[2]);
      if (cols[3] == "cleartext") {
        e.expects_encrypted = PriceEncoding::cleartext;
      } else if (cols[3] == "encrypted") {
        e.expects_encrypted = PriceEncoding::encrypted;
      } else if (cols[3] == "either") {
        e.expects_encrypted = PriceEncoding::either;
      } else {
        throw ParseError(where + "unknown encoding '" + cols[3] + "'");
      }
      if (cols[4] == "cpm") {
        e.unit = PriceUnit::cpm;
      } else if (cols[4] == "micros") {
        e.unit = PriceUnit::micros;
      } else if (cols[4] == "usd") {
        e.unit = PriceUnit::usd;
      } else {
        throw ParseError(where + "unknown unit '" + cols[4] + "'");
      }
      if (cols.size() == 6) e.auxiliary_keywords = split_list(cols[5]);
      try {
        e.validate();
      } catch (const InvariantError& err) {
        throw ParseError(where + err.what());
      }
      entries.push_back(std::move(e));
    }
    if (version <= 0) throw ParseError("registry has no `version` line");
    return DspRegistry(std::move(entries), version);
  }

  static DspRegistry load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open registry file " + path);
    return parse(in);
  }

  const std::vector<DspRegistryEntry>& entries() const { return entries_; }
  int version() const { return version_; }

 private:
  std::vector<DspRegistryEntry> entries_;
  int version_ = 1;
};

struct NurlCandidate {
  std::string url;
  DspRegistryEntry dsp;
  std::vector<QueryParam> params;
  std::vector<std::string> path_segments;
  std::int64_t observed_at = 0;  // UTC seconds
  std::string host;
  std::string raw_query;
};

struct AuxiliaryPrice {
  std::string keyword;
  std::string raw_token;
};

struct PriceObservation {
  std::string keyword;
  std::string raw_token;
  PriceKind kind = PriceKind::cleartext;
  PriceUnit unit = PriceUnit::cpm;
  std::optional<Decimal> value_usd_per_impression;
  std::vector<AuxiliaryPrice> auxiliary;
  // Set when the nURL names a currency other than USD; such observations are
  // excluded from totals.
  std::optional<std::string> foreign_currency;
};

// Length of the longest host pattern of `entry` matching `host`, 0 if none.
inline std::size_t match_length(const DspRegistryEntry& entry, std::string_view host) {
  std::size_t best = 0;
  for (const auto& p : entry.host_patterns) {
    if (ends_with_label(host, p)) best = std::max(best, p.size());
  }
  return best;
}

// Returns a candidate iff the URL host matches a registry suffix pattern.
// Longest suffix wins; equal lengths resolve to the earlier entry.
inline std::optional<NurlCandidate> detect_nurl(std::string_view url_text,
                                                const DspRegistry& registry,
                                                std::int64_t observed_at) {
  const Url url = parse_url(url_text);
  const DspRegistryEntry* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& entry : registry.entries()) {
    const std::size_t len = match_length(entry, url.host);
    if (len > best_len) {
      best_len = len;
      best = &entry;
    }
  }
  if (best == nullptr) return std::nullopt;

  NurlCandidate c;
  c.url = std::string(url_text);
  c.dsp = *best;
  c.params = url.params();
  c.path_segments = url.path_segments();
  c.observed_at = observed_at;
  c.host = url.host;
  c.raw_query = url.query;
  return c;
}

inline Decimal normalize_price(Decimal value, PriceUnit unit) {
  if (value.is_negative()) throw InvariantError("negative price " + value.to_string());
  switch (unit) {
    case PriceUnit::cpm: return value.divided_by(1000);
    case PriceUnit::micros: return value.divided_by(1'000'000);
    case PriceUnit::usd: return value;
  }
  return value;
}

inline PriceKind classify_token(std::string_view token) {
  return Decimal::is_decimal_token(token) ? PriceKind::cleartext : PriceKind::encrypted;
}

namespace detail {

inline bool is_keyword(const DspRegistryEntry& dsp, std::string_view name) {
  for (const auto& k : dsp.price_keywords) {
    if (k == name) return true;
  }
  return false;
}

struct KeywordHit {
  std::string keyword;
  std::string token;
};

inline std::vector<KeywordHit> keyword_hits(const NurlCandidate& c) {
  std::vector<KeywordHit> hits;
  for (const auto& p : c.params) {
    if (is_keyword(c.dsp, p.name)) hits.push_back({p.name, p.value});
  }
  if (!hits.empty()) return hits;
  // Path fallback: `key=value` segments, then `key/value` segment pairs.
  for (std::size_t i = 0; i < c.path_segments.size(); ++i) {
    const std::string& seg = c.path_segments[i];
    if (const auto eq = seg.find('='); eq != std::string::npos) {
      const std::string key = seg.substr(0, eq);
      if (is_keyword(c.dsp, key)) hits.push_back({key, seg.substr(eq + 1)});
    } else if (is_keyword(c.dsp, seg) && i + 1 < c.path_segments.size()) {
      hits.push_back({seg, c.path_segments[i + 1]});
      ++i;
    }
  }
  return hits;
}

}  // namespace detail

// Finds the DSP's price keyword in the candidate. Absent means false
// positive: the request is let through with no observation.
inline std::optional<PriceObservation> extract_price(const NurlCandidate& c,
                                                     Diagnostics* diag = nullptr) {
  const auto hits = detail::keyword_hits(c);
  if (hits.empty()) return std::nullopt;
  if (hits.size() > 1 && diag != nullptr) {
    diag->push_back("duplicate price keyword '" + hits[1].keyword + "' in " + c.host +
                    "; using first occurrence");
  }

  PriceObservation obs;
  obs.keyword = hits.front().keyword;
  obs.raw_token = hits.front().token;
  obs.kind = classify_token(obs.raw_token);
  obs.unit = c.dsp.unit;
  if (obs.kind == PriceKind::cleartext) {
    if (auto v = Decimal::parse(obs.raw_token)) {
      obs.value_usd_per_impression = normalize_price(*v, obs.unit);
    } else {
      // Overflow: keep it but treat as unparseable ciphertext-like token.
      obs.kind = PriceKind::encrypted;
    }
  }
  for (const auto& aux : c.dsp.auxiliary_keywords) {
    for (const auto& p : c.params) {
      if (p.name == aux) {
        obs.auxiliary.push_back({aux, p.value});
        break;
      }
    }
  }
  for (const auto& p : c.params) {
    if (to_lower(p.name) == "currency") {
      if (to_lower(p.value) != "usd") {
        obs.foreign_currency = p.value;
        if (diag != nullptr) {
          diag->push_back("non-USD currency '" + p.value + "' from " + c.dsp.dsp_name +
                          "; excluded from totals");
        }
      }
      break;
    }
  }
  return obs;
}

}  // namespace rtbprice
