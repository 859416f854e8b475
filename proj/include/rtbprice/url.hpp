#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "rtbprice/error.hpp"

namespace rtbprice {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool ends_with_label(std::string_view host, std::string_view suffix) {
  if (suffix.empty() || host.size() < suffix.size()) return false;
  if (host.substr(host.size() - suffix.size()) != suffix) return false;
  return host.size() == suffix.size() || host[host.size() - suffix.size() - 1] == '.';
}

// Decodes %XX escapes exactly once and `+` as space. Malformed escapes are
// kept verbatim.
inline std::string percent_decode(std::string_view in) {
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == '%') {
      const int hi = i + 1 < in.size() ? hex(in[i + 1]) : -1;
      const int lo = i + 2 < in.size() ? hex(in[i + 2]) : -1;
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += in[i] == '+' ? ' ' : in[i];
  }
  return out;
}

struct QueryParam {
  std::string name;   // decoded
  std::string value;  // decoded
  std::string raw;    // the exact `name=value` piece as it appeared
};

struct Url {
  std::string scheme;
  std::string host;  // lower-cased
  std::string port;
  std::string path;  // raw, starts with '/' or empty
  std::string query;  // raw, without '?'
  std::string fragment;

  std::vector<QueryParam> params() const;
  std::vector<std::string> path_segments() const;
};

// Splits a raw query string into pieces, keeping each piece's bytes.
inline std::vector<QueryParam> parse_query(std::string_view query) {
  std::vector<QueryParam> out;
  if (query.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t amp = query.find('&', start);
    const std::string_view piece =
        query.substr(start, amp == std::string_view::npos ? std::string_view::npos : amp - start);
    const std::size_t eq = piece.find('=');
    QueryParam p;
    p.raw = std::string(piece);
    p.name = percent_decode(piece.substr(0, eq));
    if (eq != std::string_view::npos) p.value = percent_decode(piece.substr(eq + 1));
    out.push_back(std::move(p));
    if (amp == std::string_view::npos) break;
    start = amp + 1;
  }
  return out;
}

inline std::string serialize_query(const std::vector<QueryParam>& params) {
  std::string out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) out += '&';
    out += params[i].raw;
  }
  return out;
}

inline std::vector<QueryParam> Url::params() const { return parse_query(query); }

inline std::vector<std::string> Url::path_segments() const {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < path.size()) {
    if (path[start] == '/') {
      ++start;
      continue;
    }
    const std::size_t slash = path.find('/', start);
    const std::size_t end = slash == std::string::npos ? path.size() : slash;
    out.push_back(percent_decode(std::string_view(path).substr(start, end - start)));
    start = end;
  }
  return out;
}

// Parses `scheme://[userinfo@]host[:port][/path][?query][#fragment]`.
inline Url parse_url(std::string_view text) {
  Url url;
  const std::size_t colon = text.find("://");
  if (colon == std::string_view::npos || colon == 0) {
    throw ParseError("URL has no scheme: '" + std::string(text) + "'");
  }
  const std::string_view scheme = text.substr(0, colon);
  for (char c : scheme) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') {
      throw ParseError("invalid URL scheme: '" + std::string(scheme) + "'");
    }
  }
  url.scheme = to_lower(scheme);

  std::string_view rest = text.substr(colon + 3);
  const std::size_t auth_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, auth_end);
  rest = auth_end == std::string_view::npos ? std::string_view{} : rest.substr(auth_end);

  if (const std::size_t at = authority.rfind('@'); at != std::string_view::npos) {
    authority.remove_prefix(at + 1);
  }
  std::string_view host = authority;
  if (!authority.empty() && authority.front() == '[') {
    const std::size_t close = authority.find(']');
    if (close == std::string_view::npos) throw ParseError("unterminated IPv6 host");
    host = authority.substr(0, close + 1);
    if (close + 1 < authority.size()) {
      if (authority[close + 1] != ':') throw ParseError("garbage after IPv6 host");
      url.port = std::string(authority.substr(close + 2));
    }
  } else if (const std::size_t pc = authority.rfind(':'); pc != std::string_view::npos) {
    host = authority.substr(0, pc);
    url.port = std::string(authority.substr(pc + 1));
  }
  if (host.empty()) throw ParseError("URL has no host: '" + std::string(text) + "'");
  for (char c : host) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc) || c == '<' || c == '>' || c == '"' || c == '\\') {
      throw ParseError("invalid character in URL host");
    }
  }
  for (char c : url.port) {
    if (!std::isdigit(static_cast<unsigned char>(c))) throw ParseError("invalid URL port");
  }
  url.host = to_lower(host);
  if (url.host.back() == '.') url.host.pop_back();

  if (const std::size_t hash = rest.find('#'); hash != std::string_view::npos) {
    url.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  if (const std::size_t q = rest.find('?'); q != std::string_view::npos) {
    url.query = std::string(rest.substr(q + 1));
    rest = rest.substr(0, q);
  }
  url.path = std::string(rest);
  return url;
}

// Multi-label public suffixes common in ad traffic. Anything else is treated
// as a single-label suffix.
inline constexpr std::array<std::string_view, 28> kMultiLabelSuffixes = {
    "co.uk",  "org.uk", "ac.uk",  "gov.uk", "com.au", "net.au", "org.au",
    "co.jp",  "ne.jp",  "or.jp",  "co.nz",  "com.br", "com.mx", "com.ar",
    "com.tr", "com.cn", "com.hk", "com.sg", "co.in",  "co.kr",  "co.za",
    "com.tw", "com.es", "com.pl", "co.il",  "com.ua", "com.my", "co.id"};

inline bool is_ip_literal(std::string_view host) {
  if (!host.empty() && host.front() == '[') return true;
  return !host.empty() &&
         std::all_of(host.begin(), host.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.'; });
}

// Registrable domain (eTLD+1) of a host, lower-cased, `www.` stripped.
inline std::string registrable_domain(std::string_view host_in) {
  std::string host = to_lower(host_in);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (is_ip_literal(host)) return host;

  std::size_t suffix_labels = 1;
  for (std::string_view s : kMultiLabelSuffixes) {
    if (ends_with_label(host, s)) {
      suffix_labels = 2;
      break;
    }
  }
  std::size_t pos = host.size();
  for (std::size_t labels = 0; labels <= suffix_labels; ++labels) {
    if (pos == 0 || pos == std::string::npos) return host;
    pos = host.rfind('.', pos - 1);
    if (pos == std::string::npos) return host;
  }
  return host.substr(pos + 1);
}

}  // namespace rtbprice
