#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rtbprice/error.hpp"
#include "rtbprice/feature_ids.hpp"

namespace rtbprice {

namespace detail {

// Labels in profile files escape whitespace and `%,:=#`.
inline std::string escape_label(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc <= 0x20 || c == '%' || c == ',' || c == ':' || c == '=' || c == '#' || uc == 0x7f) {
      out += '%';
      out += kHex[uc >> 4];
      out += kHex[uc & 0xf];
    } else {
      out += c;
    }
  }
  return out;
}

inline std::string unescape_label(std::string_view s) {
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%') {
      if (i + 2 >= s.size()) throw ParseError("truncated escape in label '" + std::string(s) + "'");
      const int hi = hex(s[i + 1]);
      const int lo = hex(s[i + 2]);
      if (hi < 0 || lo < 0) throw ParseError("bad escape in label '" + std::string(s) + "'");
      out += static_cast<char>(hi * 16 + lo);
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw ParseError("bad number '" + std::string(s) + "'");
  }
  return v;
}

inline int parse_int(std::string_view s) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw ParseError("bad integer '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace detail

// Maps a raw value to a class index. A base mapping (label identity, label
// table, numeric bins) is optionally followed by a class remap, which is how
// coarsenings compose.
struct Mapper {
  enum class Kind { identity, table, bins };

  Kind kind = Kind::identity;
  std::vector<std::string> labels;     // identity: class = position
  std::map<std::string, int> table;    // table: label -> class
  std::vector<double> cuts;            // bins: class i covers [cuts[i-1], cuts[i])
  std::optional<int> default_class;    // unmapped label / missing number
  std::vector<int> then;               // optional remap of base classes

  int base_count() const {
    switch (kind) {
      case Kind::identity: return static_cast<int>(labels.size());
      case Kind::table: {
        int m = default_class.value_or(-1);
        for (const auto& [_, c] : table) m = std::max(m, c);
        return m + 1;
      }
      case Kind::bins: return static_cast<int>(cuts.size()) + 1;
    }
    return 0;
  }

  int class_count() const {
    if (then.empty()) return base_count();
    return *std::max_element(then.begin(), then.end()) + 1;
  }

  // nullopt when the raw value is outside the mapper's domain.
  std::optional<int> try_apply(const RawValue& v) const {
    std::optional<int> base;
    switch (kind) {
      case Kind::identity: {
        const auto it = std::find(labels.begin(), labels.end(), v.label);
        if (it != labels.end()) base = static_cast<int>(it - labels.begin());
        break;
      }
      case Kind::table: {
        const auto it = table.find(v.label);
        if (it != table.end()) base = it->second;
        break;
      }
      case Kind::bins:
        if (v.numeric) {
          base = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), *v.numeric) -
                                  cuts.begin());
        }
        break;
    }
    if (!base) base = default_class;
    if (!base) return std::nullopt;
    return then.empty() ? *base : then[static_cast<std::size_t>(*base)];
  }

  bool same_base(const Mapper& o) const {
    return kind == o.kind && labels == o.labels && table == o.table && cuts == o.cuts &&
           default_class == o.default_class;
  }

  void validate(std::string_view feature) const {
    const std::string where = "feature " + std::string(feature) + ": ";
    const int base = base_count();
    if (base <= 0) throw InvariantError(where + "mapper has no classes");
    switch (kind) {
      case Kind::identity: {
        std::set<std::string> uniq(labels.begin(), labels.end());
        if (uniq.size() != labels.size()) throw InvariantError(where + "duplicate identity label");
        break;
      }
      case Kind::table: {
        std::vector<bool> hit(static_cast<std::size_t>(base), false);
        for (const auto& [_, c] : table) {
          if (c < 0) throw InvariantError(where + "negative class in table");
          hit[static_cast<std::size_t>(c)] = true;
        }
        if (default_class) hit[static_cast<std::size_t>(*default_class)] = true;
        if (std::find(hit.begin(), hit.end(), false) != hit.end()) {
          throw InvariantError(where + "table does not cover every class");
        }
        break;
      }
      case Kind::bins:
        for (std::size_t i = 1; i < cuts.size(); ++i) {
          if (!(cuts[i - 1] < cuts[i])) throw InvariantError(where + "bin cuts not increasing");
        }
        break;
    }
    if (default_class && (*default_class < 0 || *default_class >= base)) {
      throw InvariantError(where + "default class out of range");
    }
    if (!then.empty()) {
      if (static_cast<int>(then.size()) != base) {
        throw InvariantError(where + "remap length differs from base class count");
      }
      std::vector<bool> hit(then.size(), false);
      for (int c : then) {
        if (c < 0 || c >= base) throw InvariantError(where + "remap class out of range");
        hit[static_cast<std::size_t>(c)] = true;
      }
      const int n = class_count();
      for (int c = 0; c < n; ++c) {
        if (!hit[static_cast<std::size_t>(c)]) throw InvariantError(where + "remap not surjective");
      }
    }
  }

  friend bool operator==(const Mapper&, const Mapper&) = default;
};

struct FeatureSpec {
  FeatureId feature = FeatureId::gender;
  int class_count = 1;
  std::optional<Mapper> mapper;  // absent: count-only (uniform analysis)

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Per-feature class counts plus mappings that define the aggregation level
// of reported data.
//
// Text format, one directive per line; lines starting with whitespace
// continue the previous line:
//
//   profile <name>
//   version <n>
//   time-bins <bins per day>
//   feature <name> <class_count>
//   feature <name> <class_count> identity <l0,l1,...> [then=<c,...>]
//   feature <name> <class_count> table <label:c,...> [default=<c>] [then=<c,...>]
//   feature <name> <class_count> bins <cut,...> [default=<c>] [then=<c,...>]
//
// Labels escape whitespace and `%,:=#` as %XX.
class GranularityProfile {
 public:
  GranularityProfile() = default;
  GranularityProfile(std::string name, std::vector<FeatureSpec> features, int version = 1,
                     int time_bins_per_day = 8)
      : name_(std::move(name)),
        version_(version),
        time_bins_per_day_(time_bins_per_day),
        features_(std::move(features)) {
    validate();
  }

  const std::string& name() const { return name_; }
  int version() const { return version_; }
  int time_bins_per_day() const { return time_bins_per_day_; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }

  std::optional<std::size_t> index_of(FeatureId f) const {
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (features_[i].feature == f) return i;
    }
    return std::nullopt;
  }

  bool fully_mapped() const {
    return std::all_of(features_.begin(), features_.end(),
                       [](const FeatureSpec& s) { return s.mapper.has_value(); });
  }

  void validate() const {
    if (name_.empty()) throw InvariantError("profile without a name");
    if (!valid_bins_per_day(time_bins_per_day_)) throw InvariantError("profile time-bins must divide 24");
    std::set<FeatureId> seen;
    for (const auto& f : features_) {
      if (!seen.insert(f.feature).second) {
        throw InvariantError("profile " + name_ + ": duplicate feature " + std::string(to_string(f.feature)));
      }
      if (f.class_count < 1) throw InvariantError("profile " + name_ + ": class count must be >= 1");
      if (f.mapper) {
        f.mapper->validate(to_string(f.feature));
        if (f.mapper->class_count() != f.class_count) {
          throw InvariantError("profile " + name_ + ": feature " + std::string(to_string(f.feature)) +
                               " declares " + std::to_string(f.class_count) + " classes but maps onto " +
                               std::to_string(f.mapper->class_count()));
        }
      }
    }
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "profile " << detail::escape_label(name_) << "\n";
    out << "version " << version_ << "\n";
    out << "time-bins " << time_bins_per_day_ << "\n";
    for (const auto& f : features_) {
      out << "feature " << to_string(f.feature) << " " << f.class_count;
      if (f.mapper) {
        const Mapper& m = *f.mapper;
        switch (m.kind) {
          case Mapper::Kind::identity: {
            out << " identity ";
            for (std::size_t i = 0; i < m.labels.size(); ++i) {
              out << (i ? "," : "") << detail::escape_label(m.labels[i]);
            }
            break;
          }
          case Mapper::Kind::table: {
            out << " table ";
            bool first = true;
            for (const auto& [label, c] : m.table) {
              out << (first ? "" : ",") << detail::escape_label(label) << ":" << c;
              first = false;
            }
            break;
          }
          case Mapper::Kind::bins: {
            out << " bins ";
            for (std::size_t i = 0; i < m.cuts.size(); ++i) {
              out << (i ? "," : "") << detail::format_double(m.cuts[i]);
            }
            break;
          }
        }
        if (m.default_class) out << " default=" << *m.default_class;
        if (!m.then.empty()) {
          out << " then=";
          for (std::size_t i = 0; i < m.then.size(); ++i) out << (i ? "," : "") << m.then[i];
        }
      }
      out << "\n";
    }
    return out.str();
  }

  static GranularityProfile parse(std::istream& in) {
    std::vector<std::string> logical;
    std::vector<int> line_of;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if ((line[0] == ' ' || line[0] == '\t') && !logical.empty()) {
        // Continuation lines join lists without a separator.
        const auto first = line.find_first_not_of(" \t");
        logical.back() += line.substr(first);
      } else {
        logical.push_back(line);
        line_of.push_back(lineno);
      }
    }

    std::string name;
    int version = 1;
    int bins = 8;
    std::vector<FeatureSpec> features;
    for (std::size_t li = 0; li < logical.size(); ++li) {
      std::istringstream ss(logical[li]);
      std::vector<std::string> tok;
      for (std::string t; ss >> t;) tok.push_back(t);
      const std::string where = "profile line " + std::to_string(line_of[li]) + ": ";
      try {
        if (tok[0] == "profile" && tok.size() == 2) {
          name = detail::unescape_label(tok[1]);
        } else if (tok[0] == "version" && tok.size() == 2) {
          version = detail::parse_int(tok[1]);
        } else if (tok[0] == "time-bins" && tok.size() == 2) {
          bins = detail::parse_int(tok[1]);
        } else if (tok[0] == "feature" && tok.size() >= 3) {
          FeatureSpec spec;
          spec.feature = feature_from_name_or_throw(tok[1]);
          spec.class_count = detail::parse_int(tok[2]);
          if (tok.size() > 3) {
            if (tok.size() < 5) throw ParseError("mapper needs arguments");
            Mapper m;
            const std::string& kind = tok[3];
            if (kind == "identity") {
              m.kind = Mapper::Kind::identity;
              for (const auto& l : detail::split(tok[4], ',')) m.labels.push_back(detail::unescape_label(l));
            } else if (kind == "table") {
              m.kind = Mapper::Kind::table;
              for (const auto& entry : detail::split(tok[4], ',')) {
                const auto colon = entry.rfind(':');
                if (colon == std::string::npos) throw ParseError("table entry without ':'");
                m.table[detail::unescape_label(entry.substr(0, colon))] =
                    detail::parse_int(entry.substr(colon + 1));
              }
            } else if (kind == "bins") {
              m.kind = Mapper::Kind::bins;
              for (const auto& c : detail::split(tok[4], ',')) m.cuts.push_back(detail::parse_double(c));
            } else {
              throw ParseError("unknown mapper kind '" + kind + "'");
            }
            for (std::size_t i = 5; i < tok.size(); ++i) {
              if (tok[i].rfind("default=", 0) == 0) {
                m.default_class = detail::parse_int(tok[i].substr(8));
              } else if (tok[i].rfind("then=", 0) == 0) {
                for (const auto& c : detail::split(tok[i].substr(5), ',')) {
                  m.then.push_back(detail::parse_int(c));
                }
              } else {
                throw ParseError("unknown option '" + tok[i] + "'");
              }
            }
            spec.mapper = std::move(m);
          }
          features.push_back(std::move(spec));
        } else {
          throw ParseError("unrecognized directive '" + tok[0] + "'");
        }
      } catch (const ParseError& e) {
        throw ParseError(where + e.what());
      }
    }
    if (name.empty()) throw ParseError("profile has no `profile <name>` line");
    try {
      return GranularityProfile(name, std::move(features), version, bins);
    } catch (const InvariantError& e) {
      throw ParseError(e.what());
    }
  }

  static GranularityProfile from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
  }

  static GranularityProfile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open profile " + path);
    try {
      return parse(in);
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what());
    }
  }

  friend bool operator==(const GranularityProfile&, const GranularityProfile&) = default;

 private:
  std::string name_;
  int version_ = 1;
  int time_bins_per_day_ = 8;
  std::vector<FeatureSpec> features_;
};

}  // namespace rtbprice
