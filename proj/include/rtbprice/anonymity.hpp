#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rtbprice/error.hpp"
#include "rtbprice/feature_ids.hpp"
#include "rtbprice/profile.hpp"

namespace rtbprice {

// Class indices in profile feature order.
using AggregatedTuple = std::vector<int>;

struct TupleHash {
  std::size_t operator()(const AggregatedTuple& t) const noexcept {
    std::size_t h = 14695981039346656037ull;
    for (int v : t) {
      h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

inline AggregatedTuple aggregate_event(const AdEvent& event, const GranularityProfile& profile) {
  AggregatedTuple out;
  out.reserve(profile.size());
  for (const auto& spec : profile.features()) {
    if (!spec.mapper) {
      throw InvariantError("profile " + profile.name() + " has no mapping for feature " +
                           std::string(to_string(spec.feature)));
    }
    const RawValue raw = raw_value(event, spec.feature);
    const auto cls = spec.mapper->try_apply(raw);
    if (!cls) {
      throw InvariantError("profile " + profile.name() + ": value '" + raw.label + "' of feature " +
                           std::string(to_string(spec.feature)) + " is unmapped");
    }
    out.push_back(*cls);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surprisal

struct SurprisalResult {
  double bits = 0;  // sum of finite contributions
  std::vector<std::pair<FeatureId, double>> contributions;
  // Features whose observed class has probability zero. Non-empty means the
  // event's surprisal is unbounded.
  std::vector<FeatureId> zero_probability;

  bool unbounded() const { return !zero_probability.empty(); }
};

inline SurprisalResult surprisal_uniform(const GranularityProfile& profile) {
  SurprisalResult r;
  for (const auto& spec : profile.features()) {
    const double bits = std::log2(static_cast<double>(spec.class_count));
    r.contributions.emplace_back(spec.feature, bits);
    r.bits += bits;
  }
  return r;
}

// Per-feature class frequencies of a sample of aggregated tuples.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;
  EmpiricalDistribution(std::vector<FeatureId> features, std::vector<std::vector<std::uint64_t>> counts,
                        std::uint64_t sample_size)
      : features_(std::move(features)), counts_(std::move(counts)), sample_size_(sample_size) {
    if (features_.size() != counts_.size()) throw InvariantError("distribution shape mismatch");
    for (const auto& c : counts_) {
      std::uint64_t total = 0;
      for (auto v : c) total += v;
      if (total != sample_size_) throw InvariantError("distribution counts do not sum to sample size");
    }
  }

  const std::vector<FeatureId>& features() const { return features_; }
  std::uint64_t sample_size() const { return sample_size_; }
  std::size_t class_count(std::size_t feature) const { return counts_[feature].size(); }

  double probability(std::size_t feature, int cls) const {
    const auto& c = counts_.at(feature);
    if (cls < 0 || static_cast<std::size_t>(cls) >= c.size() || sample_size_ == 0) return 0.0;
    return static_cast<double>(c[static_cast<std::size_t>(cls)]) / static_cast<double>(sample_size_);
  }

  std::vector<double> probabilities(std::size_t feature) const {
    std::vector<double> p(counts_.at(feature).size());
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = probability(feature, static_cast<int>(c));
    return p;
  }

  // Format:
  //   distribution
  //   samples <n>
  //   feature <name> <count class 0> <count class 1> ...
  std::string to_text() const {
    std::ostringstream out;
    out << "distribution\nsamples " << sample_size_ << "\n";
    for (std::size_t f = 0; f < features_.size(); ++f) {
      out << "feature " << to_string(features_[f]);
      for (auto v : counts_[f]) out << " " << v;
      out << "\n";
    }
    return out.str();
  }

  static EmpiricalDistribution parse(std::istream& in) {
    std::string line;
    std::optional<std::uint64_t> samples;
    std::vector<FeatureId> features;
    std::vector<std::vector<std::uint64_t>> counts;
    bool header = false;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string word;
      if (!(ss >> word)) continue;
      if (word == "distribution") {
        header = true;
      } else if (word == "samples") {
        std::uint64_t n;
        if (!(ss >> n)) throw ParseError("bad samples line");
        samples = n;
      } else if (word == "feature") {
        std::string name;
        if (!(ss >> name)) throw ParseError("feature line without name");
        features.push_back(feature_from_name_or_throw(name));
        counts.emplace_back();
        for (std::uint64_t v; ss >> v;) counts.back().push_back(v);
      } else {
        throw ParseError("unknown distribution directive '" + word + "'");
      }
    }
    if (!header || !samples) throw ParseError("not a distribution document");
    try {
      return EmpiricalDistribution(std::move(features), std::move(counts), *samples);
    } catch (const InvariantError& e) {
      throw ParseError(e.what());
    }
  }

 private:
  std::vector<FeatureId> features_;
  std::vector<std::vector<std::uint64_t>> counts_;
  std::uint64_t sample_size_ = 0;
};

inline EmpiricalDistribution fit_distributions(const std::vector<AggregatedTuple>& tuples,
                                               const GranularityProfile& profile) {
  if (tuples.empty()) throw InvariantError("cannot fit distributions to an empty sample");
  std::vector<FeatureId> features;
  std::vector<std::vector<std::uint64_t>> counts;
  for (const auto& spec : profile.features()) {
    features.push_back(spec.feature);
    counts.emplace_back(static_cast<std::size_t>(spec.class_count), 0);
  }
  for (const auto& t : tuples) {
    if (t.size() != counts.size()) throw InvariantError("tuple width differs from profile");
    for (std::size_t f = 0; f < t.size(); ++f) {
      if (t[f] < 0 || static_cast<std::size_t>(t[f]) >= counts[f].size()) {
        throw InvariantError("tuple class out of range for feature " + std::string(to_string(features[f])));
      }
      ++counts[f][static_cast<std::size_t>(t[f])];
    }
  }
  return EmpiricalDistribution(std::move(features), std::move(counts), tuples.size());
}

inline SurprisalResult surprisal_empirical(const AggregatedTuple& tuple, const EmpiricalDistribution& dists) {
  if (tuple.size() != dists.features().size()) throw InvariantError("tuple width differs from distribution");
  SurprisalResult r;
  for (std::size_t f = 0; f < tuple.size(); ++f) {
    const double p = dists.probability(f, tuple[f]);
    if (p <= 0.0) {
      r.zero_probability.push_back(dists.features()[f]);
      continue;
    }
    const double bits = -std::log2(p);
    // -log2(1) is -0.0; report a clean zero.
    r.contributions.emplace_back(dists.features()[f], bits == 0.0 ? 0.0 : bits);
    r.bits += bits == 0.0 ? 0.0 : bits;
  }
  return r;
}

// ---------------------------------------------------------------------------
// k-anonymity

struct CdfPoint {
  double value = 0;
  double fraction = 0;  // share of items with value <= `value`
};

template <typename T>
std::vector<CdfPoint> empirical_cdf(std::vector<T> values) {
  std::vector<CdfPoint> out;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({static_cast<double>(values[i]), static_cast<double>(i + 1) / n});
  }
  return out;
}

struct TupleAnonymity {
  AggregatedTuple tuple;
  std::size_t k = 0;        // distinct users emitting the tuple
  std::size_t records = 0;  // records carrying the tuple
};

struct AnonymityReport {
  std::vector<FeatureId> features;
  std::vector<TupleAnonymity> tuples;  // sorted by tuple
  std::vector<CdfPoint> cdf;           // k over distinct tuples
  std::vector<CdfPoint> record_cdf;    // k over records

  std::size_t min_k() const {
    std::size_t m = SIZE_MAX;
    for (const auto& t : tuples) m = std::min(m, t.k);
    return tuples.empty() ? 0 : m;
  }
};

struct UserTuple {
  std::string user_id;
  AggregatedTuple tuple;
};

// Projects tuples of `profile` onto `subset` (all features when empty).
inline std::vector<std::size_t> projection_indices(const GranularityProfile& profile,
                                                   const std::vector<FeatureId>& subset) {
  std::vector<std::size_t> idx;
  if (subset.empty()) {
    for (std::size_t i = 0; i < profile.size(); ++i) idx.push_back(i);
    return idx;
  }
  for (FeatureId f : subset) {
    const auto i = profile.index_of(f);
    if (!i) {
      throw InvariantError("feature " + std::string(to_string(f)) + " is not in profile " + profile.name());
    }
    idx.push_back(*i);
  }
  return idx;
}

inline AnonymityReport k_anonymity_tuples(const std::vector<UserTuple>& records,
                                          const GranularityProfile& profile,
                                          const std::vector<FeatureId>& subset = {}) {
  if (records.empty()) throw InvariantError("k-anonymity needs at least one record");
  const auto idx = projection_indices(profile, subset);

  std::unordered_map<AggregatedTuple, std::pair<std::unordered_set<std::string>, std::size_t>, TupleHash>
      groups;
  for (const auto& r : records) {
    AggregatedTuple key;
    key.reserve(idx.size());
    for (auto i : idx) key.push_back(r.tuple.at(i));
    auto& g = groups[key];
    g.first.insert(r.user_id);
    ++g.second;
  }

  AnonymityReport rep;
  for (auto i : idx) rep.features.push_back(profile.features()[i].feature);
  std::vector<std::size_t> ks;
  std::vector<std::size_t> record_ks;
  for (auto& [tuple, g] : groups) {
    rep.tuples.push_back({tuple, g.first.size(), g.second});
    ks.push_back(g.first.size());
    record_ks.insert(record_ks.end(), g.second, g.first.size());
  }
  std::sort(rep.tuples.begin(), rep.tuples.end(),
            [](const TupleAnonymity& a, const TupleAnonymity& b) { return a.tuple < b.tuple; });
  rep.cdf = empirical_cdf(std::move(ks));
  rep.record_cdf = empirical_cdf(std::move(record_ks));
  return rep;
}

inline AnonymityReport k_anonymity(const std::vector<std::pair<std::string, AdEvent>>& events,
                                   const GranularityProfile& profile,
                                   const std::vector<FeatureId>& subset = {}) {
  std::vector<UserTuple> records;
  records.reserve(events.size());
  for (const auto& [user, event] : events) records.push_back({user, aggregate_event(event, profile)});
  return k_anonymity_tuples(records, profile, subset);
}

// ---------------------------------------------------------------------------
// Coarsening

// Merges classes of one feature: `merge[c]` is the new class of old class c.
inline GranularityProfile coarsen(const GranularityProfile& profile, FeatureId feature,
                                  const std::vector<int>& merge, std::string new_name = {}) {
  auto features = profile.features();
  const auto i = profile.index_of(feature);
  if (!i) throw InvariantError("feature not in profile");
  FeatureSpec& spec = features[*i];
  if (!spec.mapper) throw InvariantError("cannot coarsen a count-only feature");
  if (static_cast<int>(merge.size()) != spec.class_count) throw InvariantError("merge map size mismatch");
  Mapper& m = *spec.mapper;
  const int base = m.base_count();
  std::vector<int> composed(static_cast<std::size_t>(base));
  for (int b = 0; b < base; ++b) {
    const int mid = m.then.empty() ? b : m.then[static_cast<std::size_t>(b)];
    composed[static_cast<std::size_t>(b)] = merge.at(static_cast<std::size_t>(mid));
  }
  m.then = std::move(composed);
  spec.class_count = m.class_count();
  return GranularityProfile(new_name.empty() ? profile.name() + "'" : std::move(new_name),
                            std::move(features), profile.version(), profile.time_bins_per_day());
}

namespace detail {

// Checks that `coarse(x)` is a function of `fine(x)` over probe values that
// hit every region of both mappers.
inline bool mapper_factors_through(const Mapper& fine, const Mapper& coarse) {
  if (fine.same_base(coarse)) {
    const int base = fine.base_count();
    std::map<int, int> fine_to_coarse;
    for (int b = 0; b < base; ++b) {
      const int f = fine.then.empty() ? b : fine.then[static_cast<std::size_t>(b)];
      const int c = coarse.then.empty() ? b : coarse.then[static_cast<std::size_t>(b)];
      const auto [it, inserted] = fine_to_coarse.emplace(f, c);
      if (!inserted && it->second != c) return false;
    }
    return true;
  }

  const bool fine_numeric = fine.kind == Mapper::Kind::bins;
  const bool coarse_numeric = coarse.kind == Mapper::Kind::bins;
  if (fine_numeric != coarse_numeric) return false;

  std::vector<RawValue> probes;
  probes.push_back({"\x01unlisted", std::nullopt});
  if (fine_numeric) {
    std::vector<double> cuts = fine.cuts;
    cuts.insert(cuts.end(), coarse.cuts.begin(), coarse.cuts.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    if (cuts.empty()) {
      probes.push_back({"", 0.0});
    } else {
      probes.push_back({"", cuts.front() - 1.0});
      for (std::size_t i = 0; i < cuts.size(); ++i) {
        probes.push_back({"", cuts[i]});
        if (i + 1 < cuts.size()) probes.push_back({"", cuts[i] + (cuts[i + 1] - cuts[i]) / 2});
      }
      probes.push_back({"", cuts.back() + 1.0});
    }
  } else {
    for (const auto* m : {&fine, &coarse}) {
      for (const auto& l : m->labels) probes.push_back({l, std::nullopt});
      for (const auto& [l, _] : m->table) probes.push_back({l, std::nullopt});
    }
  }

  std::map<int, int> fine_to_coarse;
  for (const auto& p : probes) {
    const auto f = fine.try_apply(p);
    if (!f) continue;  // outside the fine domain
    const auto c = coarse.try_apply(p);
    if (!c) return false;
    const auto [it, inserted] = fine_to_coarse.emplace(*f, *c);
    if (!inserted && it->second != *c) return false;
  }
  return true;
}

}  // namespace detail

// True iff every class of `coarse` is a union of classes of `fine`, feature
// by feature. Both profiles must cover the same feature set.
inline bool is_coarsening(const GranularityProfile& fine, const GranularityProfile& coarse) {
  if (fine.size() != coarse.size()) return false;
  for (const auto& cs : coarse.features()) {
    const auto fi = fine.index_of(cs.feature);
    if (!fi) return false;
    const FeatureSpec& fs = fine.features()[*fi];
    if (cs.class_count > fs.class_count) return false;
    if (!fs.mapper || !cs.mapper) {
      if (fs.mapper || cs.mapper || fs.class_count != cs.class_count) return false;
      continue;
    }
    if (!detail::mapper_factors_through(*fs.mapper, *cs.mapper)) return false;
  }
  return true;
}

// Fills count-only features with an identity mapping over the labels seen in
// `events` so a declared-count profile can run empirical analyses.
inline GranularityProfile materialize(const GranularityProfile& profile, const std::vector<AdEvent>& events) {
  auto features = profile.features();
  for (auto& spec : features) {
    if (spec.mapper) continue;
    std::set<std::string> labels;
    for (const auto& e : events) labels.insert(raw_value(e, spec.feature).label);
    Mapper m;
    m.kind = Mapper::Kind::identity;
    m.labels.assign(labels.begin(), labels.end());
    if (m.labels.empty()) m.labels.push_back("");
    spec.class_count = static_cast<int>(m.labels.size());
    spec.mapper = std::move(m);
  }
  return GranularityProfile(profile.name(), std::move(features), profile.version(),
                            profile.time_bins_per_day());
}

}  // namespace rtbprice
