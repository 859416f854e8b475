#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "rtbprice/anonymity.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/feature_ids.hpp"
#include "rtbprice/profile.hpp"

namespace rtbprice::transport {

// What a client sends: aggregated classes keyed by metadata feature name,
// plus the profile that produced them. No client id, sequence number or
// timestamp finer than the time-of-day class.
struct ReportRecord {
  std::string profile;
  int profile_version = 1;
  std::map<std::string, int> fields;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    j["profile"] = profile;
    j["profile_version"] = profile_version;
    for (const auto& [k, v] : fields) j[k] = v;
    return j;
  }

  // nlohmann objects keep keys sorted, so this is canonical.
  std::string canonical() const { return to_json().dump(); }

  friend bool operator==(const ReportRecord&, const ReportRecord&) = default;
  friend bool operator<(const ReportRecord& a, const ReportRecord& b) {
    return std::tie(a.profile, a.profile_version, a.fields) < std::tie(b.profile, b.profile_version, b.fields);
  }
};

using ReportBatch = std::vector<ReportRecord>;

inline ReportRecord make_report(const AggregatedTuple& tuple, const GranularityProfile& profile) {
  if (tuple.size() != profile.size()) throw InvariantError("tuple width differs from profile");
  ReportRecord r;
  r.profile = profile.name();
  r.profile_version = profile.version();
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    r.fields[std::string(to_string(profile.features()[i].feature))] = tuple[i];
  }
  return r;
}

inline ReportRecord make_report(const AdEvent& event, const GranularityProfile& profile) {
  return make_report(aggregate_event(event, profile), profile);
}

// Validates one record object. Any key outside the record schema rejects it.
inline ReportRecord parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record is not a JSON object");
  ReportRecord r;
  bool has_profile = false, has_version = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "profile") {
      if (!value.is_string() || value.get<std::string>().empty()) throw SchemaError("`profile` must be a non-empty string");
      r.profile = value.get<std::string>();
      has_profile = true;
    } else if (key == "profile_version") {
      if (!value.is_number_integer() || value.get<long long>() < 1) {
        throw SchemaError("`profile_version` must be a positive integer");
      }
      r.profile_version = value.get<int>();
      has_version = true;
    } else if (feature_from_name(key)) {
      if (!value.is_number_integer() || value.get<long long>() < 0 || value.get<long long>() > INT32_MAX) {
        throw SchemaError("`" + key + "` must be a non-negative class index");
      }
      r.fields[key] = value.get<int>();
    } else {
      throw SchemaError("unexpected field `" + key + "`");
    }
  }
  if (!has_profile || !has_version) throw SchemaError("record lacks `profile` or `profile_version`");
  if (r.fields.empty()) throw SchemaError("record carries no features");
  return r;
}

// Batch: a JSON array of records. The batch is atomic; one bad record
// rejects all of it.
inline ReportBatch parse_batch(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("batch is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw SchemaError("batch must be a JSON array");
  ReportBatch batch;
  batch.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      batch.push_back(parse_record(j[i]));
    } catch (const SchemaError& e) {
      throw SchemaError("record " + std::to_string(i) + ": " + e.what());
    }
  }
  return batch;
}

inline std::string serialize_batch(const ReportBatch& batch) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : batch) j.push_back(r.to_json());
  return j.dump();
}

// Checks records against the profiles the server accepts.
inline void check_against(const ReportRecord& r, const std::map<std::string, GranularityProfile>& profiles) {
  const auto it = profiles.find(r.profile);
  if (it == profiles.end()) throw SchemaError("unknown profile `" + r.profile + "`");
  const GranularityProfile& p = it->second;
  if (p.version() != r.profile_version) throw SchemaError("profile version mismatch for `" + r.profile + "`");
  if (r.fields.size() != p.size()) throw SchemaError("record features differ from profile `" + r.profile + "`");
  for (const auto& spec : p.features()) {
    const auto f = r.fields.find(std::string(to_string(spec.feature)));
    if (f == r.fields.end()) throw SchemaError("record lacks `" + std::string(to_string(spec.feature)) + "`");
    if (f->second >= spec.class_count) throw SchemaError("class out of range for `" + f->first + "`");
  }
}

}  // namespace rtbprice::transport
