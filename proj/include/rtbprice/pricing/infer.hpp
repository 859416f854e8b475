#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rtbprice/anonymity.hpp"
#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/pricing/model.hpp"
#include "rtbprice/profile.hpp"

namespace rtbprice::pricing {

// One optional value per schema feature; absent means not observed.
using FeatureVector = std::vector<std::optional<double>>;

struct Prediction {
  int price_class = 0;
  Decimal value_usd;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// The model could not place the event; the caller substitutes the rolling
// average.
struct Fallback {
  std::string reason;
};

using InferenceResult = std::variant<Prediction, Fallback>;

namespace detail {

// Leaf index reached by `features`, or a fallback reason.
inline std::variant<std::size_t, Fallback> traverse(const DecisionTreeModel& tree, const FeatureSchema& schema,
                                                    const FeatureVector& features) {
  std::size_t i = 0;
  while (!tree.nodes[i].leaf) {
    const TreeNode& n = tree.nodes[i];
    const auto& value = features[static_cast<std::size_t>(n.feature)];
    const FeatureDecl& decl = schema.features[static_cast<std::size_t>(n.feature)];
    if (!value || std::isnan(*value)) return Fallback{"feature " + decl.name + " is absent"};
    bool go_left = false;
    if (n.kind == SplitKind::categorical) {
      const double v = *value;
      if (v != std::floor(v) || v < 0 || (decl.cardinality > 0 && v >= decl.cardinality)) {
        return Fallback{"value of " + decl.name + " is outside the model's classes"};
      }
      go_left = std::binary_search(n.values.begin(), n.values.end(), static_cast<int>(v));
    } else {
      go_left = *value <= n.threshold;
    }
    i = static_cast<std::size_t>(go_left ? n.left : n.right);
  }
  return i;
}

}  // namespace detail

// Per-class vote counts, or a fallback if any tree cannot place the event.
inline std::variant<std::vector<int>, Fallback> forest_votes(const ForestModel& model,
                                                             const FeatureVector& features) {
  if (features.size() != model.schema.features.size()) {
    throw VersionError("feature vector has " + std::to_string(features.size()) + " entries, model schema has " +
                       std::to_string(model.schema.features.size()));
  }
  std::vector<int> votes;
  for (const auto& tree : model.trees) {
    auto r = detail::traverse(tree, model.schema, features);
    if (auto* fb = std::get_if<Fallback>(&r)) return *fb;
    const TreeNode& leaf = tree.nodes[std::get<std::size_t>(r)];
    if (static_cast<std::size_t>(leaf.price_class) >= votes.size()) {
      votes.resize(static_cast<std::size_t>(leaf.price_class) + 1, 0);
    }
    ++votes[static_cast<std::size_t>(leaf.price_class)];
  }
  return votes;
}

inline InferenceResult infer_price(const ForestModel& model, const FeatureVector& features) {
  auto r = forest_votes(model, features);
  if (auto* fb = std::get_if<Fallback>(&r)) return *fb;
  const auto& votes = std::get<std::vector<int>>(r);
  int best = 0;
  for (std::size_t c = 1; c < votes.size(); ++c) {
    if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  // The value comes from the first tree voting for the winning class.
  for (const auto& tree : model.trees) {
    const auto leaf_index = std::get<std::size_t>(detail::traverse(tree, model.schema, features));
    const TreeNode& leaf = tree.nodes[leaf_index];
    if (leaf.price_class == best) return Prediction{best, leaf.value_usd};
  }
  throw InvariantError("winning class has no leaf");
}

// Features whose class index is an order (age, time of day) split by
// threshold; everything else splits by value set. Price fields are the
// prediction target and never part of the schema.
inline bool is_ordinal(FeatureId f) { return f == FeatureId::age || f == FeatureId::time_of_day; }

inline bool is_price_field(FeatureId f) {
  return f == FeatureId::price_value || f == FeatureId::price_keyword;
}

inline FeatureSchema schema_for(const GranularityProfile& profile) {
  FeatureSchema schema;
  for (const auto& spec : profile.features()) {
    if (is_price_field(spec.feature)) continue;
    schema.features.push_back({std::string(to_string(spec.feature)),
                               is_ordinal(spec.feature) ? SplitKind::numeric : SplitKind::categorical,
                               spec.class_count});
  }
  return schema;
}

// Aggregates `event` under `profile` and lays out the classes in schema
// order. Features the profile cannot map stay absent.
inline FeatureVector features_for(const AdEvent& event, const GranularityProfile& profile,
                                  const FeatureSchema& schema) {
  FeatureVector fv(schema.features.size());
  for (std::size_t i = 0; i < schema.features.size(); ++i) {
    const auto id = feature_from_name(schema.features[i].name);
    if (!id) continue;
    const auto pi = profile.index_of(*id);
    if (!pi) continue;
    const auto& spec = profile.features()[*pi];
    if (!spec.mapper) continue;
    if (auto cls = spec.mapper->try_apply(raw_value(event, *id))) fv[i] = *cls;
  }
  return fv;
}

inline FeatureVector features_from_tuple(const AggregatedTuple& tuple, const GranularityProfile& profile,
                                         const FeatureSchema& schema) {
  FeatureVector fv(schema.features.size());
  for (std::size_t i = 0; i < schema.features.size(); ++i) {
    const auto id = feature_from_name(schema.features[i].name);
    if (!id) continue;
    if (const auto pi = profile.index_of(*id)) fv[i] = tuple.at(*pi);
  }
  return fv;
}

// Mean of the most recent cleartext prices, or the seed when empty.
class RollingAverage {
 public:
  static constexpr std::size_t kDefaultWindow = 50;

  explicit RollingAverage(Decimal seed = {}, std::size_t capacity = kDefaultWindow)
      : seed_(seed), capacity_(capacity) {
    if (capacity_ == 0) throw InvariantError("rolling window capacity must be positive");
  }

  void add(Decimal usd) {
    if (usd.is_negative()) throw InvariantError("negative price in rolling window");
    window_.push_back(usd);
    sum_ += usd;
    if (window_.size() > capacity_) {
      sum_ -= window_.front();
      window_.pop_front();
    }
  }

  Decimal estimate() const {
    if (window_.empty()) return seed_;
    return sum_.divided_by(static_cast<std::int64_t>(window_.size()));
  }

  void reseed(Decimal seed) { seed_ = seed; }
  std::size_t size() const { return window_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Decimal>& window() const { return window_; }

 private:
  Decimal seed_;
  std::size_t capacity_;
  std::deque<Decimal> window_;
  Decimal sum_;
};

}  // namespace rtbprice::pricing
