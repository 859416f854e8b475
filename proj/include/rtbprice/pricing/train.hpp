#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rtbprice/anonymity.hpp"
#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/pricing/infer.hpp"
#include "rtbprice/pricing/model.hpp"
#include "rtbprice/random.hpp"

namespace rtbprice::pricing {

// Four equal-width price classes over [0, p99 of the training prices]; the
// top class is open-ended. A price on a boundary belongs to the upper class.
struct PriceClassScheme {
  static constexpr int kClasses = 4;

  std::array<Decimal, kClasses - 1> boundaries;
  std::array<Decimal, kClasses> representative;  // interval midpoints

  static PriceClassScheme from_prices(std::vector<Decimal> prices) {
    if (prices.empty()) throw InvariantError("price class scheme needs at least one price");
    std::sort(prices.begin(), prices.end());
    // Nearest-rank 99th percentile.
    const std::size_t rank = (99 * prices.size() + 99) / 100;
    Decimal top = prices[std::max<std::size_t>(rank, 1) - 1];
    if (top.is_zero()) top = prices.back();
    Decimal width = top.divided_by(kClasses);
    if (width.raw() < 1) width = Decimal::from_raw(1);
    return with_width(width);
  }

  static PriceClassScheme with_width(Decimal width) {
    if (width.raw() <= 0) throw InvariantError("class width must be positive");
    PriceClassScheme s;
    for (int k = 0; k < kClasses - 1; ++k) s.boundaries[static_cast<std::size_t>(k)] = width.times(k + 1);
    for (int k = 0; k < kClasses; ++k) {
      s.representative[static_cast<std::size_t>(k)] = width.times(2 * k + 1).divided_by(2);
    }
    return s;
  }

  int classify(Decimal usd) const {
    int c = 0;
    while (c < kClasses - 1 && usd >= boundaries[static_cast<std::size_t>(c)]) ++c;
    return c;
  }

  Decimal value_of(int cls) const { return representative.at(static_cast<std::size_t>(cls)); }
};

struct TrainOptions {
  int forest_size = 50;
  std::uint64_t seed = 1;
  int max_depth = 16;
  std::size_t min_samples_leaf = 1;
  // Features drawn per split; 0 means ceil(sqrt(feature count)).
  std::size_t features_per_split = 0;
  std::int64_t trained_at = 0;
  std::int64_t version = 1;
};

struct TrainedModel {
  ForestModel forest;
  PriceClassScheme scheme;
};

namespace detail {

struct Dataset {
  std::vector<std::vector<int>> x;  // rows in schema order
  std::vector<int> y;
  std::vector<int> cardinality;
  std::vector<SplitKind> kind;
};

inline double gini(const std::array<std::size_t, PriceClassScheme::kClasses>& counts, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    s += p * p;
  }
  return 1.0 - s;
}

struct Split {
  int feature = -1;
  SplitKind kind = SplitKind::categorical;
  std::vector<int> values;
  double threshold = 0;
  double gain = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const PriceClassScheme& scheme, const TrainOptions& opt, Rng& rng)
      : data_(data), scheme_(scheme), opt_(opt), rng_(rng) {}

  DecisionTreeModel build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  using Counts = std::array<std::size_t, PriceClassScheme::kClasses>;

  Counts count(const std::vector<std::size_t>& rows) const {
    Counts c{};
    for (auto r : rows) ++c[static_cast<std::size_t>(data_.y[r])];
    return c;
  }

  static int majority(const Counts& c) {
    int best = 0;
    for (int k = 1; k < PriceClassScheme::kClasses; ++k) {
      if (c[static_cast<std::size_t>(k)] > c[static_cast<std::size_t>(best)]) best = k;
    }
    return best;
  }

  int grow(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    const Counts counts = count(rows);
    const int major = majority(counts);
    tree_.nodes.push_back(TreeNode::make_leaf(major, scheme_.value_of(major)));

    const bool pure = counts[static_cast<std::size_t>(major)] == rows.size();
    if (pure || depth >= opt_.max_depth || rows.size() < 2 * opt_.min_samples_leaf) return id;

    const auto split = best_split(rows, counts);
    if (!split) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) {
      (goes_left(*split, data_.x[r][static_cast<std::size_t>(split->feature)]) ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    TreeNode node;
    node.leaf = false;
    node.feature = split->feature;
    node.kind = split->kind;
    node.values = split->values;
    node.threshold = split->threshold;
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    node.left = l;
    node.right = r;
    tree_.nodes[static_cast<std::size_t>(id)] = std::move(node);
    return id;
  }

  static bool goes_left(const Split& s, int v) {
    if (s.kind == SplitKind::numeric) return v <= s.threshold;
    return std::binary_search(s.values.begin(), s.values.end(), v);
  }

  std::optional<Split> best_split(const std::vector<std::size_t>& rows, const Counts& counts) {
    const std::size_t nf = data_.cardinality.size();
    std::vector<std::size_t> order(nf);
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first `mtry` entries are the sampled features.
    std::size_t mtry = opt_.features_per_split;
    if (mtry == 0) mtry = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(nf))));
    mtry = std::min(std::max<std::size_t>(mtry, 1), nf);
    for (std::size_t i = 0; i < nf; ++i) {
      const std::size_t j = i + uniform_below(rng_, nf - i);
      std::swap(order[i], order[j]);
    }

    const double parent = gini(counts, rows.size());
    std::optional<Split> best;
    for (std::size_t i = 0; i < nf; ++i) {
      // Past the sampled features, keep looking only while nothing splits.
      if (i >= mtry && best) break;
      auto s = split_on(static_cast<int>(order[i]), rows, parent);
      if (s && (!best || s->gain > best->gain + 1e-12 ||
                (std::abs(s->gain - best->gain) <= 1e-12 && s->feature < best->feature))) {
        best = std::move(s);
      }
    }
    return best;
  }

  std::optional<Split> split_on(int f, const std::vector<std::size_t>& rows, double parent) const {
    const auto fi = static_cast<std::size_t>(f);
    const int card = data_.cardinality[fi];
    std::vector<Counts> per_value(static_cast<std::size_t>(card));
    for (auto r : rows) ++per_value[static_cast<std::size_t>(data_.x[r][fi])][static_cast<std::size_t>(data_.y[r])];

    std::vector<int> present;
    for (int v = 0; v < card; ++v) {
      const auto& c = per_value[static_cast<std::size_t>(v)];
      if (std::accumulate(c.begin(), c.end(), std::size_t{0}) > 0) present.push_back(v);
    }
    if (present.size() < 2) return std::nullopt;

    if (data_.kind[fi] == SplitKind::categorical) {
      // Price classes are ordered, so sorting values by mean class and
      // scanning prefixes finds good subset splits in linear time.
      auto mean_class = [&](int v) {
        const auto& c = per_value[static_cast<std::size_t>(v)];
        double sum = 0, n = 0;
        for (int k = 0; k < PriceClassScheme::kClasses; ++k) {
          sum += k * static_cast<double>(c[static_cast<std::size_t>(k)]);
          n += static_cast<double>(c[static_cast<std::size_t>(k)]);
        }
        return sum / n;
      };
      std::stable_sort(present.begin(), present.end(),
                       [&](int a, int b) { return mean_class(a) < mean_class(b); });
    }

    const std::size_t n = rows.size();
    Counts left{};
    std::size_t nl = 0;
    Counts total{};
    for (int v : present) {
      for (int k = 0; k < PriceClassScheme::kClasses; ++k) {
        total[static_cast<std::size_t>(k)] += per_value[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)];
      }
    }
    std::optional<Split> best;
    for (std::size_t p = 0; p + 1 < present.size(); ++p) {
      const auto& c = per_value[static_cast<std::size_t>(present[p])];
      for (int k = 0; k < PriceClassScheme::kClasses; ++k) {
        left[static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
        nl += c[static_cast<std::size_t>(k)];
      }
      const std::size_t nr = n - nl;
      if (nl < opt_.min_samples_leaf || nr < opt_.min_samples_leaf) continue;
      Counts right{};
      for (int k = 0; k < PriceClassScheme::kClasses; ++k) {
        right[static_cast<std::size_t>(k)] = total[static_cast<std::size_t>(k)] - left[static_cast<std::size_t>(k)];
      }
      const double child = (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
                           static_cast<double>(n);
      const double gain = parent - child;
      if (gain > 1e-12 && (!best || gain > best->gain + 1e-12)) {
        Split s;
        s.feature = f;
        s.kind = data_.kind[fi];
        s.gain = gain;
        if (s.kind == SplitKind::numeric) {
          s.threshold = present[p];
        } else {
          s.values.assign(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(p) + 1);
          std::sort(s.values.begin(), s.values.end());
        }
        best = std::move(s);
      }
    }
    return best;
  }

  const Dataset& data_;
  const PriceClassScheme& scheme_;
  const TrainOptions& opt_;
  Rng& rng_;
  DecisionTreeModel tree_;
};

}  // namespace detail

// Random forest over events aggregated under `profile`: bootstrap sample per
// tree, Gini splits, random feature subset per split. Deterministic in the
// seed.
inline TrainedModel train_model(const std::vector<AdEvent>& events, const GranularityProfile& profile,
                                const TrainOptions& opt = {}) {
  if (events.empty()) throw InvariantError("no training events");
  if (opt.forest_size < 1) throw InvariantError("forest size must be >= 1");
  for (const auto& e : events) {
    if (e.price_kind != PriceSource::cleartext) throw InvariantError("training events must carry cleartext prices");
  }

  std::vector<Decimal> prices;
  prices.reserve(events.size());
  for (const auto& e : events) prices.push_back(e.price_value);
  const PriceClassScheme scheme = PriceClassScheme::from_prices(prices);

  TrainedModel out;
  out.scheme = scheme;
  out.forest.schema = schema_for(profile);
  out.forest.meta.version = opt.version;
  out.forest.meta.trained_at = opt.trained_at;
  Decimal sum;
  for (auto p : prices) sum += p;
  out.forest.meta.mean_usd = sum.divided_by(static_cast<std::int64_t>(prices.size()));

  detail::Dataset data;
  for (const auto& f : out.forest.schema.features) {
    data.cardinality.push_back(f.cardinality);
    data.kind.push_back(f.kind);
  }
  for (const auto& e : events) {
    const auto tuple = aggregate_event(e, profile);
    const FeatureVector fv = features_from_tuple(tuple, profile, out.forest.schema);
    std::vector<int> row;
    row.reserve(fv.size());
    for (const auto& v : fv) row.push_back(static_cast<int>(*v));
    data.x.push_back(std::move(row));
    data.y.push_back(scheme.classify(e.price_value));
  }

  const bool single_class = std::all_of(data.y.begin(), data.y.end(), [&](int c) { return c == data.y.front(); });
  if (single_class || out.forest.schema.features.empty()) {
    std::array<std::size_t, PriceClassScheme::kClasses> counts{};
    for (int c : data.y) ++counts[static_cast<std::size_t>(c)];
    const int major = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    DecisionTreeModel leaf;
    leaf.nodes.push_back(TreeNode::make_leaf(major, scheme.value_of(major)));
    out.forest.trees.push_back(std::move(leaf));
    return out;
  }

  Rng rng(opt.seed);
  const std::size_t n = data.y.size();
  for (int t = 0; t < opt.forest_size; ++t) {
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = uniform_below(rng, n);
    detail::TreeBuilder builder(data, scheme, opt, rng);
    out.forest.trees.push_back(canonical_tree(builder.build(std::move(rows))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
  double auc_roc = 0;  // unweighted mean of one-vs-rest AUCs
  double f1 = 0;       // macro average over classes present in the labels
  std::vector<int> classes;
  std::vector<std::string> diagnostics;
};

// One-vs-rest AUC by the rank-sum statistic with mid-ranks for ties.
inline double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positive[idx[k]]) {
        rank_sum += mid;
        ++npos;
      }
    }
    i = j;
  }
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return std::nan("");
  const double p = static_cast<double>(npos);
  return (rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(nneg));
}

// `scores[i][c]` is the score of sample i for class c; `predicted[i]` is the
// predicted class (-1 for no prediction).
inline Evaluation evaluate_scores(const std::vector<int>& truth, const std::vector<std::vector<double>>& scores,
                                  const std::vector<int>& predicted, int num_classes) {
  if (truth.empty()) throw InvariantError("evaluation needs held-out samples");
  if (scores.size() != truth.size() || predicted.size() != truth.size()) {
    throw InvariantError("evaluation inputs differ in length");
  }
  Evaluation ev;
  double auc_sum = 0;
  int auc_n = 0;
  double f1_sum = 0;
  int f1_n = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<bool> pos(truth.size());
    std::size_t npos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      pos[i] = truth[i] == c;
      npos += pos[i];
    }
    if (npos == 0) {
      ev.diagnostics.push_back("class " + std::to_string(c) + " absent from held-out set; excluded");
      continue;
    }
    ev.classes.push_back(c);

    std::vector<double> s(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      s[i] = static_cast<std::size_t>(c) < scores[i].size() ? scores[i][static_cast<std::size_t>(c)] : 0.0;
    }
    const double auc = binary_auc(s, pos);
    if (!std::isnan(auc)) {
      auc_sum += auc;
      ++auc_n;
    }

    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (predicted[i] == c && truth[i] == c) ++tp;
      if (predicted[i] == c && truth[i] != c) ++fp;
      if (predicted[i] != c && truth[i] == c) ++fn;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1_sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    ++f1_n;
  }
  if (auc_n == 0) throw InvariantError("AUC undefined: held-out set contains a single class");
  ev.auc_roc = auc_sum / auc_n;
  ev.f1 = f1_sum / f1_n;
  return ev;
}

inline Evaluation evaluate_model(const ForestModel& model, const GranularityProfile& profile,
                                 const PriceClassScheme& scheme, const std::vector<AdEvent>& held_out) {
  std::vector<int> truth, predicted;
  std::vector<std::vector<double>> scores;
  std::size_t fallbacks = 0;
  for (const auto& e : held_out) {
    truth.push_back(scheme.classify(e.price_value));
    const auto fv = features_for(e, profile, model.schema);
    auto votes = forest_votes(model, fv);
    std::vector<double> s(PriceClassScheme::kClasses, 0.0);
    if (auto* v = std::get_if<std::vector<int>>(&votes)) {
      int best = 0;
      for (std::size_t c = 0; c < v->size() && c < s.size(); ++c) {
        s[c] = static_cast<double>((*v)[c]) / static_cast<double>(model.trees.size());
        if ((*v)[c] > (*v)[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
      }
      predicted.push_back(best);
    } else {
      ++fallbacks;
      predicted.push_back(-1);
    }
    scores.push_back(std::move(s));
  }
  Evaluation ev = evaluate_scores(truth, scores, predicted, PriceClassScheme::kClasses);
  if (fallbacks) ev.diagnostics.push_back(std::to_string(fallbacks) + " held-out events fell back");
  return ev;
}

}  // namespace rtbprice::pricing
