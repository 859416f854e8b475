#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/pricing/model.hpp"

namespace rtbprice::transport {

// Fallback price used by the bundled model: 0.30 CPM.
inline Decimal default_model_price() { return *Decimal::parse("0.0003"); }

// A single-leaf forest over `schema`. Shipped so a fresh install can price
// encrypted notifications before any training has happened.
inline pricing::ForestModel bundled_default_model(const pricing::FeatureSchema& schema) {
  pricing::ForestModel m;
  m.schema = schema;
  m.meta.version = 1;
  m.meta.trained_at = 0;
  m.meta.mean_usd = default_model_price();
  m.trees.push_back({{pricing::TreeNode::make_leaf(0, default_model_price())}});
  return m;
}

struct PublishedModel {
  std::int64_t version = 0;
  std::string document;  // canonical XML
};

// Current model served to clients. Versions strictly increase.
class ModelRegistry {
 public:
  explicit ModelRegistry(const pricing::ForestModel& initial) { install(initial); }

  // Makes `model` current, bumping its version past the current one if needed.
  std::int64_t publish(pricing::ForestModel model) {
    std::lock_guard lock(mu_);
    model.meta.version = std::max(model.meta.version, current_->version + 1);
    set_locked(model);
    return current_->version;
  }

  std::shared_ptr<const PublishedModel> current() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  // Null when the client already holds the current version.
  std::shared_ptr<const PublishedModel> fetch(std::optional<std::int64_t> client_version) const {
    auto c = current();
    if (client_version && *client_version == c->version) return nullptr;
    return c;
  }

 private:
  void install(const pricing::ForestModel& model) {
    std::lock_guard lock(mu_);
    set_locked(model);
  }

  void set_locked(const pricing::ForestModel& model) {
    auto p = std::make_shared<PublishedModel>();
    p->version = model.meta.version;
    p->document = pricing::serialize_model(model);
    current_ = std::move(p);
  }

  mutable std::mutex mu_;
  std::shared_ptr<const PublishedModel> current_;
};

}  // namespace rtbprice::transport
