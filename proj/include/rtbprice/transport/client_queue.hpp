#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rtbprice/error.hpp"
#include "rtbprice/random.hpp"
#include "rtbprice/transport/record.hpp"

namespace rtbprice::transport {

struct DelayBounds {
  std::int64_t min_seconds = 30;
  std::int64_t max_seconds = 72 * 3600;
};

// Holds records locally until a random per-record dispatch time, then
// releases everything due as one shuffled batch. Driven by an external
// clock; no timers.
class ClientQueue {
 public:
  struct Pending {
    ReportRecord record;
    std::int64_t dispatch_at = 0;
  };

  explicit ClientQueue(std::uint64_t seed, DelayBounds bounds = {}, bool opt_in = true)
      : rng_(seed), bounds_(bounds), opt_in_(opt_in) {
    if (bounds_.min_seconds < 0 || bounds_.max_seconds < bounds_.min_seconds) {
      throw InvariantError("delay bounds must satisfy 0 <= min <= max");
    }
  }

  // Returns false (record discarded) when opted out.
  bool enqueue(ReportRecord record, std::int64_t now) {
    if (!opt_in_) return false;
    const std::int64_t delay = uniform_between(rng_, bounds_.min_seconds, bounds_.max_seconds);
    pending_.push_back({std::move(record), now + delay});
    return true;
  }

  std::optional<ReportBatch> dispatch_due(std::int64_t now) {
    if (!opt_in_) return std::nullopt;
    ReportBatch due;
    std::vector<Pending> keep;
    keep.reserve(pending_.size());
    for (auto& p : pending_) {
      if (p.dispatch_at <= now) {
        due.push_back(std::move(p.record));
      } else {
        keep.push_back(std::move(p));
      }
    }
    pending_ = std::move(keep);
    if (due.empty()) return std::nullopt;
    fisher_yates(due, rng_);
    return due;
  }

  // Opting out drops everything still buffered.
  void set_opt_in(bool opt_in) {
    opt_in_ = opt_in;
    if (!opt_in_) pending_.clear();
  }

  bool opt_in() const { return opt_in_; }
  const DelayBounds& bounds() const { return bounds_; }
  const std::vector<Pending>& pending() const { return pending_; }
  std::size_t size() const { return pending_.size(); }

  std::optional<std::int64_t> next_dispatch() const {
    std::optional<std::int64_t> t;
    for (const auto& p : pending_) {
      if (!t || p.dispatch_at < *t) t = p.dispatch_at;
    }
    return t;
  }

 private:
  Rng rng_;
  DelayBounds bounds_;
  bool opt_in_;
  std::vector<Pending> pending_;
};

}  // namespace rtbprice::transport
