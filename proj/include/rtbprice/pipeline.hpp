#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rtbprice/anonymity.hpp"
#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/features.hpp"
#include "rtbprice/pricing/infer.hpp"
#include "rtbprice/pricing/model.hpp"
#include "rtbprice/profile.hpp"
#include "rtbprice/rtb_parse.hpp"
#include "rtbprice/url.hpp"

namespace rtbprice {

// Reference data the pipeline reads but never changes.
struct ReferenceData {
  DspRegistry registry;
  IabMapping iab;
  DomainSet trackers;
  SizeKeywords sizes;

  static ReferenceData load(const std::string& dir, const std::optional<std::string>& registry_path = std::nullopt) {
    ReferenceData d;
    d.registry = DspRegistry::load(registry_path.value_or(dir + "/dsp_registry.txt"));
    d.iab = IabMapping::load(dir + "/iab_mapping.tsv");
    d.trackers = DomainSet::load(dir + "/trackers.txt");
    d.sizes = SizeKeywords::load(dir + "/ad_size_keywords.txt");
    return d;
  }
};

// One outgoing request as seen by the browser.
struct Capture {
  std::int64_t timestamp = 0;  // UTC seconds
  int utc_offset_minutes = 0;
  std::string first_party;
  std::string url;
  std::vector<CookieEntry> cookies;
  bool dnt = false;
};

struct Totals {
  Decimal all_time;
  Decimal session;
  std::size_t ads = 0;
  std::size_t session_ads = 0;
  std::size_t cleartext = 0;
  std::size_t inferred = 0;
  std::map<std::string, std::size_t> by_category;
};

// detect -> extract -> normalize/infer -> assemble, with per-session state:
// the location cache, the rolling average and per-tab cookie-sync flags.
class Pipeline {
 public:
  Pipeline(const ReferenceData& data, GranularityProfile profile, std::optional<pricing::ForestModel> model,
           GeoResolver& geo, Decimal fallback_seed)
      : data_(data), profile_(std::move(profile)), geo_(geo), rolling_(fallback_seed) {
    set_model(std::move(model));
  }

  // Installs a new model. A model whose schema does not fit the profile is
  // refused; inference then runs on the rolling average alone.
  bool set_model(std::optional<pricing::ForestModel> model, Diagnostics* diag = nullptr) {
    if (!model) {
      model_.reset();
      return true;
    }
    if (model->schema_hash() != pricing::schema_for(profile_).hash()) {
      if (diag) diag->push_back("model schema does not match profile `" + profile_.name() + "`; using rolling average");
      model_.reset();
      return false;
    }
    rolling_.reseed(model->meta.mean_usd);
    model_ = std::move(model);
    return true;
  }

  const std::optional<pricing::ForestModel>& model() const { return model_; }
  const GranularityProfile& profile() const { return profile_; }
  void set_user(UserMeta user) { user_ = user; }
  const UserMeta& user() const { return user_; }
  const Totals& totals() const { return totals_; }
  const pricing::RollingAverage& rolling() const { return rolling_; }

  // A new browser session: fresh location lookup, tab flags and session total.
  void reset_session() {
    location_.reset_session();
    tab_synced_.clear();
    totals_.session = Decimal{};
    totals_.session_ads = 0;
  }

  // Returns an event when `c` is a priced notification. Everything else,
  // including events that fail closed, yields nothing.
  std::optional<AdEvent> process(const Capture& c, Diagnostics* diag = nullptr) {
    std::string first_party;
    try {
      first_party = registrable_domain(c.first_party);
    } catch (const std::exception&) {
      first_party = to_lower(c.first_party);
    }
    const CookieJarSnapshot jar(c.cookies);

    try {
      if (detect_cookie_sync(c.url, first_party, jar, data_.trackers)) tab_synced_[first_party] = true;
    } catch (const ParseError& e) {
      if (diag) diag->push_back(std::string("unparsable request: ") + e.what());
      return std::nullopt;
    }

    std::optional<NurlCandidate> cand;
    try {
      cand = detect_nurl(c.url, data_.registry, c.timestamp);
    } catch (const ParseError&) {
      return std::nullopt;
    }
    if (!cand) return std::nullopt;

    const auto obs = extract_price(*cand, diag);
    if (!obs) {
      if (diag) diag->push_back("notification from " + cand->dsp.dsp_name + " carries no price keyword");
      return std::nullopt;
    }
    if (obs->foreign_currency) return std::nullopt;

    EventContext ctx;
    ctx.location = resolve_location(geo_, location_);
    ctx.time = temporal_bins(c.timestamp, c.utc_offset_minutes, profile_.time_bins_per_day());
    const auto synced = tab_synced_.find(first_party);
    ctx.cookie_sync = synced != tab_synced_.end() && synced->second;
    ctx.dnt = c.dnt;
    ctx.ad_format = extract_ad_format(*cand, data_.sizes);
    ctx.winner_dsp = cand->dsp.dsp_name;
    ctx.iab_category = iab_category(first_party, data_.iab);

    LeakGuard guard;
    guard.first_party = first_party;
    guard.raw_url = c.url;
    for (const auto& entry : jar.entries()) guard.cookie_values.push_back(entry.value);

    AdEvent event;
    try {
      if (obs->kind == PriceKind::cleartext && obs->value_usd_per_impression) {
        event = assemble_event(*obs, std::nullopt, ctx, user_, guard);
        rolling_.add(event.price_value);
      } else {
        // Features never depend on the price, so a placeholder is enough to
        // lay out the inference input.
        event = assemble_event(*obs, Decimal{}, ctx, user_, guard);
        event.price_value = infer(event);
      }
    } catch (const LeakError& e) {
      if (diag) diag->push_back(std::string("event dropped: ") + e.what());
      return std::nullopt;
    }

    totals_.all_time += event.price_value;
    totals_.session += event.price_value;
    ++totals_.ads;
    ++totals_.session_ads;
    ++(event.price_kind == PriceSource::cleartext ? totals_.cleartext : totals_.inferred);
    ++totals_.by_category[event.iab_category];
    return event;
  }

 private:
  Decimal infer(const AdEvent& event) {
    if (!model_) return rolling_.estimate();
    const auto fv = pricing::features_for(event, profile_, model_->schema);
    const auto r = pricing::infer_price(*model_, fv);
    if (const auto* p = std::get_if<pricing::Prediction>(&r)) return p->value_usd;
    return rolling_.estimate();
  }

  const ReferenceData& data_;
  GranularityProfile profile_;
  std::optional<pricing::ForestModel> model_;
  GeoResolver& geo_;
  LocationCache location_;
  pricing::RollingAverage rolling_;
  UserMeta user_;
  std::map<std::string, bool> tab_synced_;
  Totals totals_;
};

}  // namespace rtbprice
