#include <gtest/gtest.h>

#include <sstream>

#include "rtbprice/features.hpp"

using namespace rtbprice;

namespace {

DspRegistry registry() {
  std::istringstream in("version 1\nmopub mopub.com charge_price either cpm\n");
  return DspRegistry::parse(in);
}

SizeKeywords size_keys() {
  std::istringstream in("joint size\njoint sz\npair w h\n");
  return SizeKeywords::parse(in);
}

}  // namespace

TEST(CookieSync, SnapshotDropsSessionAndShortValues) {
  const CookieJarSnapshot jar({{"id", "abcdefghij", "t.com", false},
                               {"s", "abcdefghijk", "t.com", true},
                               {"short", "abc", "t.com", false}});
  ASSERT_EQ(jar.entries().size(), 1u);
  EXPECT_EQ(jar.entries()[0].name, "id");
}

TEST(CookieSync, RequiresTrackerIdentifierAndThirdParty) {
  const DomainSet trackers({"tracker.com"});
  const CookieJarSnapshot jar({{"uid", "u-1234567890", "other.com", false}});
  EXPECT_TRUE(detect_cookie_sync("http://sync.tracker.com/s?partner_uid=u-1234567890", "news.com", jar, trackers));
  EXPECT_TRUE(detect_cookie_sync("http://sync.tracker.com/s/u-1234567890/px", "news.com", jar, trackers));
  EXPECT_TRUE(detect_cookie_sync("http://sync.tracker.com/s?x=u%2D1234567890", "news.com", jar, trackers));
  EXPECT_FALSE(detect_cookie_sync("http://sync.tracker.com/s?x=other", "news.com", jar, trackers));
  EXPECT_FALSE(detect_cookie_sync("http://cdn.benign.com/s?x=u-1234567890", "news.com", jar, trackers));
  EXPECT_FALSE(detect_cookie_sync("http://sync.tracker.com/s?x=u-1234567890", "www.tracker.com", jar, trackers));
}

TEST(DomainSetTest, SuffixMatching) {
  std::istringstream in("# c\nadnxs.com\n  rlcdn.com  # trailing\n\n");
  const auto s = DomainSet::parse(in);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_TRUE(s.contains("ib.ADNXS.com"));
  EXPECT_FALSE(s.contains("xadnxs.com"));
}

TEST(Iab, LookupNormalizesAndDefaults) {
  std::istringstream in("www.Mobileacademy.com\tEducation\nespn.com\tSports\n");
  const auto m = IabMapping::parse(in);
  EXPECT_EQ(iab_category("mobileacademy.com", m), "Education");
  EXPECT_EQ(iab_category("WWW.ESPN.COM", m), "Sports");
  EXPECT_EQ(iab_category("unknown.org", m), std::string(kUnspecifiedIab));
}

TEST(Iab, CapacityAndFormat) {
  std::istringstream bad("nodomain\n");
  EXPECT_THROW(IabMapping::parse(bad), ParseError);
  std::istringstream big("a.com\tX\nb.com\tY\nc.com\tZ\n");
  EXPECT_THROW(IabMapping::parse(big, 2), InvariantError);
}

TEST(Iab, BundledMappingFitsCapacity) {
  const auto m = IabMapping::load(std::string(RTBPRICE_DATA_DIR) + "/iab_mapping.tsv");
  EXPECT_GT(m.size(), 0u);
  EXPECT_LE(m.size(), IabMapping::kDefaultCapacity);
  EXPECT_EQ(m.lookup("mobileacademy.com"), "Education");
}

TEST(AdFormatTest, JointAndPairedKeywords) {
  const auto reg = registry();
  const auto keys = size_keys();
  auto fmt = [&](const std::string& url) { return extract_ad_format(*detect_nurl(url, reg, 0), keys); };
  EXPECT_EQ(fmt("http://mopub.com/i?size=320x50"), (AdFormat{320, 50}));
  EXPECT_EQ(fmt("http://mopub.com/i?sz=300X250"), (AdFormat{300, 250}));
  EXPECT_EQ(fmt("http://mopub.com/i?h=90&w=728"), (AdFormat{728, 90}));
  EXPECT_FALSE(fmt("http://mopub.com/i?size=big"));
  EXPECT_FALSE(fmt("http://mopub.com/i?w=728"));
  EXPECT_FALSE(fmt("http://mopub.com/i?size=0x50"));
  EXPECT_EQ((AdFormat{300, 250}).label(), "300x250");
}

TEST(Temporal, BinsUseLocalTime) {
  // 2015-01-01T00:40:33Z is a Thursday; +60 min puts it at 01:40 local.
  const auto b = temporal_bins(1420072833, 60, 8);
  EXPECT_EQ(b.day_of_week, DayOfWeek::thursday);
  EXPECT_EQ(b.time_of_day, 0);
  EXPECT_EQ(b.label(), "0-3");
  // -60 min crosses back to Wednesday 23:40.
  const auto w = temporal_bins(1420072833, -60, 8);
  EXPECT_EQ(w.day_of_week, DayOfWeek::wednesday);
  EXPECT_EQ(w.time_of_day, 7);
  EXPECT_EQ(temporal_bins(1420072833, -60, 24).time_of_day, 23);
  EXPECT_THROW(temporal_bins(0, 0, 7), InvariantError);
}

TEST(Temporal, BinBoundariesAgreeWithArithmeticOracle) {
  for (std::int64_t t = 0; t < 14 * 86400; t += 997) {
    for (int bins : {1, 2, 3, 4, 6, 8, 12, 24}) {
      const auto b = temporal_bins(t, 0, bins);
      EXPECT_EQ(b.time_of_day, static_cast<int>((t % 86400) / (86400 / bins)));
      // 1970-01-01 was a Thursday (index 3).
      EXPECT_EQ(static_cast<int>(b.day_of_week), static_cast<int>((t / 86400 + 3) % 7));
    }
  }
}

TEST(Location, CachedOncePerSession) {
  struct Counting : GeoResolver {
    int calls = 0;
    std::optional<std::string> resolve() override {
      ++calls;
      return std::nullopt;
    }
  } geo;
  LocationCache cache;
  EXPECT_EQ(resolve_location(geo, cache), "ZZ");
  EXPECT_EQ(resolve_location(geo, cache), "ZZ");
  EXPECT_EQ(geo.calls, 1);
  cache.reset_session();
  resolve_location(geo, cache);
  EXPECT_EQ(geo.calls, 2);
}

TEST(AgeBuckets, Boundaries) {
  EXPECT_EQ(age_bucket_for(std::nullopt), AgeBucket::undisclosed);
  EXPECT_EQ(age_bucket_for(14), AgeBucket::under_15);
  EXPECT_EQ(age_bucket_for(15), AgeBucket::a15_24);
  EXPECT_EQ(age_bucket_for(24), AgeBucket::a15_24);
  EXPECT_EQ(age_bucket_for(25), AgeBucket::a25_34);
  EXPECT_EQ(age_bucket_for(64), AgeBucket::a55_64);
  EXPECT_EQ(age_bucket_for(65), AgeBucket::a65_plus);
}

TEST(Assemble, CleartextEvent) {
  PriceObservation obs;
  obs.keyword = "charge_price";
  obs.raw_token = "0.95";
  obs.value_usd_per_impression = Decimal::parse("0.00095");
  EventContext ctx;
  ctx.location = "ES";
  ctx.winner_dsp = "mopub";
  ctx.iab_category = "Education";
  const auto e = assemble_event(obs, std::nullopt, ctx, UserMeta{Gender::female, 30}, LeakGuard{});
  EXPECT_EQ(e.price_value, *Decimal::parse("0.00095"));
  EXPECT_EQ(e.price_kind, PriceSource::cleartext);
  EXPECT_EQ(e.age, AgeBucket::a25_34);
  EXPECT_EQ(e.gender, Gender::female);
}

TEST(Assemble, EncryptedNeedsInference) {
  PriceObservation obs;
  obs.keyword = "pr";
  obs.kind = PriceKind::encrypted;
  EXPECT_THROW(assemble_event(obs, std::nullopt, {}, {}, {}), InvariantError);
  const auto e = assemble_event(obs, Decimal::parse("0.001"), {}, {}, {});
  EXPECT_EQ(e.price_kind, PriceSource::inferred);
}

TEST(Assemble, FailsClosedOnIdentifyingStrings) {
  PriceObservation obs;
  obs.keyword = "charge_price";
  obs.value_usd_per_impression = Decimal::parse("0.001");
  EventContext ctx;
  LeakGuard guard{"www.outfit7.com", "http://mopub.com/imp?x", {"u-1234567890"}};
  ctx.iab_category = "outfit7.com";
  EXPECT_THROW(assemble_event(obs, std::nullopt, ctx, {}, guard), LeakError);
  ctx.iab_category = "Games";
  ctx.winner_dsp = "dsp-u-1234567890";
  EXPECT_THROW(assemble_event(obs, std::nullopt, ctx, {}, guard), LeakError);
  ctx.winner_dsp = "mopub";
  EXPECT_NO_THROW(assemble_event(obs, std::nullopt, ctx, {}, guard));
}
