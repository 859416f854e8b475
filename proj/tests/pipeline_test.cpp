#include <gtest/gtest.h>

#include "rtbprice/pipeline.hpp"
#include "rtbprice/transport/model_registry.hpp"
#include "test_support.hpp"

using namespace rtbprice;

namespace {

const std::string kTable1 =
    "http://cpp.imp.mpx.mopub.com/imp?ad_domain=mobileacademy.com&bid_price=1.17&charge_price=0.95&currency=USD";

struct PipelineTest : ::testing::Test {
  ReferenceData data = ReferenceData::load(RTBPRICE_DATA_DIR);
  GranularityProfile profile = fixture::default_profile();
  FixedGeoResolver geo{std::string("ES")};

  Capture cap(const std::string& url, const std::string& fp = "outfit7.com") {
    Capture c;
    c.timestamp = 1420072833;
    c.utc_offset_minutes = 60;
    c.first_party = fp;
    c.url = url;
    return c;
  }
};

}  // namespace

TEST_F(PipelineTest, CleartextNotification) {
  Pipeline p(data, profile, std::nullopt, geo, *Decimal::parse("0.0003"));
  p.set_user({Gender::male, 30});
  const auto e = p.process(cap(kTable1 + "&size=320x50"));
  ASSERT_TRUE(e);
  EXPECT_EQ(e->price_value, *Decimal::parse("0.00095"));
  EXPECT_EQ(e->price_kind, PriceSource::cleartext);
  EXPECT_EQ(e->winner_dsp, "mopub");
  EXPECT_EQ(e->price_keyword, "charge_price");
  EXPECT_EQ(e->location, "ES");
  EXPECT_EQ(e->time.day_of_week, DayOfWeek::thursday);
  EXPECT_EQ(e->time.time_of_day, 0);
  EXPECT_EQ(e->ad_format, (AdFormat{320, 50}));
  EXPECT_EQ(e->age, AgeBucket::a25_34);
  EXPECT_EQ(p.totals().ads, 1u);
  EXPECT_EQ(p.totals().all_time, *Decimal::parse("0.00095"));
  EXPECT_EQ(p.rolling().size(), 1u);
}

TEST_F(PipelineTest, IgnoresOrdinaryTrafficAndFalsePositives) {
  Pipeline p(data, profile, std::nullopt, geo, {});
  Diagnostics diag;
  EXPECT_FALSE(p.process(cap("https://outfit7.com/index.html"), &diag));
  EXPECT_FALSE(p.process(cap("http://ads.mopub.com/m/open?id=1"), &diag));
  EXPECT_FALSE(p.process(cap("not a url"), &diag));
  EXPECT_EQ(p.totals().ads, 0u);
}

TEST_F(PipelineTest, ForeignCurrencyExcluded) {
  Pipeline p(data, profile, std::nullopt, geo, {});
  EXPECT_FALSE(p.process(cap("http://mopub.com/imp?charge_price=1&currency=EUR")));
  EXPECT_EQ(p.totals().ads, 0u);
}

TEST_F(PipelineTest, EncryptedUsesRollingAverageWithoutModel) {
  Pipeline p(data, profile, std::nullopt, geo, *Decimal::parse("0.0003"));
  const std::string enc = "http://ad.doubleclick.net/x?pr=VNpFhQAKtJ4KDFsW2xVAkW5eE0Rb";
  auto e = p.process(cap(enc));
  ASSERT_TRUE(e);
  EXPECT_EQ(e->price_kind, PriceSource::inferred);
  EXPECT_EQ(e->price_value, *Decimal::parse("0.0003"));
  p.process(cap("http://mopub.com/imp?charge_price=2"));
  p.process(cap("http://mopub.com/imp?charge_price=4"));
  e = p.process(cap(enc));
  EXPECT_EQ(e->price_value, *Decimal::parse("0.003"));
  EXPECT_EQ(p.totals().inferred, 2u);
  EXPECT_EQ(p.totals().cleartext, 2u);
}

TEST_F(PipelineTest, EncryptedUsesModelWhenSchemaFits) {
  auto model = transport::bundled_default_model(pricing::schema_for(profile));
  model.trees[0].nodes[0].value_usd = *Decimal::parse("0.0042");
  Pipeline p(data, profile, model, geo, {});
  const auto e = p.process(cap("http://ad.doubleclick.net/x?pr=VNpFhQAKtJ4KDFsW2xVAkW5eE0Rb"));
  EXPECT_EQ(e->price_value, *Decimal::parse("0.0042"));

  auto wrong = model;
  wrong.schema.features.pop_back();
  Diagnostics diag;
  EXPECT_FALSE(p.set_model(wrong, &diag));
  EXPECT_FALSE(p.model());
  EXPECT_EQ(diag.size(), 1u);
}

TEST_F(PipelineTest, CookieSyncFlagIsPerFirstParty) {
  Pipeline p(data, profile, std::nullopt, geo, {});
  Capture sync = cap("http://ib.adnxs.com/getuid?partner=abcdef0123456789");
  sync.cookies = {{"uid", "abcdef0123456789", "adnxs.com", false}};
  EXPECT_FALSE(p.process(sync));
  auto e = p.process(cap(kTable1));
  EXPECT_TRUE(e->cookie_sync);
  e = p.process(cap(kTable1, "other.org"));
  EXPECT_FALSE(e->cookie_sync);
  p.reset_session();
  e = p.process(cap(kTable1));
  EXPECT_FALSE(e->cookie_sync);
}

TEST_F(PipelineTest, SessionTotalsReset) {
  Pipeline p(data, profile, std::nullopt, geo, {});
  p.process(cap(kTable1));
  p.process(cap(kTable1));
  p.reset_session();
  p.process(cap(kTable1));
  EXPECT_EQ(p.totals().ads, 3u);
  EXPECT_EQ(p.totals().session_ads, 1u);
  EXPECT_EQ(p.totals().session, *Decimal::parse("0.00095"));
  EXPECT_EQ(p.totals().all_time, *Decimal::parse("0.00285"));
}

TEST_F(PipelineTest, LeakingEventIsDropped) {
  Pipeline p(data, profile, std::nullopt, geo, {});
  Capture c = cap(kTable1, "unknown-site.org");
  // A persistent cookie whose value appears inside the category label.
  c.cookies = {{"x", "specified IAB", "unknown-site.org", false}};
  Diagnostics diag;
  EXPECT_FALSE(p.process(c, &diag));
  ASSERT_FALSE(diag.empty());
  EXPECT_NE(diag.back().find("dropped"), std::string::npos);
  EXPECT_EQ(p.totals().ads, 0u);
}

TEST_F(PipelineTest, LocationResolvedOncePerSession) {
  struct Counting : GeoResolver {
    int calls = 0;
    std::optional<std::string> resolve() override {
      ++calls;
      return "FR";
    }
  } counting;
  Pipeline p(data, profile, std::nullopt, counting, {});
  p.process(cap(kTable1));
  p.process(cap(kTable1));
  EXPECT_EQ(counting.calls, 1);
  p.reset_session();
  EXPECT_EQ(p.process(cap(kTable1))->location, "FR");
  EXPECT_EQ(counting.calls, 2);
}
