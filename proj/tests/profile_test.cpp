#include <gtest/gtest.h>

#include "rtbprice/profile.hpp"

using namespace rtbprice;

namespace {

std::string data(const std::string& rel) { return std::string(RTBPRICE_DATA_DIR) + "/" + rel; }

AdEvent sample_event() {
  AdEvent e;
  e.gender = Gender::female;
  e.age = AgeBucket::a35_44;
  e.location = "ES";
  e.time = temporal_bins(1420072833, 60, 8);
  e.ad_format = AdFormat{320, 50};
  e.winner_dsp = "mopub";
  e.iab_category = "Education";
  e.price_keyword = "charge_price";
  e.price_value = *Decimal::parse("0.00095");
  return e;
}

}  // namespace

TEST(Mapper, IdentityTableBinsAndRemap) {
  Mapper id{Mapper::Kind::identity, {"a", "b", "c"}, {}, {}, std::nullopt, {0, 1, 1}};
  EXPECT_EQ(id.try_apply({"c", std::nullopt}), 1);
  EXPECT_FALSE(id.try_apply({"z", std::nullopt}));
  EXPECT_EQ(id.class_count(), 2);

  Mapper table{Mapper::Kind::table, {}, {{"x", 0}, {"y", 1}}, {}, 2, {}};
  EXPECT_EQ(table.try_apply({"y", std::nullopt}), 1);
  EXPECT_EQ(table.try_apply({"q", std::nullopt}), 2);
  EXPECT_EQ(table.class_count(), 3);

  Mapper bins{Mapper::Kind::bins, {}, {}, {10, 20}, std::nullopt, {}};
  EXPECT_EQ(bins.try_apply({"", 9.99}), 0);
  EXPECT_EQ(bins.try_apply({"", 10.0}), 1);  // cuts are lower-inclusive
  EXPECT_EQ(bins.try_apply({"", 25.0}), 2);
  EXPECT_FALSE(bins.try_apply({"", std::nullopt}));
}

TEST(Mapper, ValidationCatchesBadShapes) {
  Mapper gap{Mapper::Kind::table, {}, {{"x", 0}, {"y", 2}}, {}, std::nullopt, {}};
  EXPECT_THROW(gap.validate("f"), InvariantError);
  Mapper cuts{Mapper::Kind::bins, {}, {}, {2, 1}, std::nullopt, {}};
  EXPECT_THROW(cuts.validate("f"), InvariantError);
  Mapper remap{Mapper::Kind::identity, {"a", "b"}, {}, {}, std::nullopt, {0}};
  EXPECT_THROW(remap.validate("f"), InvariantError);
  Mapper hole{Mapper::Kind::identity, {"a", "b", "c"}, {}, {}, std::nullopt, {0, 2, 2}};
  EXPECT_THROW(hole.validate("f"), InvariantError);
}

TEST(Profile, TextRoundTrip) {
  const auto p = GranularityProfile::load(data("profiles/default.profile"));
  EXPECT_TRUE(p.fully_mapped());
  EXPECT_EQ(p.size(), kFeatureCount);
  const auto again = GranularityProfile::from_text(p.to_text());
  EXPECT_EQ(again, p);
}

TEST(Profile, EscapedLabelsSurviveRoundTrip) {
  Mapper m{Mapper::Kind::table, {}, {{"Arts & Entertainment", 0}, {"a,b:c=d%e#f", 1}}, {}, 2, {}};
  GranularityProfile p("odd name", {{FeatureId::category, 3, m}});
  const auto again = GranularityProfile::from_text(p.to_text());
  EXPECT_EQ(again, p);
  EXPECT_EQ(again.name(), "odd name");
}

TEST(Profile, DefaultProfileMapsASampleEvent) {
  const auto p = GranularityProfile::load(data("profiles/default.profile"));
  const AdEvent e = sample_event();
  for (const auto& spec : p.features()) {
    const auto cls = spec.mapper->try_apply(raw_value(e, spec.feature));
    ASSERT_TRUE(cls) << to_string(spec.feature);
    EXPECT_GE(*cls, 0);
    EXPECT_LT(*cls, spec.class_count);
  }
  // Unknown location and unknown categories fall to the catch-all classes.
  AdEvent odd = e;
  odd.location = "ZZ";
  odd.iab_category = std::string(kUnspecifiedIab);
  odd.ad_format.reset();
  const auto loc = *p.index_of(FeatureId::location);
  const auto cat = *p.index_of(FeatureId::category);
  EXPECT_EQ(p.features()[loc].mapper->try_apply(raw_value(odd, FeatureId::location)), 25);
  EXPECT_EQ(p.features()[cat].mapper->try_apply(raw_value(odd, FeatureId::category)), 25);
}

TEST(Profile, CountOnlyProfilesParse) {
  const auto p = GranularityProfile::load(data("profiles/table2-c1.profile"));
  EXPECT_FALSE(p.fully_mapped());
  EXPECT_EQ(p.features()[*p.index_of(FeatureId::location)].class_count, 240);
}

TEST(Profile, RejectsInconsistentDeclarations) {
  EXPECT_THROW(GranularityProfile::from_text("profile x\nfeature gender 3 identity a,b\n"), ParseError);
  EXPECT_THROW(GranularityProfile::from_text("profile x\nfeature gender 2\nfeature gender 2\n"), ParseError);
  EXPECT_THROW(GranularityProfile::from_text("profile x\nfeature colour 2\n"), ParseError);
  EXPECT_THROW(GranularityProfile::from_text("feature gender 2\n"), ParseError);
  EXPECT_THROW(GranularityProfile::from_text("profile x\ntime-bins 5\n"), ParseError);
  EXPECT_THROW(GranularityProfile::from_text("profile x\nfeature age 2 bins 1,x\n"), ParseError);
  EXPECT_THROW(GranularityProfile::from_text("profile x\nfeature age 2 bins 1 colour=3\n"), ParseError);
}

TEST(Profile, ContinuationLines) {
  const auto p = GranularityProfile::from_text(
      "profile x\nfeature location 3 table ES:0,FR:0,\n   DE:1,\n   IT:2  # tail\n");
  EXPECT_EQ(p.features()[0].mapper->table.size(), 4u);
}
