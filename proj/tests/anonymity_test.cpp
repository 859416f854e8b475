#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "rtbprice/anonymity.hpp"
#include "rtbprice/random.hpp"

using namespace rtbprice;

namespace {

std::string data(const std::string& rel) { return std::string(RTBPRICE_DATA_DIR) + "/" + rel; }

GranularityProfile three_feature_profile() {
  return GranularityProfile::from_text(
      "profile t\n"
      "feature gender 3 identity male,female,undisclosed\n"
      "feature day_of_week 7 identity mon,tue,wed,thu,fri,sat,sun\n"
      "feature cookie_syncing 2 identity 0,1\n");
}

}  // namespace

TEST(Uniform, SumsLog2OfClassCounts) {
  const auto p = GranularityProfile::from_text("profile u\nfeature gender 2\nfeature age 8\nfeature category 1\n");
  const auto r = surprisal_uniform(p);
  EXPECT_DOUBLE_EQ(r.bits, 4.0);
  ASSERT_EQ(r.contributions.size(), 3u);
  EXPECT_DOUBLE_EQ(r.contributions[2].second, 0.0);
}

TEST(Uniform, BundledLadderValues) {
  const double expected[] = {60.162, 55.84, 54.255, 47.612, 43.553, 42.553, 40.553, 38.29, 31.494};
  for (int i = 0; i < 9; ++i) {
    const auto p = GranularityProfile::load(data("profiles/table2-c" + std::to_string(i + 1) + ".profile"));
    EXPECT_NEAR(surprisal_uniform(p).bits, expected[i], 0.05) << p.name();
  }
  const double expected3[] = {29.866, 27.043, 25.236, 23.651, 21.148, 17.836};
  for (int i = 0; i < 6; ++i) {
    const auto p = GranularityProfile::load(data("profiles/table3-c" + std::to_string(i + 1) + ".profile"));
    EXPECT_NEAR(surprisal_uniform(p).bits, expected3[i], 0.05) << p.name();
  }
}

TEST(Empirical, MatchesHandComputedFrequencies) {
  const auto p = three_feature_profile();
  const std::vector<AggregatedTuple> sample = {{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 1, 1}};
  const auto dist = fit_distributions(sample, p);
  const auto r = surprisal_empirical({0, 1, 0}, dist);
  // P(gender 0)=3/4, P(day 1)=3/4, P(sync 0)=3/4.
  EXPECT_NEAR(r.bits, 3 * -std::log2(0.75), 1e-12);
  EXPECT_FALSE(r.unbounded());
  const auto z = surprisal_empirical({2, 1, 0}, dist);
  EXPECT_TRUE(z.unbounded());
  EXPECT_EQ(z.zero_probability, std::vector<FeatureId>{FeatureId::gender});
}

TEST(Empirical, ProbabilityOneContributesPositiveZero) {
  const auto p = three_feature_profile();
  const auto dist = fit_distributions({{0, 0, 0}}, p);
  const auto r = surprisal_empirical({0, 0, 0}, dist);
  EXPECT_EQ(r.bits, 0.0);
  EXPECT_FALSE(std::signbit(r.bits));
}

TEST(Empirical, DistributionTextRoundTrip) {
  const auto p = three_feature_profile();
  const auto dist = fit_distributions({{0, 0, 0}, {1, 6, 1}}, p);
  std::istringstream in(dist.to_text());
  const auto again = EmpiricalDistribution::parse(in);
  EXPECT_EQ(again.to_text(), dist.to_text());
  std::istringstream bad("distribution\nsamples 3\nfeature gender 1 1\n");
  EXPECT_THROW(EmpiricalDistribution::parse(bad), ParseError);
}

TEST(KAnonymity, CountsDistinctUsersNotRecords) {
  const auto p = three_feature_profile();
  const std::vector<UserTuple> recs = {
      {"u1", {0, 0, 0}}, {"u1", {0, 0, 0}}, {"u2", {0, 0, 0}}, {"u3", {1, 0, 0}}};
  const auto rep = k_anonymity_tuples(recs, p);
  ASSERT_EQ(rep.tuples.size(), 2u);
  EXPECT_EQ(rep.tuples[0].k, 2u);
  EXPECT_EQ(rep.tuples[0].records, 3u);
  EXPECT_EQ(rep.tuples[1].k, 1u);
  EXPECT_EQ(rep.min_k(), 1u);
  ASSERT_EQ(rep.cdf.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.cdf[0].fraction, 0.5);
  EXPECT_DOUBLE_EQ(rep.record_cdf[0].fraction, 0.25);
}

TEST(KAnonymity, SubsetProjectsBeforeGrouping) {
  const auto p = three_feature_profile();
  const std::vector<UserTuple> recs = {{"u1", {0, 0, 0}}, {"u2", {1, 0, 0}}};
  const auto rep = k_anonymity_tuples(recs, p, {FeatureId::day_of_week});
  ASSERT_EQ(rep.tuples.size(), 1u);
  EXPECT_EQ(rep.tuples[0].k, 2u);
  EXPECT_THROW(k_anonymity_tuples(recs, p, {FeatureId::age}), InvariantError);
}

TEST(KAnonymity, AgreesWithBruteForce) {
  Rng rng(11);
  const auto p = three_feature_profile();
  std::vector<UserTuple> recs;
  for (int i = 0; i < 800; ++i) {
    recs.push_back({"u" + std::to_string(uniform_below(rng, 40)),
                    {static_cast<int>(uniform_below(rng, 3)), static_cast<int>(uniform_below(rng, 7)),
                     static_cast<int>(uniform_below(rng, 2))}});
  }
  const auto rep = k_anonymity_tuples(recs, p);
  for (const auto& t : rep.tuples) {
    std::set<std::string> users;
    for (const auto& r : recs) {
      if (r.tuple == t.tuple) users.insert(r.user_id);
    }
    EXPECT_EQ(t.k, users.size());
  }
}

TEST(Coarsen, ComposesAndStaysACoarsening) {
  const auto p = three_feature_profile();
  const auto weekend = coarsen(p, FeatureId::day_of_week, {0, 0, 0, 0, 0, 1, 1});
  EXPECT_EQ(weekend.features()[1].class_count, 2);
  EXPECT_TRUE(is_coarsening(p, weekend));
  EXPECT_FALSE(is_coarsening(weekend, p));
  const auto one = coarsen(weekend, FeatureId::day_of_week, {0, 0});
  EXPECT_EQ(one.features()[1].class_count, 1);
  EXPECT_TRUE(is_coarsening(p, one));
  EXPECT_TRUE(is_coarsening(weekend, one));
  EXPECT_LT(surprisal_uniform(one).bits, surprisal_uniform(weekend).bits);
  EXPECT_THROW(coarsen(p, FeatureId::gender, {0, 1}), InvariantError);
}

TEST(Coarsen, DifferentBasesCheckedByProbing) {
  const auto fine = GranularityProfile::from_text("profile f\nfeature price_value 4 bins 1,2,3\n");
  const auto coarse = GranularityProfile::from_text("profile c\nfeature price_value 2 bins 2\n");
  const auto cross = GranularityProfile::from_text("profile x\nfeature price_value 2 bins 1.5\n");
  EXPECT_TRUE(is_coarsening(fine, coarse));
  EXPECT_FALSE(is_coarsening(fine, cross));
}

TEST(Materialize, FillsCountOnlyFeatures) {
  const auto p = GranularityProfile::from_text("profile m\nfeature location 240\nfeature cookie_syncing 2 identity 0,1\n");
  AdEvent a, b;
  a.location = "ES";
  b.location = "FR";
  const auto m = materialize(p, {a, b, a});
  EXPECT_TRUE(m.fully_mapped());
  EXPECT_EQ(m.features()[0].class_count, 2);
  EXPECT_EQ(aggregate_event(b, m), (AggregatedTuple{1, 0}));
  EXPECT_THROW(aggregate_event(a, p), InvariantError);
}
