#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "rtbprice/analytics.hpp"
#include "test_support.hpp"

using namespace rtbprice;

namespace {

// Smallest sample value v with count(x <= v) >= p% of n, by scanning.
Decimal quantile_oracle(const std::vector<Decimal>& sample, int p) {
  Decimal best;
  bool found = false;
  for (const auto& v : sample) {
    std::size_t below = 0;
    for (const auto& x : sample) below += x <= v;
    if (below * 100 >= static_cast<std::size_t>(p) * sample.size() && (!found || v < best)) {
      best = v;
      found = true;
    }
  }
  return best;
}

}  // namespace

TEST(NearestRank, SmallSamples) {
  const std::vector<Decimal> one{Decimal::from_integer(5)};
  EXPECT_EQ(nearest_rank(one, 1), Decimal::from_integer(5));
  std::vector<Decimal> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(Decimal::from_integer(i));
  EXPECT_EQ(nearest_rank(ten, 25), Decimal::from_integer(3));
  EXPECT_EQ(nearest_rank(ten, 50), Decimal::from_integer(5));
  EXPECT_EQ(nearest_rank(ten, 95), Decimal::from_integer(10));
  EXPECT_THROW(nearest_rank({}, 50), InvariantError);
  EXPECT_THROW(nearest_rank(ten, 0), InvariantError);
}

TEST(Analyze, EveryKeyAgreesWithOracle) {
  Rng rng(17);
  std::vector<AdEvent> events;
  for (int i = 0; i < 1500; ++i) {
    AdEvent e = fixture::random_event(rng);
    // Coarse prices force ties.
    e.price_value = Decimal::from_raw(static_cast<std::int64_t>(uniform_below(rng, 40)) * 100'000'000);
    events.push_back(e);
  }
  for (const auto key : {GroupKey::day_of_week, GroupKey::time_of_day, GroupKey::iab, GroupKey::age,
                         GroupKey::country, GroupKey::cookie_sync}) {
    const auto t = analyze_prices(events, key);
    std::size_t total = 0;
    for (const auto& g : t.groups) {
      std::vector<Decimal> sample;
      for (const auto& e : events) {
        if (detail::group_of(e, key).second == g.group) sample.push_back(e.price_value);
      }
      ASSERT_EQ(g.count, sample.size()) << g.group;
      total += g.count;
      EXPECT_EQ(g.min, *std::min_element(sample.begin(), sample.end()));
      EXPECT_EQ(g.max, *std::max_element(sample.begin(), sample.end()));
      EXPECT_EQ(g.q1, quantile_oracle(sample, 25));
      EXPECT_EQ(g.median, quantile_oracle(sample, 50));
      EXPECT_EQ(g.q3, quantile_oracle(sample, 75));
      EXPECT_EQ(g.p95, quantile_oracle(sample, 95));
      EXPECT_EQ(g.cdf.back().at_or_below, g.count);
    }
    EXPECT_EQ(total, events.size()) << to_string(key);
  }
}

TEST(Analyze, GroupOrderFollowsNaturalOrder) {
  std::vector<AdEvent> events(3);
  events[0].time.day_of_week = DayOfWeek::sunday;
  events[1].time.day_of_week = DayOfWeek::monday;
  events[2].time.day_of_week = DayOfWeek::wednesday;
  const auto t = analyze_prices(events, GroupKey::day_of_week);
  ASSERT_EQ(t.groups.size(), 3u);
  EXPECT_EQ(t.groups[0].group, "mon");
  EXPECT_EQ(t.groups[2].group, "sun");
  EXPECT_THROW(analyze_prices({}, GroupKey::iab), ParseError);
}

TEST(Analyze, KeyNames) {
  for (auto name : kGroupKeyNames) EXPECT_EQ(to_string(parse_group_key(name)), name);
  EXPECT_THROW(parse_group_key("weekday"), ParseError);
}

TEST(Output, CsvQuotingAndFormats) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("Arts, \"Fun\""), "\"Arts, \"\"Fun\"\"\"");
  std::vector<AdEvent> events(2);
  events[0].iab_category = "Arts, Entertainment";
  events[0].price_value = *Decimal::parse("0.001");
  events[1].price_value = *Decimal::parse("0.002");
  const auto t = analyze_prices(events, GroupKey::iab);

  std::ostringstream csv;
  write_table(csv, t, OutputFormat::csv, true);
  EXPECT_NE(csv.str().find("iab,\"Arts, Entertainment\",1,0.001"), std::string::npos);
  EXPECT_NE(csv.str().find("group,price_usd,fraction"), std::string::npos);

  std::ostringstream jl;
  write_table(jl, t, OutputFormat::jsonl, true);
  std::istringstream lines(jl.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["key"], "iab");
    EXPECT_TRUE(j.contains("cdf"));
    ++n;
  }
  EXPECT_EQ(n, 2);

  std::ostringstream table;
  write_table(table, t, OutputFormat::table);
  EXPECT_NE(table.str().find("2.000"), std::string::npos);  // 0.002 USD is 2 CPM
  EXPECT_THROW(parse_output_format("xml"), ParseError);
}
