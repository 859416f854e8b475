#include <gtest/gtest.h>

#include "rtbprice/url.hpp"

using namespace rtbprice;

TEST(Url, SplitsComponents) {
  const Url u = parse_url("HTTPS://user:pw@Ads.Example.COM:8080/a/b%2Fc?x=1&y=%41#frag");
  EXPECT_EQ(u.scheme, "https");
  EXPECT_EQ(u.host, "ads.example.com");
  EXPECT_EQ(u.port, "8080");
  EXPECT_EQ(u.path, "/a/b%2Fc");
  EXPECT_EQ(u.query, "x=1&y=%41");
  EXPECT_EQ(u.fragment, "frag");
  const auto segs = u.path_segments();
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[1], "b/c");
}

TEST(Url, Ipv6Host) {
  const Url u = parse_url("http://[::1]:9000/x");
  EXPECT_EQ(u.host, "[::1]");
  EXPECT_EQ(u.port, "9000");
}

TEST(Url, RejectsMalformed) {
  EXPECT_THROW(parse_url("no-scheme.com/x"), ParseError);
  EXPECT_THROW(parse_url("http:///path"), ParseError);
  EXPECT_THROW(parse_url("http://host:80a/"), ParseError);
  EXPECT_THROW(parse_url("ht tp://host/"), ParseError);
}

TEST(Url, QueryRoundTripIsByteExact) {
  const std::string q = "a=1&&b=%2x&c&d=%20+e&a=2&=z&f=%41%42";
  const auto params = parse_query(q);
  ASSERT_EQ(params.size(), 8u);
  EXPECT_EQ(serialize_query(params), q);
  EXPECT_EQ(params[1].raw, "");
  EXPECT_EQ(params[2].value, "%2x");  // malformed escape kept verbatim
  EXPECT_EQ(params[3].name, "c");
  EXPECT_EQ(params[3].value, "");
  EXPECT_EQ(params[4].value, "  e");
  EXPECT_EQ(params[7].value, "AB");
  EXPECT_EQ(params[6].name, "");
  EXPECT_EQ(params[6].value, "z");
}

TEST(Url, PercentDecodeRunsOnce) {
  EXPECT_EQ(percent_decode("%2541"), "%41");
  EXPECT_EQ(percent_decode("%"), "%");
  EXPECT_EQ(percent_decode("%4"), "%4");
}

TEST(Url, RegistrableDomain) {
  EXPECT_EQ(registrable_domain("www.outfit7.com"), "outfit7.com");
  EXPECT_EQ(registrable_domain("a.b.news.bbc.co.uk"), "bbc.co.uk");
  EXPECT_EQ(registrable_domain("Example.COM."), "example.com");
  EXPECT_EQ(registrable_domain("localhost"), "localhost");
  EXPECT_EQ(registrable_domain("10.0.0.1"), "10.0.0.1");
}

TEST(Url, SuffixMatchRespectsLabels) {
  EXPECT_TRUE(ends_with_label("cpp.imp.mpx.mopub.com", "mopub.com"));
  EXPECT_TRUE(ends_with_label("mopub.com", "mopub.com"));
  EXPECT_FALSE(ends_with_label("notmopub.com", "mopub.com"));
  EXPECT_FALSE(ends_with_label("com", "mopub.com"));
}
