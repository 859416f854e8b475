#include <gtest/gtest.h>

#include <filesystem>

#include <unistd.h>

#include "rtbprice/pricing/infer.hpp"
#include "rtbprice/transport/http_server.hpp"
#include "test_support.hpp"

using namespace rtbprice;
using namespace rtbprice::transport;
namespace fs = std::filesystem;

namespace {

struct Fixture : ::testing::Test {
  GranularityProfile profile = fixture::default_profile();
  pricing::FeatureSchema schema = pricing::schema_for(profile);
  ServerStore store{std::nullopt, {}, 1};
  ModelRegistry models{bundled_default_model(schema)};
  std::int64_t now = 1000;
  std::unique_ptr<CollectionServer> server;
  int port = 0;

  void SetUp() override {
    server = std::make_unique<CollectionServer>(store, models, std::map<std::string, GranularityProfile>{{"default", profile}},
                                                [this] { return now; });
    port = server->start("127.0.0.1", 0);
  }

  httplib::Client client() { return httplib::Client("127.0.0.1", port); }

  ReportBatch batch(std::uint64_t seed, int n) {
    Rng rng(seed);
    ReportBatch b;
    for (int i = 0; i < n; ++i) b.push_back(make_report(fixture::random_event(rng), profile));
    return b;
  }
};

}  // namespace

TEST(Etag, Parsing) {
  EXPECT_EQ(parse_etag_version("\"7\""), 7);
  EXPECT_EQ(parse_etag_version("W/\"7\""), 7);
  EXPECT_EQ(parse_etag_version("7"), 7);
  EXPECT_FALSE(parse_etag_version("\"x\""));
  EXPECT_FALSE(parse_etag_version(""));
  EXPECT_EQ(etag_for(12), "\"12\"");
}

TEST_F(Fixture, ReportIngestsValidBatches) {
  auto cli = client();
  const auto res = cli.Post("/v1/report", serialize_batch(batch(1, 25)), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(store.size(), 25u);
}

TEST_F(Fixture, MalformedBatchIs400AndStoreUnchanged) {
  auto cli = client();
  auto b = batch(2, 5);
  auto body = nlohmann::json::parse(serialize_batch(b));
  body[3]["client_id"] = "abc";
  auto res = cli.Post("/v1/report", body.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = cli.Post("/v1/report", "{{{", "application/json");
  EXPECT_EQ(res->status, 400);
  b[0].fields["gender"] = 99;
  res = cli.Post("/v1/report", serialize_batch(b), "application/json");
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(store.size(), 0u);
  EXPECT_EQ(server->rejected(), 3u);
}

TEST_F(Fixture, ModelConditionalFetch) {
  auto cli = client();
  auto res = cli.Get("/v1/model");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("ETag"), "\"1\"");
  EXPECT_EQ(pricing::deserialize_model(res->body, schema.hash()).meta.version, 1);

  res = cli.Get("/v1/model", {{"If-None-Match", "\"1\""}});
  EXPECT_EQ(res->status, 304);
  EXPECT_TRUE(res->body.empty());
  res = cli.Get("/v1/model?version=1");
  EXPECT_EQ(res->status, 304);

  models.publish(bundled_default_model(schema));
  res = cli.Get("/v1/model", {{"If-None-Match", "\"1\""}});
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("ETag"), "\"2\"");
}

TEST_F(Fixture, Health) {
  auto cli = client();
  cli.Post("/v1/report", serialize_batch(batch(3, 4)), "application/json");
  const auto res = cli.Get("/v1/health");
  ASSERT_TRUE(res);
  const auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["records"], 4);
  EXPECT_EQ(j["model_version"], 1);
}

TEST(Lifecycle, RestartKeepsRecords) {
  const auto dir = fs::temp_directory_path() / ("rtbprice-http-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const auto profile = fixture::default_profile();
  const auto schema = pricing::schema_for(profile);
  ReportBatch sent;
  Rng rng(5);
  for (int i = 0; i < 60; ++i) sent.push_back(make_report(fixture::random_event(rng), profile));
  {
    ServerStore store(dir, {}, 1);
    ModelRegistry models(bundled_default_model(schema));
    CollectionServer server(store, models);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", port);
    for (int b = 0; b < 3; ++b) {
      const ReportBatch part(sent.begin() + b * 20, sent.begin() + (b + 1) * 20);
      ASSERT_EQ(cli.Post("/v1/report", serialize_batch(part), "application/json")->status, 204);
    }
    server.stop();
  }
  ServerStore reopened(dir, {}, 2);
  auto got = reopened.snapshot();
  std::sort(got.begin(), got.end());
  std::sort(sent.begin(), sent.end());
  EXPECT_EQ(got, sent);
  fs::remove_all(dir);
}
