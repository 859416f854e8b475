#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "rtbprice/error.hpp"
#include "rtbprice/event_json.hpp"
#include "rtbprice/pipeline.hpp"
#include "rtbprice/replay.hpp"
#include "rtbprice/transport/client_queue.hpp"
#include "rtbprice/transport/http_server.hpp"
#include "rtbprice/transport/record.hpp"

namespace rtbprice {

// Sends one batch upstream; returns false when delivery failed.
using BatchSender = std::function<bool(const transport::ReportBatch&)>;

// The per-user engine behind the browser extension: prices captured
// requests, keeps the popup totals and feeds the reporting queue.
class LocalEngine {
 public:
  LocalEngine(const ReferenceData& data, GranularityProfile profile, std::optional<pricing::ForestModel> model,
              GeoResolver& geo, Decimal fallback_seed, std::uint64_t seed, transport::DelayBounds bounds,
              BatchSender sender, transport::Clock clock = transport::system_now)
      : pipeline_(data, std::move(profile), std::move(model), geo, fallback_seed),
        queue_(seed, bounds),
        sender_(std::move(sender)),
        clock_(std::move(clock)) {}

  // Body: {"url", "first_party", "timestamp", "utc_offset_minutes", "dnt", "cookies"}.
  nlohmann::json capture(const nlohmann::json& msg) {
    if (!msg.is_object() || !msg.contains("url") || !msg["url"].is_string()) {
      throw ParseError("capture lacks string `url`");
    }
    Capture c;
    c.url = msg["url"].get<std::string>();
    c.first_party = msg.value("first_party", "");
    c.timestamp = msg.contains("timestamp") && msg["timestamp"].is_number_integer()
                      ? msg["timestamp"].get<std::int64_t>()
                      : clock_();
    c.utc_offset_minutes = msg.value("utc_offset_minutes", 0);
    c.dnt = msg.value("dnt", false);
    if (msg.contains("cookies")) c.cookies = detail::parse_cookies(msg["cookies"]);

    std::lock_guard lock(mu_);
    Diagnostics diag;
    const auto event = pipeline_.process(c, &diag);
    nlohmann::json out;
    out["detected"] = event.has_value();
    if (event) {
      out["price_usd"] = event->price_value.to_string();
      out["price_kind"] = to_string(event->price_kind);
      out["reported"] = queue_.enqueue(transport::make_report(*event, pipeline_.profile()), clock_());
    }
    if (!diag.empty()) out["diagnostics"] = diag;
    return out;
  }

  nlohmann::json state() const {
    std::lock_guard lock(mu_);
    const Totals& t = pipeline_.totals();
    nlohmann::json j;
    j["gender"] = to_string(pipeline_.user().gender);
    j["age"] = pipeline_.user().age ? nlohmann::json(*pipeline_.user().age) : nlohmann::json(nullptr);
    j["all_time_usd"] = t.all_time.to_string();
    j["session_usd"] = t.session.to_string();
    j["ads"] = t.ads;
    j["session_ads"] = t.session_ads;
    // Breakdown of ad types: price source, and category of the hosting page.
    auto share = [&](std::size_t n) { return t.ads == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(t.ads); };
    j["breakdown"]["cleartext"] = share(t.cleartext);
    j["breakdown"]["inferred"] = share(t.inferred);
    for (const auto& [cat, n] : t.by_category) j["breakdown"]["category"][cat] = share(n);
    j["opt_in"] = queue_.opt_in();
    j["pending_reports"] = queue_.size();
    j["model_version"] = pipeline_.model() ? nlohmann::json(pipeline_.model()->meta.version) : nlohmann::json(nullptr);
    return j;
  }

  // Body: any of {"gender", "age", "opt_in"}. `age: null` clears the age.
  void settings(const nlohmann::json& s) {
    if (!s.is_object()) throw ParseError("settings must be a JSON object");
    std::lock_guard lock(mu_);
    UserMeta user = pipeline_.user();
    if (const auto it = s.find("gender"); it != s.end()) {
      if (!it->is_string()) throw ParseError("`gender` must be a string");
      user.gender = parse_gender(it->get<std::string>());
    }
    if (const auto it = s.find("age"); it != s.end()) {
      if (it->is_null()) {
        user.age.reset();
      } else if (it->is_number_integer() && it->get<int>() >= 0) {
        user.age = it->get<int>();
      } else {
        throw ParseError("`age` must be a non-negative integer or null");
      }
    }
    if (const auto it = s.find("opt_in"); it != s.end()) {
      if (!it->is_boolean()) throw ParseError("`opt_in` must be a boolean");
      queue_.set_opt_in(it->get<bool>());
    }
    pipeline_.set_user(user);
  }

  // Sends whatever is due. A batch that fails to deliver is dropped rather
  // than retried; a retry would tie the records to a second timing.
  std::size_t tick() {
    std::optional<transport::ReportBatch> batch;
    {
      std::lock_guard lock(mu_);
      batch = queue_.dispatch_due(clock_());
    }
    if (!batch) return 0;
    if (sender_ && !sender_(*batch)) return 0;
    return batch->size();
  }

  void new_session() {
    std::lock_guard lock(mu_);
    pipeline_.reset_session();
  }

  bool install_model(std::optional<pricing::ForestModel> model, Diagnostics* diag = nullptr) {
    std::lock_guard lock(mu_);
    return pipeline_.set_model(std::move(model), diag);
  }

  std::optional<std::int64_t> model_version() const {
    std::lock_guard lock(mu_);
    if (!pipeline_.model()) return std::nullopt;
    return pipeline_.model()->meta.version;
  }

  std::string expected_schema_hash() const {
    std::lock_guard lock(mu_);
    return pricing::schema_for(pipeline_.profile()).hash();
  }

 private:
  mutable std::mutex mu_;
  Pipeline pipeline_;
  transport::ClientQueue queue_;
  BatchSender sender_;
  transport::Clock clock_;
};

// Posts batches to a collection server.
inline BatchSender http_sender(const std::string& base_url) {
  return [base_url](const transport::ReportBatch& batch) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(5);
    const auto res = cli.Post("/v1/report", transport::serialize_batch(batch), "application/json");
    return res && res->status == 204;
  };
}

// Conditional model fetch; installs a newer model when one is served.
inline bool poll_model(LocalEngine& engine, const std::string& base_url, Diagnostics* diag = nullptr) {
  httplib::Client cli(base_url);
  cli.set_connection_timeout(5);
  httplib::Headers headers;
  if (const auto v = engine.model_version()) headers.emplace("If-None-Match", transport::etag_for(*v));
  const auto res = cli.Get("/v1/model", headers);
  if (!res || res->status != 200) return false;
  try {
    return engine.install_model(pricing::deserialize_model(res->body, engine.expected_schema_hash()), diag);
  } catch (const std::exception& e) {
    if (diag) diag->push_back(std::string("model rejected: ") + e.what());
    return false;
  }
}

// Loopback HTTP front for the extension.
class EngineServer {
 public:
  explicit EngineServer(LocalEngine& engine) : engine_(engine) {
    auto json_handler = [](auto fn) {
      return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
          fn(req, res);
        } catch (const ParseError& e) {
          res.status = 400;
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        } catch (const nlohmann::json::exception& e) {
          res.status = 400;
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        } catch (const std::exception&) {
          res.status = 500;
          res.set_content(R"({"error":"internal error"})", "application/json");
        }
      };
    };
    server_.Post("/local/capture", json_handler([this](const httplib::Request& req, httplib::Response& res) {
                   res.set_content(engine_.capture(nlohmann::json::parse(req.body)).dump(), "application/json");
                 }));
    server_.Get("/local/state", json_handler([this](const httplib::Request&, httplib::Response& res) {
                  res.set_content(engine_.state().dump(), "application/json");
                }));
    server_.Post("/local/settings", json_handler([this](const httplib::Request& req, httplib::Response& res) {
                   engine_.settings(nlohmann::json::parse(req.body));
                   res.set_content(engine_.state().dump(), "application/json");
                 }));
  }

  ~EngineServer() { stop(); }

  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  LocalEngine& engine_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace rtbprice
