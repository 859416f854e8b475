#pragma once

#include <atomic>
#include <charconv>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>

#include "rtbprice/error.hpp"
#include "rtbprice/transport/model_registry.hpp"
#include "rtbprice/transport/record.hpp"
#include "rtbprice/transport/server_store.hpp"

namespace rtbprice::transport {

using Clock = std::function<std::int64_t()>;

inline std::int64_t system_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Accepts `"7"`, `W/"7"` or `7`.
inline std::optional<std::int64_t> parse_etag_version(std::string_view tag) {
  if (tag.starts_with("W/")) tag.remove_prefix(2);
  if (tag.size() >= 2 && tag.front() == '"' && tag.back() == '"') tag = tag.substr(1, tag.size() - 2);
  std::int64_t v = 0;
  const auto r = std::from_chars(tag.data(), tag.data() + tag.size(), v);
  if (tag.empty() || r.ec != std::errc{} || r.ptr != tag.data() + tag.size()) return std::nullopt;
  return v;
}

inline std::string etag_for(std::int64_t version) { return "\"" + std::to_string(version) + "\""; }

struct TlsFiles {
  std::string cert;
  std::string key;
};

// The collection endpoint. Handlers never look at the peer address.
class CollectionServer {
 public:
  CollectionServer(ServerStore& store, ModelRegistry& models,
                   std::optional<std::map<std::string, GranularityProfile>> accepted = std::nullopt,
                   Clock clock = system_now, std::optional<TlsFiles> tls = std::nullopt)
      : store_(store), models_(models), accepted_(std::move(accepted)), clock_(std::move(clock)) {
    if (tls) {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
      server_ = std::make_unique<httplib::SSLServer>(tls->cert.c_str(), tls->key.c_str());
#else
      throw Error("built without TLS support");
#endif
    } else {
      server_ = std::make_unique<httplib::Server>();
    }
    if (!server_->is_valid()) throw Error("cannot initialise server (check TLS certificate and key)");
    server_->set_payload_max_length(16 * 1024 * 1024);
    routes();
  }

  CollectionServer(const CollectionServer&) = delete;
  CollectionServer& operator=(const CollectionServer&) = delete;

  ~CollectionServer() {
    try {
      stop();
    } catch (...) {
    }
  }

  // Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
  }

  // Blocks the calling thread until stop() is called elsewhere.
  void run(const std::string& host, int port) {
    start(host, port);
    if (thread_.joinable()) thread_.join();
  }

  // Graceful shutdown: stop accepting, then flush the store to a snapshot.
  void stop() {
    if (stopped_) return;
    stopped_ = true;
    server_->stop();
    if (thread_.joinable()) thread_.join();
    store_.compact(clock_());
  }

  std::size_t rejected() const { return rejected_; }

 private:
  void routes() {
    server_->Post("/v1/report", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const ReportBatch batch = parse_batch(req.body);
        store_.ingest(batch, clock_(), accepted_ ? &*accepted_ : nullptr);
        res.status = 204;
      } catch (const SchemaError& e) {
        ++rejected_;
        res.status = 400;
        res.set_content(std::string(e.what()) + "\n", "text/plain");
      } catch (...) {
        res.status = 500;
        res.set_content("internal error\n", "text/plain");
      }
    });

    server_->Get("/v1/model", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::int64_t> have;
      if (req.has_header("If-None-Match")) have = parse_etag_version(req.get_header_value("If-None-Match"));
      if (!have && req.has_param("version")) have = parse_etag_version(req.get_param_value("version"));
      const auto model = models_.fetch(have);
      if (!model) {
        res.status = 304;
        res.set_header("ETag", etag_for(*have));
        return;
      }
      res.set_header("ETag", etag_for(model->version));
      res.set_content(model->document, "application/xml");
    });

    server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json j;
      j["status"] = "ok";
      j["records"] = store_.size();
      j["model_version"] = models_.current()->version;
      res.set_content(j.dump(), "application/json");
    });
  }

  ServerStore& store_;
  ModelRegistry& models_;
  std::optional<std::map<std::string, GranularityProfile>> accepted_;
  Clock clock_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  bool stopped_ = false;
  std::atomic<std::size_t> rejected_{0};
};

}  // namespace rtbprice::transport
