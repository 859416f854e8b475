#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "rtbprice/error.hpp"
#include "rtbprice/random.hpp"
#include "rtbprice/transport/record.hpp"

namespace rtbprice::transport {

struct ShufflePolicy {
  std::size_t records = 500;
  std::int64_t seconds = 24 * 3600;
};

// Multiset of ingested records. Every incoming record lands at a uniformly
// random position, so iteration order carries no arrival order. On disk:
// an append-only log plus a shuffled snapshot written at each compaction.
//
// Files in `dir`: `snapshot-<gen>.jsonl` (complete, shuffled) and
// `log-<gen>.jsonl` (records appended since that snapshot). Compaction
// writes generation gen+1 before removing gen, so a crash at any point
// leaves one consistent generation.
class ServerStore {
 public:
  explicit ServerStore(std::optional<std::filesystem::path> dir = std::nullopt, ShufflePolicy policy = {},
                       std::uint64_t seed = std::random_device{}())
      : dir_(std::move(dir)), policy_(policy), rng_(seed) {
    if (dir_) open();
  }

  ServerStore(const ServerStore&) = delete;
  ServerStore& operator=(const ServerStore&) = delete;

  ~ServerStore() {
    try {
      std::lock_guard lock(mu_);
      if (log_.is_open()) log_.flush();
    } catch (...) {
    }
  }

  // `now` drives the time-based reshuffle. Never records where or when a
  // batch came from.
  void ingest(const ReportBatch& batch, std::int64_t now,
              const std::map<std::string, GranularityProfile>* accepted = nullptr) {
    if (accepted) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        try {
          check_against(batch[i], *accepted);
        } catch (const SchemaError& e) {
          throw SchemaError("record " + std::to_string(i) + ": " + e.what());
        }
      }
    }
    if (batch.empty()) return;

    std::lock_guard lock(mu_);
    if (!last_shuffle_at_) last_shuffle_at_ = now;
    for (const auto& r : batch) {
      records_.push_back(r);
      const std::size_t j = uniform_below(rng_, records_.size());
      std::swap(records_.back(), records_[j]);
    }
    if (log_.is_open()) {
      // Shuffle the batch's log lines too; positions in the file are the
      // only ordering information kept until compaction.
      std::vector<std::string> lines;
      lines.reserve(batch.size());
      for (const auto& r : batch) lines.push_back(r.canonical());
      fisher_yates(lines, rng_);
      for (const auto& l : lines) log_ << l << '\n';
      log_.flush();
      if (!log_) throw Error("write to store log failed");
    }
    since_shuffle_ += batch.size();
    if (since_shuffle_ >= policy_.records || now - *last_shuffle_at_ >= policy_.seconds) {
      compact_locked(now);
    }
  }

  std::vector<ReportRecord> snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

  // Full reshuffle; on disk, rewrites the snapshot and starts a fresh log.
  void compact(std::int64_t now) {
    std::lock_guard lock(mu_);
    compact_locked(now);
  }

  std::uint64_t generation() const {
    std::lock_guard lock(mu_);
    return generation_;
  }

  std::uint64_t shuffles() const {
    std::lock_guard lock(mu_);
    return shuffles_;
  }

  // Lines skipped while loading (torn tail writes).
  const std::vector<std::string>& load_diagnostics() const { return load_diagnostics_; }

 private:
  std::filesystem::path snapshot_path(std::uint64_t gen) const {
    return *dir_ / ("snapshot-" + std::to_string(gen) + ".jsonl");
  }
  std::filesystem::path log_path(std::uint64_t gen) const {
    return *dir_ / ("log-" + std::to_string(gen) + ".jsonl");
  }

  void load_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) return;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        records_.push_back(parse_record(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        load_diagnostics_.push_back(p.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void open() {
    namespace fs = std::filesystem;
    fs::create_directories(*dir_);
    static const std::regex kSnap(R"(snapshot-(\d+)\.jsonl)");
    static const std::regex kAny(R"((snapshot|log)-(\d+)\.jsonl(\.tmp)?)");
    std::uint64_t gen = 0;
    for (const auto& entry : fs::directory_iterator(*dir_)) {
      std::smatch m;
      const std::string name = entry.path().filename().string();
      if (std::regex_match(name, m, kSnap)) gen = std::max<std::uint64_t>(gen, std::stoull(m[1]));
    }
    generation_ = gen;
    if (gen > 0) load_file(snapshot_path(gen));
    load_file(log_path(gen));
    for (const auto& entry : fs::directory_iterator(*dir_)) {
      std::smatch m;
      const std::string name = entry.path().filename().string();
      if (std::regex_match(name, m, kAny) && (std::stoull(m[2]) != gen || m[3].matched)) {
        fs::remove(entry.path());
      }
    }
    fisher_yates(records_, rng_);
    log_.open(log_path(gen), std::ios::app);
    if (!log_) throw Error("cannot open store log " + log_path(gen).string());
  }

  void compact_locked(std::int64_t now) {
    fisher_yates(records_, rng_);
    ++shuffles_;
    since_shuffle_ = 0;
    last_shuffle_at_ = now;
    if (!dir_) return;

    namespace fs = std::filesystem;
    const std::uint64_t next = generation_ + 1;
    const fs::path tmp = snapshot_path(next).string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      for (const auto& r : records_) out << r.canonical() << '\n';
      out.flush();
      if (!out) throw Error("cannot write store snapshot " + tmp.string());
    }
    fs::rename(tmp, snapshot_path(next));
    log_.close();
    const std::uint64_t old = generation_;
    generation_ = next;
    log_.open(log_path(next), std::ios::app);
    if (!log_) throw Error("cannot open store log " + log_path(next).string());
    fs::remove(log_path(old));
    if (old > 0) fs::remove(snapshot_path(old));
  }

  std::optional<std::filesystem::path> dir_;
  ShufflePolicy policy_;
  mutable std::mutex mu_;
  Rng rng_;
  std::vector<ReportRecord> records_;
  std::ofstream log_;
  std::uint64_t generation_ = 0;
  std::uint64_t shuffles_ = 0;
  std::size_t since_shuffle_ = 0;
  std::optional<std::int64_t> last_shuffle_at_;
  std::vector<std::string> load_diagnostics_;
};

}  // namespace rtbprice::transport
