// Copyright 2026 The tstem Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Indexing terminal: local NDJSON archives (the durable record) plus a
// best-effort client for an Elasticsearch-compatible POST /_bulk endpoint.
//
// Archive directory:
//
//   documents.ndjson   one canonical Document per line, deduped by id
//   indicators.ndjson  one canonical Indicator per line; a key reappears
//                      only when its merged record changed (last line wins)
//   metrics.ndjson     metric snapshots, appended as given

#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"
#include "tstem/model.hpp"

namespace tstem {

class HttpTransport;

// One {"index":{"_index":...,"_id":...}} action line and one source line per
// doc, each newline-terminated. Throws ValidationError on an empty list.
std::string format_bulk_body(const std::vector<std::pair<std::string, nlohmann::json>>& docs,
                             std::string_view index);

// "<prefix>-YYYY.MM.DD" (UTC) when date_suffix, else the prefix.
std::string index_name(std::string_view prefix, Timestamp t, bool date_suffix = true);

// Sources unioned, earliest non-zero first_seen, per provider the newest
// verification. `a` and `b` must share a key.
Indicator merge_indicator(const Indicator& a, const Indicator& b);

struct SinkConfig {
  std::filesystem::path archive_dir;
  bool fsync = true;

  std::optional<std::string> remote_url;  // Elasticsearch-compatible base url
  std::string docs_index = "tstem-docs";
  std::string iocs_index = "tstem-iocs";
  std::string metrics_index = "tstem-metrics";
  bool date_suffix = true;
  std::size_t batch_size = 500;
  Millis flush_interval{1000};
  std::size_t max_pending = 10000;  // remote retry queue bound, in records
  Millis timeout{10000};

  void validate() const;
};

SinkConfig sink_config_from_json(const nlohmann::json& j);

struct SinkAck {
  std::string id;          // document id or indicator key
  bool duplicate = false;  // nothing new was written
};

struct SinkStats {
  std::uint64_t documents = 0;   // unique documents archived
  std::uint64_t indicators = 0;  // unique indicator keys archived
  std::uint64_t indicator_versions = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t metric_records = 0;
  std::uint64_t bulk_requests = 0;
  std::uint64_t bulk_failures = 0;
  std::uint64_t remote_indexed = 0;
  std::uint64_t remote_rejected = 0;  // 4xx items, not retried
  std::uint64_t remote_dropped = 0;   // pushed out of a full retry queue
  std::uint64_t remote_pending = 0;
};

struct ArchiveReplay {
  std::vector<Document> documents;        // ack order
  std::vector<Indicator> indicators;      // latest version per key, first-ack order
  std::uint64_t indicator_versions = 0;
  std::vector<nlohmann::json> metrics;
  std::uint64_t torn_lines = 0;           // unterminated trailing lines ignored
};

// Reads an archive directory; missing files are empty.
ArchiveReplay replay_archive(const std::filesystem::path& dir);

// Thread-safe. index() returns after the record is durable locally; remote
// indexing runs on a background flusher and never blocks or fails the ack.
class Sink {
 public:
  explicit Sink(SinkConfig config, std::shared_ptr<HttpTransport> transport = nullptr,
                Clock* clock = nullptr);
  ~Sink();
  Sink(const Sink&) = delete;
  Sink& operator=(const Sink&) = delete;

  SinkAck index(const Document& doc);
  SinkAck index(const Indicator& ind);
  void index_metrics(const nlohmann::json& snapshot);

  // One synchronous bulk attempt over everything queued. Returns the number
  // of records the remote accepted.
  std::size_t flush_remote();

  bool has_document(const std::string& id) const;
  std::optional<Indicator> indicator(const std::string& key) const;
  SinkStats stats() const;
  const SinkConfig& config() const { return config_; }

 private:
  struct Pending {
    std::string index;
    std::string id;
    nlohmann::json source;
  };
  class Archive;

  void enqueue_remote(Pending p);  // requires mu_
  void flusher_loop(std::stop_token st);
  std::size_t send_batch(std::vector<Pending> batch);

  SinkConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Clock* clock_;

  mutable std::mutex mu_;
  std::unique_ptr<Archive> docs_;
  std::unique_ptr<Archive> iocs_;
  std::unique_ptr<Archive> metrics_;
  std::unordered_set<std::string> doc_ids_;
  std::unordered_map<std::string, Indicator> iocs_latest_;
  SinkStats stats_;

  mutable std::mutex remote_mu_;
  std::condition_variable_any remote_cv_;
  std::deque<Pending> pending_;
  std::jthread flusher_;
};

}  // namespace tstem
