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


#include "tstem/sink.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>

#include <spdlog/spdlog.h>

#include "tstem/error.hpp"
#include "tstem/http.hpp"

namespace tstem {

namespace {

std::string errno_text() { return std::strerror(errno); }

// Complete lines of a file; a trailing fragment without '\n' is reported
// through `torn` and excluded.
std::vector<std::string> read_lines(const std::filesystem::path& path, std::uint64_t* torn,
                                    std::uint64_t* valid_bytes = nullptr) {
  std::vector<std::string> out;
  std::ifstream f(path, std::ios::binary);
  if (!f) return out;
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      if (torn) ++*torn;
      break;
    }
    if (nl > pos) out.emplace_back(data.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (valid_bytes) *valid_bytes = pos;
  return out;
}

}  // namespace

// Append-only NDJSON file with a durable append.
class Sink::Archive {
 public:
  Archive(std::filesystem::path path, bool fsync) : path_(std::move(path)), fsync_(fsync) {
    std::uint64_t torn = 0, valid = 0;
    read_lines(path_, &torn, &valid);
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StorageError("open " + path_.string() + ": " + errno_text());
    struct stat st {};
    ::fstat(fd_, &st);
    size_ = static_cast<std::uint64_t>(st.st_size);
    if (torn) {
      spdlog::warn("sink: dropping unterminated last line of {}", path_.string());
      if (::ftruncate(fd_, static_cast<off_t>(valid)) != 0) {
        throw StorageError("truncate " + path_.string() + ": " + errno_text());
      }
      size_ = valid;
    }
  }
  ~Archive() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(std::string line) {
    line += '\n';
    const char* p = line.data();
    std::size_t n = line.size();
    auto at = size_;
    while (n > 0) {
      auto put = ::pwrite(fd_, p, n, static_cast<off_t>(at));
      if (put < 0 && errno == EINTR) continue;
      if (put <= 0) {
        auto msg = errno_text();
        if (::ftruncate(fd_, static_cast<off_t>(size_)) != 0) {
          spdlog::error("sink: could not roll back partial line in {}", path_.string());
        }
        throw StorageError("write " + path_.string() + ": " + msg);
      }
      p += put;
      n -= static_cast<std::size_t>(put);
      at += static_cast<std::uint64_t>(put);
    }
    if (fsync_ && ::fdatasync(fd_) != 0) throw StorageError("fsync " + path_.string() + ": " + errno_text());
    size_ = at;
  }

 private:
  std::filesystem::path path_;
  bool fsync_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
};

std::string format_bulk_body(const std::vector<std::pair<std::string, nlohmann::json>>& docs,
                             std::string_view index) {
  if (docs.empty()) throw ValidationError("bulk body needs at least one document");
  std::string out;
  for (const auto& [id, source] : docs) {
    nlohmann::json action = {{"index", {{"_index", std::string(index)}, {"_id", id}}}};
    out += action.dump();
    out += '\n';
    out += canonical_dump(source);
    out += '\n';
  }
  return out;
}

std::string index_name(std::string_view prefix, Timestamp t, bool date_suffix) {
  if (!date_suffix) return std::string(prefix);
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y.%m.%d", &tm);
  return std::string(prefix) + "-" + buf;
}

Indicator merge_indicator(const Indicator& a, const Indicator& b) {
  if (a.key() != b.key()) throw ValidationError("cannot merge " + a.key() + " with " + b.key());
  Indicator out = a;
  for (const auto& s : b.sources()) out = out.with_source(s);
  if (b.first_seen() != Timestamp{} && (a.first_seen() == Timestamp{} || b.first_seen() < a.first_seen())) {
    out = out.with_first_seen(b.first_seen());
  }
  for (const auto& [name, v] : b.verification()) {
    auto it = out.verification().find(name);
    if (it == out.verification().end() || v.checked_at >= it->second.checked_at) out = out.with_verification(v);
  }
  return out;
}

void SinkConfig::validate() const {
  if (archive_dir.empty()) throw ConfigError("sink archive_dir is not set");
  if (batch_size == 0) throw ConfigError("sink batch_size must be positive");
  if (max_pending == 0) throw ConfigError("sink max_pending must be positive");
  if (flush_interval.count() <= 0) throw ConfigError("sink flush_interval must be positive");
  if (remote_url && remote_url->empty()) throw ConfigError("sink remote_url is empty");
}

SinkConfig sink_config_from_json(const nlohmann::json& j) {
  SinkConfig c;
  try {
    c.archive_dir = j.at("archive_dir").get<std::string>();
    if (j.contains("fsync")) c.fsync = j["fsync"].get<bool>();
    if (j.contains("remote_url") && !j["remote_url"].is_null()) {
      auto u = j["remote_url"].get<std::string>();
      if (!u.empty()) c.remote_url = u;
    }
    if (j.contains("docs_index")) c.docs_index = j["docs_index"].get<std::string>();
    if (j.contains("iocs_index")) c.iocs_index = j["iocs_index"].get<std::string>();
    if (j.contains("metrics_index")) c.metrics_index = j["metrics_index"].get<std::string>();
    if (j.contains("date_suffix")) c.date_suffix = j["date_suffix"].get<bool>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("flush_interval_ms")) c.flush_interval = Millis(j["flush_interval_ms"].get<long long>());
    if (j.contains("max_pending")) c.max_pending = j["max_pending"].get<std::size_t>();
    if (j.contains("timeout_ms")) c.timeout = Millis(j["timeout_ms"].get<long long>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sink config: ") + e.what());
  }
  c.validate();
  return c;
}

ArchiveReplay replay_archive(const std::filesystem::path& dir) {
  ArchiveReplay r;
  std::unordered_set<std::string> seen_docs;
  for (const auto& line : read_lines(dir / "documents.ndjson", &r.torn_lines)) {
    auto doc = document_from_json(nlohmann::json::parse(line));
    if (seen_docs.insert(doc.id()).second) r.documents.push_back(std::move(doc));
  }
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& line : read_lines(dir / "indicators.ndjson", &r.torn_lines)) {
    auto ind = indicator_from_json(nlohmann::json::parse(line));
    ++r.indicator_versions;
    auto key = ind.key();
    if (auto it = slot.find(key); it != slot.end()) {
      r.indicators[it->second] = std::move(ind);
    } else {
      slot.emplace(key, r.indicators.size());
      r.indicators.push_back(std::move(ind));
    }
  }
  for (const auto& line : read_lines(dir / "metrics.ndjson", &r.torn_lines)) {
    r.metrics.push_back(nlohmann::json::parse(line));
  }
  return r;
}

Sink::Sink(SinkConfig config, std::shared_ptr<HttpTransport> transport, Clock* clock)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : default_transport()),
      clock_(clock ? clock : &SystemClock::instance()) {
  config_.validate();
  std::error_code ec;
  std::filesystem::create_directories(config_.archive_dir, ec);
  if (ec) throw StorageError("cannot create " + config_.archive_dir.string() + ": " + ec.message());
  ArchiveReplay prior;
  try {
    prior = replay_archive(config_.archive_dir);
  } catch (const std::exception& e) {
    throw StorageError("corrupt sink archive in " + config_.archive_dir.string() + ": " + e.what());
  }
  for (const auto& d : prior.documents) doc_ids_.insert(d.id());
  for (const auto& i : prior.indicators) iocs_latest_.emplace(i.key(), i);
  stats_.documents = doc_ids_.size();
  stats_.indicators = iocs_latest_.size();
  stats_.indicator_versions = prior.indicator_versions;
  stats_.metric_records = prior.metrics.size();
  docs_ = std::make_unique<Archive>(config_.archive_dir / "documents.ndjson", config_.fsync);
  iocs_ = std::make_unique<Archive>(config_.archive_dir / "indicators.ndjson", config_.fsync);
  metrics_ = std::make_unique<Archive>(config_.archive_dir / "metrics.ndjson", config_.fsync);
  if (config_.remote_url) {
    flusher_ = std::jthread([this](std::stop_token st) { flusher_loop(st); });
  }
}

Sink::~Sink() {
  if (flusher_.joinable()) {
    flusher_.request_stop();
    remote_cv_.notify_all();
    flusher_.join();
    try {
      flush_remote();
    } catch (const std::exception& e) {
      spdlog::warn("sink: final remote flush failed: {}", e.what());
    }
  }
}

SinkAck Sink::index(const Document& doc) {
  std::string line;
  try {
    line = canonical_dump(to_json(doc));
  } catch (const std::exception& e) {
    throw ValidationError("cannot serialize document " + doc.id() + ": " + e.what());
  }
  std::lock_guard lock(mu_);
  if (doc_ids_.count(doc.id())) {
    ++stats_.duplicates;
    return {doc.id(), true};
  }
  docs_->append(line);
  doc_ids_.insert(doc.id());
  ++stats_.documents;
  if (config_.remote_url) {
    enqueue_remote({index_name(config_.docs_index, doc.fetched_at(), config_.date_suffix), doc.id(),
                    nlohmann::json::parse(line)});
  }
  return {doc.id(), false};
}

SinkAck Sink::index(const Indicator& ind) {
  auto key = ind.key();
  std::lock_guard lock(mu_);
  auto it = iocs_latest_.find(key);
  Indicator merged = it == iocs_latest_.end() ? ind : merge_indicator(it->second, ind);
  std::string line;
  try {
    line = canonical_dump(to_json(merged));
  } catch (const std::exception& e) {
    throw ValidationError("cannot serialize indicator " + key + ": " + e.what());
  }
  if (it != iocs_latest_.end() && canonical_dump(to_json(it->second)) == line) {
    ++stats_.duplicates;
    return {key, true};
  }
  iocs_->append(line);
  ++stats_.indicator_versions;
  if (it == iocs_latest_.end()) {
    iocs_latest_.emplace(key, merged);
    ++stats_.indicators;
  } else {
    it->second = merged;
  }
  if (config_.remote_url) {
    enqueue_remote({index_name(config_.iocs_index, merged.first_seen(), config_.date_suffix), key,
                    nlohmann::json::parse(line)});
  }
  return {key, false};
}

void Sink::index_metrics(const nlohmann::json& snapshot) {
  auto line = canonical_dump(snapshot);
  std::lock_guard lock(mu_);
  metrics_->append(line);
  ++stats_.metric_records;
  if (config_.remote_url) {
    enqueue_remote({index_name(config_.metrics_index, clock_->now(), config_.date_suffix), sha256_hex(line),
                    snapshot});
  }
}

void Sink::enqueue_remote(Pending p) {
  std::lock_guard lock(remote_mu_);
  pending_.push_back(std::move(p));
  while (pending_.size() > config_.max_pending) {
    pending_.pop_front();
    ++stats_.remote_dropped;
  }
  stats_.remote_pending = pending_.size();
  if (pending_.size() >= config_.batch_size) remote_cv_.notify_all();
}

std::size_t Sink::send_batch(std::vector<Pending> batch) {
  std::string body;
  for (const auto& p : batch) body += format_bulk_body({{p.id, p.source}}, p.index);
  HttpRequest req;
  req.method = "POST";
  req.url = join_url(*config_.remote_url, "/_bulk");
  req.body = std::move(body);
  req.timeout = config_.timeout;
  req.headers.emplace_back("Content-Type", "application/x-ndjson");

  std::vector<Pending> retry;
  std::size_t accepted = 0;
  std::uint64_t rejected = 0;
  bool failed = false;
  try {
    auto resp = transport_->perform(req);
    if (resp.status >= 200 && resp.status < 300) {
      auto j = nlohmann::json::parse(resp.body, nullptr, false);
      if (j.is_object() && j.value("errors", false) && j.contains("items") && j["items"].is_array() &&
          j["items"].size() == batch.size()) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto& item = j["items"][i];
          int status = 200;
          if (item.is_object() && !item.empty()) status = item.begin()->value("status", 200);
          if (status < 300) ++accepted;
          else if (status == 429 || status >= 500) retry.push_back(std::move(batch[i]));
          else ++rejected;
        }
      } else {
        accepted = batch.size();
      }
    } else if (resp.status == 429 || resp.status >= 500) {
      failed = true;
      retry = std::move(batch);
    } else {
      spdlog::warn("sink: bulk request rejected with status {}", resp.status);
      rejected = batch.size();
    }
  } catch (const TransportError& e) {
    spdlog::debug("sink: bulk request failed: {}", e.what());
    failed = true;
    retry = std::move(batch);
  }

  std::lock_guard lock(remote_mu_);
  ++stats_.bulk_requests;
  if (failed) ++stats_.bulk_failures;
  stats_.remote_indexed += accepted;
  stats_.remote_rejected += rejected;
  for (auto it = retry.rbegin(); it != retry.rend(); ++it) pending_.push_front(std::move(*it));
  while (pending_.size() > config_.max_pending) {
    pending_.pop_front();
    ++stats_.remote_dropped;
  }
  stats_.remote_pending = pending_.size();
  if (!retry.empty()) throw TransportError("bulk indexing incomplete; " + std::to_string(retry.size()) +
                                               " records queued for retry");
  return accepted;
}

void Sink::flusher_loop(std::stop_token st) {
  auto next_attempt = std::chrono::steady_clock::now();
  while (!st.stop_requested()) {
    std::vector<Pending> batch;
    {
      std::unique_lock lock(remote_mu_);
      auto deadline = std::chrono::steady_clock::now() + config_.flush_interval;
      remote_cv_.wait_until(lock, st, deadline, [&] {
        return pending_.size() >= config_.batch_size && std::chrono::steady_clock::now() >= next_attempt;
      });
      if (st.stop_requested()) return;
      if (pending_.empty() || std::chrono::steady_clock::now() < next_attempt) continue;
      auto n = std::min(pending_.size(), config_.batch_size);
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(std::move(pending_.front()));
        pending_.pop_front();
      }
      stats_.remote_pending = pending_.size();
    }
    try {
      send_batch(std::move(batch));
    } catch (const TransportError&) {
      next_attempt = std::chrono::steady_clock::now() + config_.flush_interval;
    }
  }
}

std::size_t Sink::flush_remote() {
  if (!config_.remote_url) return 0;
  std::size_t accepted = 0;
  std::size_t rounds;
  {
    std::lock_guard lock(remote_mu_);
    rounds = (pending_.size() + config_.batch_size - 1) / config_.batch_size;
  }
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<Pending> batch;
    {
      std::lock_guard lock(remote_mu_);
      auto n = std::min(pending_.size(), config_.batch_size);
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(std::move(pending_.front()));
        pending_.pop_front();
      }
      stats_.remote_pending = pending_.size();
    }
    if (batch.empty()) break;
    accepted += send_batch(std::move(batch));
  }
  return accepted;
}

bool Sink::has_document(const std::string& id) const {
  std::lock_guard lock(mu_);
  return doc_ids_.count(id) > 0;
}

std::optional<Indicator> Sink::indicator(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = iocs_latest_.find(key);
  if (it == iocs_latest_.end()) return std::nullopt;
  return it->second;
}

SinkStats Sink::stats() const {
  std::scoped_lock lock(mu_, remote_mu_);
  return stats_;
}

}  // namespace tstem
