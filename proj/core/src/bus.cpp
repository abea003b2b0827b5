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


#include "tstem/bus.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "tstem/error.hpp"

namespace tstem {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'S', 'T', 'E', 'M', 'L', 'O', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kFileHeader = 12;
constexpr std::size_t kRecordHeader = 16;

void put_u32(char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}
void put_u64(char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}
std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint32_t record_crc(const char* ts_and_payload, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(ts_and_payload), chunk);
    ts_and_payload += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string errno_text() { return std::strerror(errno); }

void pread_all(int fd, char* buf, std::size_t n, std::uint64_t pos, const std::string& what) {
  while (n > 0) {
    auto got = ::pread(fd, buf, n, static_cast<off_t>(pos));
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) throw StorageError("read " + what + ": " + (got == 0 ? "unexpected end of file" : errno_text()));
    buf += got;
    n -= static_cast<std::size_t>(got);
    pos += static_cast<std::uint64_t>(got);
  }
}

void pwrite_all(int fd, const char* buf, std::size_t n, std::uint64_t pos, const std::string& what) {
  while (n > 0) {
    auto put = ::pwrite(fd, buf, n, static_cast<off_t>(pos));
    if (put < 0 && errno == EINTR) continue;
    if (put <= 0) throw StorageError("write " + what + ": " + errno_text());
    buf += put;
    n -= static_cast<std::size_t>(put);
    pos += static_cast<std::uint64_t>(put);
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

std::uint64_t now_ms(const Clock& c) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<Millis>(c.now().time_since_epoch()).count());
}

}  // namespace

void validate_bus_name(std::string_view name, std::string_view what) {
  auto bad = [&] { return ValidationError("invalid " + std::string(what) + " name '" + std::string(name) + "'"); };
  if (name.empty() || name.size() > 128 || name == "." || name == "..") throw bad();
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) throw bad();
  }
}

// ---------------------------------------------------------------- consumer

Consumer::Consumer(MessageBus& bus, std::string group, std::string topic)
    : bus_(bus), group_(std::move(group)), topic_(std::move(topic)) {}

Consumer::~Consumer() { bus_.release(group_); }

std::vector<TopicRecord> Consumer::poll(std::size_t max_batch, Millis wait) {
  return bus_.do_poll(group_, max_batch, wait);
}

void Consumer::commit(std::uint64_t offset) { bus_.do_commit(group_, offset); }

std::vector<TopicRecord> MessageBus::poll(std::string_view group, std::size_t max_batch) {
  return consumer(group)->poll(max_batch);
}

void MessageBus::commit(std::string_view group, std::uint64_t offset) { consumer(group)->commit(offset); }

// ---------------------------------------------------------------- log bus

LogBus::LogBus(BusOptions options, Clock* clock)
    : opts_(std::move(options)), clock_(clock ? clock : &SystemClock::instance()) {
  if (opts_.dir.empty()) throw ConfigError("bus directory is not set");
  if (opts_.max_record_bytes == 0 || opts_.max_record_bytes > 0xFFFFFFFFu) {
    throw ConfigError("bus max_record_bytes must be in [1, 2^32)");
  }
  std::error_code ec;
  std::filesystem::create_directories(opts_.dir / "topics", ec);
  std::filesystem::create_directories(opts_.dir / "groups", ec);
  if (ec) throw StorageError("cannot create bus directory " + opts_.dir.string() + ": " + ec.message());

  std::lock_guard lock(mu_);
  for (const auto& e : std::filesystem::directory_iterator(opts_.dir / "topics")) {
    if (e.path().extension() != ".log") continue;
    auto name = e.path().stem().string();
    try {
      validate_bus_name(name, "topic");
    } catch (const ValidationError&) {
      continue;
    }
    open_topic(name);
  }
  load_groups();
}

LogBus::~LogBus() {
  close();
  std::lock_guard lock(mu_);
  for (auto& [name, t] : topics_) {
    if (t.fd >= 0) ::close(t.fd);
    t.fd = -1;
  }
}

void LogBus::check_open() const {
  if (closed_) throw StateError("bus is closed");
}

LogBus::Topic& LogBus::open_topic(const std::string& name) {
  auto it = topics_.find(name);
  if (it != topics_.end()) return it->second;
  auto path = opts_.dir / "topics" / (name + ".log");
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError("open " + path.string() + ": " + errno_text());
  Topic t;
  t.fd = fd;
  try {
    recover_topic(name, t);
  } catch (...) {
    ::close(fd);
    throw;
  }
  return topics_.emplace(name, std::move(t)).first->second;
}

void LogBus::recover_topic(const std::string& name, Topic& t) {
  auto what = "topic " + name;
  struct stat st {};
  if (::fstat(t.fd, &st) != 0) throw StorageError("stat " + what + ": " + errno_text());
  auto size = static_cast<std::uint64_t>(st.st_size);

  if (size < kFileHeader) {
    if (size > 0) truncated_[name] += size;
    if (::ftruncate(t.fd, 0) != 0) throw StorageError("truncate " + what + ": " + errno_text());
    char hdr[kFileHeader];
    std::memcpy(hdr, kMagic.data(), kMagic.size());
    put_u32(hdr + 8, kVersion);
    pwrite_all(t.fd, hdr, sizeof hdr, 0, what);
    if (::fsync(t.fd) != 0) throw StorageError("fsync " + what + ": " + errno_text());
    fsync_dir(opts_.dir / "topics");
    t.size = kFileHeader;
    return;
  }

  char hdr[kFileHeader];
  pread_all(t.fd, hdr, sizeof hdr, 0, what);
  if (std::memcmp(hdr, kMagic.data(), kMagic.size()) != 0) throw StorageError(what + ": bad magic");
  if (get_u32(hdr + 8) != kVersion) {
    throw StorageError(what + ": unsupported log version " + std::to_string(get_u32(hdr + 8)));
  }

  std::uint64_t pos = kFileHeader;
  std::string buf;
  while (pos + kRecordHeader <= size) {
    char rh[kRecordHeader];
    pread_all(t.fd, rh, sizeof rh, pos, what);
    std::uint32_t len = get_u32(rh);
    std::uint32_t crc = get_u32(rh + 4);
    if (pos + kRecordHeader + len > size) break;
    buf.resize(8 + len);
    std::memcpy(buf.data(), rh + 8, 8);
    if (len) pread_all(t.fd, buf.data() + 8, len, pos + kRecordHeader, what);
    if (record_crc(buf.data(), buf.size()) != crc) break;
    t.index.push_back(pos);
    pos += kRecordHeader + len;
  }
  if (pos < size) {
    spdlog::warn("bus: {} has {} bytes of torn or corrupt tail; truncating", what, size - pos);
    truncated_[name] += size - pos;
    if (::ftruncate(t.fd, static_cast<off_t>(pos)) != 0) throw StorageError("truncate " + what + ": " + errno_text());
    if (::fsync(t.fd) != 0) throw StorageError("fsync " + what + ": " + errno_text());
  }
  t.size = pos;
}

void LogBus::load_groups() {
  for (const auto& e : std::filesystem::directory_iterator(opts_.dir / "groups")) {
    if (e.path().extension() != ".json") continue;
    auto name = e.path().stem().string();
    std::ifstream f(e.path());
    std::ostringstream ss;
    ss << f.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
      Group g{j.at("topic").get<std::string>(), j.at("position").get<std::uint64_t>()};
      validate_bus_name(g.topic, "topic");
      auto& t = open_topic(g.topic);
      if (g.position > t.index.size()) {
        spdlog::warn("bus: group {} position {} is past the end of {} ({}); clamping", name, g.position,
                     g.topic, t.index.size());
        g.position = t.index.size();
      }
      groups_[name] = g;
    } catch (const nlohmann::json::exception& ex) {
      throw StorageError("corrupt group file " + e.path().string() + ": " + ex.what());
    }
  }
}

void LogBus::persist_group(const std::string& name, const Group& g) {
  auto dir = opts_.dir / "groups";
  auto path = dir / (name + ".json");
  auto tmp = dir / (name + ".json.tmp");
  std::string body = nlohmann::json{{"topic", g.topic}, {"position", g.position}}.dump() + "\n";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError("open " + tmp.string() + ": " + errno_text());
  try {
    pwrite_all(fd, body.data(), body.size(), 0, tmp.string());
    if (opts_.durability == Durability::sync && ::fsync(fd) != 0) {
      throw StorageError("fsync " + tmp.string() + ": " + errno_text());
    }
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) throw StorageError("rename " + path.string() + ": " + errno_text());
  if (opts_.durability == Durability::sync) fsync_dir(dir);
}

std::uint64_t LogBus::backlog(const std::string& topic) const {
  auto it = topics_.find(topic);
  if (it == topics_.end()) return 0;
  std::optional<std::uint64_t> slowest;
  for (const auto& [name, g] : groups_) {
    if (g.topic == topic && (!slowest || g.position < *slowest)) slowest = g.position;
  }
  if (!slowest) return 0;
  return it->second.index.size() - *slowest;
}

std::uint64_t LogBus::publish(std::string_view topic_name, std::string_view payload) {
  validate_bus_name(topic_name, "topic");
  if (payload.size() > opts_.max_record_bytes) {
    throw ValidationError("payload of " + std::to_string(payload.size()) + " bytes exceeds max record size " +
                          std::to_string(opts_.max_record_bytes));
  }
  std::string name(topic_name);
  std::unique_lock lock(mu_);
  check_open();
  if (opts_.max_backlog > 0) {
    committed_.wait(lock, [&] { return closed_ || backlog(name) < opts_.max_backlog; });
    check_open();
  }
  auto& t = open_topic(name);

  std::string rec(kRecordHeader + payload.size(), '\0');
  put_u32(rec.data(), static_cast<std::uint32_t>(payload.size()));
  put_u64(rec.data() + 8, now_ms(*clock_));
  if (!payload.empty()) std::memcpy(rec.data() + kRecordHeader, payload.data(), payload.size());
  put_u32(rec.data() + 4, record_crc(rec.data() + 8, rec.size() - 8));

  auto what = "topic " + name;
  try {
    pwrite_all(t.fd, rec.data(), rec.size(), t.size, what);
    if (opts_.durability == Durability::sync && ::fdatasync(t.fd) != 0) {
      throw StorageError("fsync " + what + ": " + errno_text());
    }
  } catch (...) {
    if (::ftruncate(t.fd, static_cast<off_t>(t.size)) != 0) {
      spdlog::error("bus: could not roll back partial write on {}", what);
    }
    throw;
  }
  auto offset = static_cast<std::uint64_t>(t.index.size());
  t.index.push_back(t.size);
  t.size += rec.size();
  published_.notify_all();
  return offset;
}

void LogBus::subscribe(std::string_view group, std::string_view topic) {
  validate_bus_name(group, "group");
  validate_bus_name(topic, "topic");
  std::lock_guard lock(mu_);
  check_open();
  auto it = groups_.find(std::string(group));
  if (it != groups_.end()) {
    if (it->second.topic != topic) {
      throw StateError("group '" + std::string(group) + "' is subscribed to '" + it->second.topic + "'");
    }
    return;
  }
  open_topic(std::string(topic));
  Group g{std::string(topic), 0};
  persist_group(std::string(group), g);
  groups_.emplace(std::string(group), g);
}

std::unique_ptr<Consumer> LogBus::consumer(std::string_view group, std::optional<std::string_view> topic) {
  if (topic) subscribe(group, *topic);
  std::lock_guard lock(mu_);
  check_open();
  std::string name(group);
  auto it = groups_.find(name);
  if (it == groups_.end()) throw StateError("unknown consumer group '" + name + "'");
  if (!leased_.insert(name).second) throw StateError("group '" + name + "' already has an active poller");
  return std::make_unique<Consumer>(*this, name, it->second.topic);
}

void LogBus::release(const std::string& group) {
  std::lock_guard lock(mu_);
  leased_.erase(group);
}

TopicRecord LogBus::read_record(const std::string& topic, const Topic& t, std::uint64_t offset) const {
  auto pos = t.index[offset];
  auto what = "topic " + topic;
  char rh[kRecordHeader];
  pread_all(t.fd, rh, sizeof rh, pos, what);
  TopicRecord r;
  r.topic = topic;
  r.offset = offset;
  r.produced_at = Timestamp{} + Millis(static_cast<Millis::rep>(get_u64(rh + 8)));
  r.payload.resize(get_u32(rh));
  if (!r.payload.empty()) pread_all(t.fd, r.payload.data(), r.payload.size(), pos + kRecordHeader, what);
  return r;
}

std::vector<TopicRecord> LogBus::do_poll(const std::string& group, std::size_t max_batch, Millis wait) {
  std::unique_lock lock(mu_);
  check_open();
  auto git = groups_.find(group);
  if (git == groups_.end()) throw StateError("unknown consumer group '" + group + "'");
  const auto& topic = git->second.topic;
  auto& t = open_topic(topic);
  auto deadline = std::chrono::steady_clock::now() + wait;
  while (git->second.position >= t.index.size() && !closed_ && wait.count() > 0) {
    if (published_.wait_until(lock, deadline) == std::cv_status::timeout) break;
  }
  check_open();
  std::vector<TopicRecord> out;
  for (auto o = git->second.position; o < t.index.size() && out.size() < max_batch; ++o) {
    out.push_back(read_record(topic, t, o));
  }
  return out;
}

void LogBus::do_commit(const std::string& group, std::uint64_t offset) {
  std::lock_guard lock(mu_);
  check_open();
  auto git = groups_.find(group);
  if (git == groups_.end()) throw StateError("unknown consumer group '" + group + "'");
  auto& g = git->second;
  const auto& t = open_topic(g.topic);
  if (offset >= t.index.size()) {
    throw ValidationError("commit offset " + std::to_string(offset) + " is past the head of '" + g.topic + "'");
  }
  if (offset + 1 <= g.position) return;
  Group next{g.topic, offset + 1};
  persist_group(group, next);
  g = next;
  committed_.notify_all();
}

std::optional<std::uint64_t> LogBus::head(std::string_view topic) const {
  std::lock_guard lock(mu_);
  auto it = topics_.find(std::string(topic));
  if (it == topics_.end() || it->second.index.empty()) return std::nullopt;
  return it->second.index.size() - 1;
}

std::uint64_t LogBus::position(std::string_view group) const {
  std::lock_guard lock(mu_);
  auto it = groups_.find(std::string(group));
  if (it == groups_.end()) throw StateError("unknown consumer group '" + std::string(group) + "'");
  return it->second.position;
}

std::vector<std::string> LogBus::topics() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, t] : topics_) out.push_back(name);
  return out;
}

void LogBus::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  published_.notify_all();
  committed_.notify_all();
}

void LogBus::flush() {
  std::lock_guard lock(mu_);
  for (auto& [name, t] : topics_) {
    if (::fsync(t.fd) != 0) throw StorageError("fsync topic " + name + ": " + errno_text());
  }
}

}  // namespace tstem
