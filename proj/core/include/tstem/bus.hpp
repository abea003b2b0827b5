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


// Durable topic log with consumer groups and at-least-once delivery.
//
// On-disk layout under the bus directory:
//
//   topics/<topic>.log   append-only record log
//   groups/<group>.json  {"topic": ..., "position": n}
//
// Log file (integers little-endian):
//
//   header   8 bytes magic "TSTEMLOG", u32 version (1)
//   record   u32 len | u32 crc | u64 produced_at_ms | len bytes payload
//
// crc is CRC-32 (zlib) over produced_at_ms and the payload. A record's
// offset is its index in the file. On open the log is scanned; a trailing
// record that is short or fails its crc is cut off.
//
// A group's position is the offset of the next record it will receive;
// commit(o) moves it to o + 1.

#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tstem/clock.hpp"

namespace tstem {

namespace topics {
inline constexpr std::string_view kWebRaw = "web.raw";
inline constexpr std::string_view kTweetRaw = "tweet.raw";
inline constexpr std::string_view kDocRelevant = "doc.relevant";
inline constexpr std::string_view kIocExtracted = "ioc.extracted";
inline constexpr std::string_view kDlqClassify = "dlq.classify";
inline constexpr std::string_view kDlqExtract = "dlq.extract";
}  // namespace topics

struct TopicRecord {
  std::string topic;
  std::uint64_t offset = 0;
  std::string payload;
  Timestamp produced_at{};
};

// Names: 1-128 characters from [A-Za-z0-9._-], not "." or "..".
void validate_bus_name(std::string_view name, std::string_view what);

class Consumer;

// Broker boundary. LogBus is the in-process implementation.
class MessageBus {
 public:
  virtual ~MessageBus() = default;

  // Returns the record's offset. Blocks while the topic's backlog is at its
  // bound. Throws ValidationError for an oversized payload or bad topic
  // name, StateError once closed.
  virtual std::uint64_t publish(std::string_view topic, std::string_view payload) = 0;

  // Registers `group` on `topic` at position 0. Re-subscribing to the same
  // topic is a no-op; a different topic throws StateError.
  virtual void subscribe(std::string_view group, std::string_view topic) = 0;

  // Takes the group's single poller slot; throws StateError if another
  // consumer holds it. Subscribes first when `topic` is given.
  virtual std::unique_ptr<Consumer> consumer(std::string_view group,
                                             std::optional<std::string_view> topic = std::nullopt) = 0;

  // Last offset of the topic, nullopt while empty.
  virtual std::optional<std::uint64_t> head(std::string_view topic) const = 0;
  virtual std::uint64_t position(std::string_view group) const = 0;
  virtual std::vector<std::string> topics() const = 0;

  // Wakes blocked publishers and pollers; later calls throw StateError.
  virtual void close() = 0;

  // Convenience forms that hold the poller slot for the duration of the call.
  std::vector<TopicRecord> poll(std::string_view group, std::size_t max_batch);
  void commit(std::string_view group, std::uint64_t offset);

 protected:
  friend class Consumer;
  virtual std::vector<TopicRecord> do_poll(const std::string& group, std::size_t max_batch, Millis wait) = 0;
  virtual void do_commit(const std::string& group, std::uint64_t offset) = 0;
  virtual void release(const std::string& group) = 0;
};

// Exclusive poller for one group. Not thread-safe itself.
class Consumer {
 public:
  Consumer(MessageBus& bus, std::string group, std::string topic);
  ~Consumer();
  Consumer(const Consumer&) = delete;
  Consumer& operator=(const Consumer&) = delete;

  const std::string& group() const { return group_; }
  const std::string& topic() const { return topic_; }

  // Records from the group's position onward, at most max_batch, waiting up
  // to `wait` when none are available. Does not move the position.
  std::vector<TopicRecord> poll(std::size_t max_batch, Millis wait = Millis(0));

  // Acknowledges every record up to and including `offset`. Throws
  // ValidationError when offset is past the head. Committing an offset
  // below the current position leaves it unchanged.
  void commit(std::uint64_t offset);

 private:
  MessageBus& bus_;
  std::string group_;
  std::string topic_;
};

enum class Durability { sync, buffered };

struct BusOptions {
  std::filesystem::path dir;
  Durability durability = Durability::sync;
  std::size_t max_record_bytes = 8u << 20;
  // Unacknowledged records per topic (head + 1 minus the slowest group's
  // position) at which publish blocks. 0 disables the bound. Topics with
  // no groups are never bounded.
  std::uint64_t max_backlog = 100000;
};

class LogBus final : public MessageBus {
 public:
  // Creates the directory if needed and recovers every existing topic.
  explicit LogBus(BusOptions options, Clock* clock = nullptr);
  ~LogBus() override;

  std::uint64_t publish(std::string_view topic, std::string_view payload) override;
  void subscribe(std::string_view group, std::string_view topic) override;
  std::unique_ptr<Consumer> consumer(std::string_view group,
                                     std::optional<std::string_view> topic = std::nullopt) override;
  std::optional<std::uint64_t> head(std::string_view topic) const override;
  std::uint64_t position(std::string_view group) const override;
  std::vector<std::string> topics() const override;
  void close() override;

  // Bytes cut from torn tails during recovery, per topic.
  const std::map<std::string, std::uint64_t>& recovered_truncations() const { return truncated_; }

  // fsync of every topic log (useful in buffered mode).
  void flush();

 protected:
  std::vector<TopicRecord> do_poll(const std::string& group, std::size_t max_batch, Millis wait) override;
  void do_commit(const std::string& group, std::uint64_t offset) override;
  void release(const std::string& group) override;

 private:
  struct Topic {
    int fd = -1;
    std::uint64_t size = 0;             // bytes of valid log
    std::vector<std::uint64_t> index;   // file position of each record
  };
  struct Group {
    std::string topic;
    std::uint64_t position = 0;
  };

  Topic& open_topic(const std::string& name);  // requires mu_
  void recover_topic(const std::string& name, Topic& t);
  void load_groups();
  void persist_group(const std::string& name, const Group& g);
  std::uint64_t backlog(const std::string& topic) const;  // requires mu_
  TopicRecord read_record(const std::string& topic, const Topic& t, std::uint64_t offset) const;
  void check_open() const;

  BusOptions opts_;
  Clock* clock_;
  mutable std::mutex mu_;
  std::condition_variable published_;
  std::condition_variable committed_;
  std::map<std::string, Topic> topics_;
  std::map<std::string, Group> groups_;
  std::set<std::string> leased_;
  std::map<std::string, std::uint64_t> truncated_;
  bool closed_ = false;
};

}  // namespace tstem
