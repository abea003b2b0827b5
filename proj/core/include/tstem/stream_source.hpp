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

// Post-stream ingestion: fixture replay and a newline-delimited JSON
// streaming client, both publishing to the bus.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "tstem/bus.hpp"
#include "tstem/clock.hpp"
#include "tstem/model.hpp"

namespace tstem {

class HttpTransport;

// One post: {"id": string, "text": string, "created_at": RFC 3339}. Extra
// fields are carried through untouched.
struct PostRecord {
  std::string id;
  std::string text;
  Timestamp created_at{};
  nlohmann::json raw;  // the parsed object
};

// Throws ValidationError when a required field is missing or mistyped.
PostRecord post_from_json(const nlohmann::json& j);
PostRecord parse_post_line(std::string_view line);

// Canonical JSON of the parsed record; this is the bus payload.
std::string post_payload(const PostRecord& p);

Document post_document(const PostRecord& p, Timestamp fetched_at);

// Remembers the most recent `capacity` ids.
class IdWindow {
 public:
  explicit IdWindow(std::size_t capacity = 100000) : capacity_(capacity) {}
  // True if the id was not in the window; it is then remembered.
  bool insert(const std::string& id);
  std::size_t size() const { return order_.size(); }

 private:
  std::size_t capacity_;
  std::deque<std::string> order_;
  std::unordered_set<std::string> seen_;
};

struct ReplayOptions {
  std::filesystem::path path;
  double rate = 0;            // records per second; 0 = as fast as possible
  bool loop = false;
  std::uint64_t max_records = 0;  // 0 = no limit
  std::string topic = std::string(topics::kTweetRaw);
};

struct ReplayStats {
  std::uint64_t published = 0;
  std::uint64_t skipped = 0;  // malformed lines, counted on every pass
  std::uint64_t passes = 0;   // completed passes over the file
};

// Publishes the file's records in order, paced so that no half-open one
// second window holds more than `rate` records. With loop set, starts over
// at end of file until max_records or a stop request. Throws ConfigError
// when the file cannot be opened.
ReplayStats replay(MessageBus& bus, const ReplayOptions& options, Clock* clock = nullptr,
                   std::stop_token stop = {});

struct HttpStreamConfig {
  std::string url;
  std::string token_env;  // bearer token variable; empty for no auth
  Millis backoff{500};
  Millis max_backoff{30000};
  std::size_t max_reconnects = 0;  // 0 = unlimited
  std::uint64_t max_records = 0;   // 0 = until stopped
  std::size_t dedup_window = 100000;
  std::uint64_t seed = 1;          // jitter
  std::string topic = std::string(topics::kTweetRaw);
};

struct StreamStats {
  std::uint64_t published = 0;
  std::uint64_t skipped = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t reconnects = 0;
};

// Reads newline-delimited JSON posts from a long-lived response and
// publishes them. Drops and 5xx answers reconnect after a jittered,
// doubling delay; ids already seen in this session are not republished.
// Throws ConfigError naming the variable when token_env is unset,
// PermanentError on 401/403 and other 4xx answers, and TransportError once
// max_reconnects is exhausted.
StreamStats connect_http_stream(MessageBus& bus, const HttpStreamConfig& config,
                                std::shared_ptr<HttpTransport> transport = nullptr, Clock* clock = nullptr,
                                std::stop_token stop = {});

}  // namespace tstem
