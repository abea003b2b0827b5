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


// Page retrieval for crawl tasks: proxy routing, redirects, retries.

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"
#include "tstem/frontier.hpp"

namespace tstem {

class HttpTransport;
struct HttpRequest;

struct FetchConfig {
  // SOCKS5 endpoint "host:port" for .onion hosts. Name resolution happens on
  // the proxy side.
  std::optional<std::string> onion_proxy;
  // Optional proxy url for every other host.
  std::optional<std::string> http_proxy;
  Millis timeout{30000};
  int retries = 3;              // extra attempts after a transient failure
  Millis backoff{500};          // doubled after each failed attempt
  std::size_t body_cap = 2u << 20;
  int max_redirects = 5;
  std::string user_agent = "tstem/0.1";

  void validate() const;  // ConfigError
};

FetchConfig fetch_config_from_json(const nlohmann::json& j);

struct FetchResult {
  CrawlTask task;
  long status = 0;
  std::string final_url;
  std::string body;  // at most body_cap bytes
  bool truncated = false;
  std::string content_type;
  Timestamp fetched_at{};
  Millis elapsed{0};
  int attempts = 0;   // transport calls for the final hop
  int redirects = 0;
};

// Safe for concurrent use.
//
// Errors:
//   ConfigError     a .onion host with no onion proxy; thrown before any
//                   transport call.
//   TransportError  connect, DNS, timeout or 5xx still failing after
//                   `retries` extra attempts.
//   PermanentError  4xx (except 408 and 429, which are retried), a redirect
//                   without Location, more than max_redirects hops, or a
//                   redirect from an onion host to anything else.
class Fetcher {
 public:
  explicit Fetcher(FetchConfig config, std::shared_ptr<HttpTransport> transport = nullptr,
                   Clock* clock = nullptr);

  FetchResult fetch(const CrawlTask& task) const;

  // GET of an auxiliary resource (robots.txt) on the same routing rules,
  // without retries. Returns the body for a 2xx, nullopt otherwise.
  std::optional<std::string> fetch_aux(const std::string& url) const;

  const FetchConfig& config() const { return config_; }

 private:
  HttpRequest request_for(const std::string& url) const;

  FetchConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Clock* clock_;
};

FetchResult fetch(const CrawlTask& task, const FetchConfig& config);

}  // namespace tstem
