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

// Minimal HTTP client surface shared by every outbound caller. One request,
// one response; redirects are never followed here (the fetcher owns that).

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"

namespace tstem {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  Millis timeout{30000};
  // "socks5h://host:port" or "http://host:port"; nullopt means direct.
  std::optional<std::string> proxy;
  std::size_t max_body = 0;  // 0 = unlimited
  std::string user_agent = "tstem/0.1";
};

struct HttpResponse {
  long status = 0;
  std::map<std::string, std::string> headers;  // names lowercased
  std::string body;
  bool truncated = false;  // body hit max_body

  std::string header(const std::string& lower_name) const;
};

// Throws TransportError for connect/DNS/timeout failures. Never throws on
// HTTP status; callers map status codes themselves.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse perform(const HttpRequest& req) = 0;

  // Streams the body to `on_data`; returning false from it ends the
  // transfer early. Returns the status and headers (body left empty).
  virtual HttpResponse perform_streaming(const HttpRequest& req,
                                         const std::function<bool(std::string_view)>& on_data);
};

class CurlTransport final : public HttpTransport {
 public:
  HttpResponse perform(const HttpRequest& req) override;
  HttpResponse perform_streaming(const HttpRequest& req,
                                 const std::function<bool(std::string_view)>& on_data) override;
};

std::shared_ptr<HttpTransport> default_transport();

// POSTs `body` as JSON and parses a JSON reply. Maps failures onto the error
// hierarchy: transport problems and 5xx are TransportError, other non-2xx are
// PermanentError, an unparseable body is ProtocolError.
nlohmann::json post_json(HttpTransport& t, const std::string& url, const nlohmann::json& body,
                         Millis timeout,
                         const std::vector<std::pair<std::string, std::string>>& headers = {});

// Joins a base url and an absolute path without doubling slashes.
std::string join_url(std::string_view base, std::string_view path);

}  // namespace tstem
