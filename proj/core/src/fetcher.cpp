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


#include "tstem/fetcher.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "tstem/error.hpp"
#include "tstem/http.hpp"
#include "tstem/uri.hpp"

namespace tstem {

namespace {

std::string socks_url(const std::string& proxy) {
  if (proxy.find("://") != std::string::npos) return proxy;
  return "socks5h://" + proxy;
}

bool is_redirect(long s) { return s == 301 || s == 302 || s == 303 || s == 307 || s == 308; }

bool retryable_status(long s) { return s >= 500 || s == 408 || s == 429; }

}  // namespace

void FetchConfig::validate() const {
  if (timeout.count() <= 0) throw ConfigError("fetch timeout must be positive");
  if (retries < 0) throw ConfigError("fetch retries must be >= 0");
  if (backoff.count() < 0) throw ConfigError("fetch backoff must be >= 0");
  if (body_cap == 0) throw ConfigError("fetch body_cap must be positive");
  if (max_redirects < 0) throw ConfigError("fetch max_redirects must be >= 0");
  if (onion_proxy && onion_proxy->empty()) throw ConfigError("onion proxy is empty");
}

FetchConfig fetch_config_from_json(const nlohmann::json& j) {
  FetchConfig c;
  try {
    if (j.contains("onion_proxy") && !j["onion_proxy"].is_null()) {
      auto p = j["onion_proxy"].get<std::string>();
      if (!p.empty()) c.onion_proxy = p;
    }
    if (j.contains("http_proxy") && !j["http_proxy"].is_null()) {
      auto p = j["http_proxy"].get<std::string>();
      if (!p.empty()) c.http_proxy = p;
    }
    if (j.contains("timeout_ms")) c.timeout = Millis(j["timeout_ms"].get<long long>());
    if (j.contains("retries")) c.retries = j["retries"].get<int>();
    if (j.contains("backoff_ms")) c.backoff = Millis(j["backoff_ms"].get<long long>());
    if (j.contains("body_cap")) c.body_cap = j["body_cap"].get<std::size_t>();
    if (j.contains("max_redirects")) c.max_redirects = j["max_redirects"].get<int>();
    if (j.contains("user_agent")) c.user_agent = j["user_agent"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fetch config: ") + e.what());
  }
  c.validate();
  return c;
}

Fetcher::Fetcher(FetchConfig config, std::shared_ptr<HttpTransport> transport, Clock* clock)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : default_transport()),
      clock_(clock ? clock : &SystemClock::instance()) {
  config_.validate();
}

HttpRequest Fetcher::request_for(const std::string& url) const {
  HttpRequest req;
  req.url = url;
  req.timeout = config_.timeout;
  req.max_body = config_.body_cap;
  req.user_agent = config_.user_agent;
  req.headers.emplace_back("Accept", "text/html,application/xhtml+xml,text/plain;q=0.9,*/*;q=0.5");
  if (is_onion_host(url_host(url))) {
    if (!config_.onion_proxy) {
      throw ConfigError("refusing to fetch " + url + ": .onion host and no onion proxy configured");
    }
    req.proxy = socks_url(*config_.onion_proxy);
  } else if (config_.http_proxy) {
    req.proxy = *config_.http_proxy;
  }
  return req;
}

FetchResult Fetcher::fetch(const CrawlTask& task) const {
  FetchResult out;
  out.task = task;
  auto started = clock_->now();
  std::string url = normalize_url(task.url);

  for (;;) {
    auto req = request_for(url);
    HttpResponse resp;
    int attempt = 0;
    Millis wait = config_.backoff;
    for (;;) {
      ++attempt;
      try {
        resp = transport_->perform(req);
        if (!retryable_status(resp.status) || attempt > config_.retries) break;
        spdlog::debug("fetch {}: status {} (attempt {})", url, resp.status, attempt);
      } catch (const TransportError& e) {
        if (!e.transient() || attempt > config_.retries) throw;
        spdlog::debug("fetch {}: {} (attempt {})", url, e.what(), attempt);
      }
      clock_->sleep_for(wait);
      wait *= 2;
    }
    out.attempts = attempt;

    if (retryable_status(resp.status)) {
      if (resp.status >= 500) {
        throw TransportError("GET " + url + ": status " + std::to_string(resp.status) + " after " +
                                 std::to_string(attempt) + " attempts",
                             true);
      }
      throw PermanentError("GET " + url + ": status " + std::to_string(resp.status), static_cast<int>(resp.status));
    }
    if (is_redirect(resp.status)) {
      auto loc = resp.header("location");
      if (loc.empty()) {
        throw PermanentError("GET " + url + ": redirect without Location", static_cast<int>(resp.status));
      }
      if (out.redirects >= config_.max_redirects) {
        throw PermanentError("GET " + task.url + ": more than " + std::to_string(config_.max_redirects) +
                                 " redirects",
                             static_cast<int>(resp.status));
      }
      auto base = parse_uri(url);
      auto ref = parse_uri_reference(loc);
      if (!base || !ref) {
        throw PermanentError("GET " + url + ": bad Location '" + loc + "'", static_cast<int>(resp.status));
      }
      std::string next;
      try {
        next = normalize_url(resolve_reference(*base, *ref).to_string());
      } catch (const ValidationError&) {
        throw PermanentError("GET " + url + ": redirect to non-http target '" + loc + "'",
                             static_cast<int>(resp.status));
      }
      if (is_onion_host(url_host(url)) && !is_onion_host(url_host(next))) {
        throw PermanentError("GET " + url + ": redirect from onion host to " + next + " rejected",
                             static_cast<int>(resp.status));
      }
      ++out.redirects;
      url = std::move(next);
      continue;
    }
    if (resp.status >= 400) {
      throw PermanentError("GET " + url + ": status " + std::to_string(resp.status), static_cast<int>(resp.status));
    }
    out.status = resp.status;
    out.final_url = url;
    out.body = std::move(resp.body);
    if (out.body.size() > config_.body_cap) {
      out.body.resize(config_.body_cap);
      resp.truncated = true;
    }
    out.truncated = resp.truncated;
    out.content_type = resp.header("content-type");
    out.fetched_at = clock_->now();
    out.elapsed = std::max(Millis(0), std::chrono::duration_cast<Millis>(out.fetched_at - started));
    return out;
  }
}

std::optional<std::string> Fetcher::fetch_aux(const std::string& url) const {
  auto req = request_for(url);
  auto resp = transport_->perform(req);
  if (resp.status < 200 || resp.status >= 300) return std::nullopt;
  return std::move(resp.body);
}

FetchResult fetch(const CrawlTask& task, const FetchConfig& config) {
  return Fetcher(config).fetch(task);
}

}  // namespace tstem
