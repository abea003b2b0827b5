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

#include "tstem/stream_source.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "tstem/error.hpp"
#include "tstem/http.hpp"

namespace tstem {

namespace {

// Sleeps in short steps so a stop request is noticed promptly.
void pause(Clock& clock, Millis d, const std::stop_token& stop) {
  constexpr Millis kStep{50};
  while (d.count() > 0 && !stop.stop_requested()) {
    auto step = std::min(d, kStep);
    clock.sleep_for(step);
    d -= step;
  }
}

}  // namespace

PostRecord post_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("post is not a JSON object");
  auto str = [&](const char* key) -> const std::string& {
    if (!j.contains(key) || !j[key].is_string()) {
      throw ValidationError(std::string("post field '") + key + "' is missing or not a string");
    }
    return j[key].get_ref<const std::string&>();
  };
  PostRecord p;
  p.id = str("id");
  if (p.id.empty()) throw ValidationError("post id is empty");
  p.text = str("text");
  p.created_at = parse_rfc3339(str("created_at"));
  p.raw = j;
  return p;
}

PostRecord parse_post_line(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ValidationError("post line is not JSON");
  return post_from_json(j);
}

std::string post_payload(const PostRecord& p) { return canonical_dump(p.raw); }

Document post_document(const PostRecord& p, Timestamp fetched_at) {
  return Document::create(Source::twitter(), p.id, p.text, fetched_at);
}

bool IdWindow::insert(const std::string& id) {
  if (capacity_ == 0) return true;
  if (seen_.count(id)) return false;
  if (order_.size() == capacity_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  order_.push_back(id);
  seen_.insert(id);
  return true;
}

ReplayStats replay(MessageBus& bus, const ReplayOptions& options, Clock* clock, std::stop_token stop) {
  if (options.rate < 0 || !std::isfinite(options.rate)) throw ConfigError("replay rate must be >= 0");
  Clock& c = clock ? *clock : SystemClock::instance();
  std::ifstream probe(options.path);
  if (!probe) throw ConfigError("cannot open post fixture " + options.path.string());
  probe.close();

  ReplayStats stats;
  const auto start = c.now();
  auto pace = [&] {
    if (options.rate <= 0) return;
    auto offset = Millis(static_cast<Millis::rep>(
        std::ceil(static_cast<double>(stats.published) * 1000.0 / options.rate)));
    auto now = c.now();
    if (now < start + offset) {
      c.sleep_for(std::chrono::ceil<Millis>(start + offset - now));
    }
  };
  auto done = [&] {
    return stop.stop_requested() || (options.max_records && stats.published >= options.max_records);
  };

  while (!done()) {
    std::ifstream in(options.path);
    if (!in) throw ConfigError("cannot open post fixture " + options.path.string());
    std::uint64_t published_this_pass = 0;
    std::string line;
    std::size_t lineno = 0;
    while (!done() && std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      PostRecord p;
      try {
        p = parse_post_line(line);
      } catch (const ValidationError& e) {
        ++stats.skipped;
        spdlog::warn("replay: {}:{} skipped: {}", options.path.string(), lineno, e.what());
        continue;
      }
      pace();
      bus.publish(options.topic, post_payload(p));
      ++stats.published;
      ++published_this_pass;
    }
    if (!in.eof()) break;
    ++stats.passes;
    if (!options.loop || published_this_pass == 0) break;
  }
  return stats;
}

StreamStats connect_http_stream(MessageBus& bus, const HttpStreamConfig& config,
                                std::shared_ptr<HttpTransport> transport, Clock* clock, std::stop_token stop) {
  if (config.url.empty()) throw ConfigError("stream url is not configured");
  HttpRequest req;
  req.url = config.url;
  req.timeout = Millis(0);
  req.headers.emplace_back("Accept", "application/x-ndjson");
  if (!config.token_env.empty()) {
    const char* token = std::getenv(config.token_env.c_str());
    if (!token || !*token) {
      throw ConfigError("stream auth: environment variable " + config.token_env + " is not set");
    }
    req.headers.emplace_back("Authorization", std::string("Bearer ") + token);
  }
  if (!transport) transport = default_transport();
  Clock& c = clock ? *clock : SystemClock::instance();

  StreamStats stats;
  IdWindow seen(config.dedup_window);
  std::mt19937_64 rng(config.seed);
  std::size_t failures = 0;  // consecutive connections that delivered nothing
  auto done = [&] {
    return stop.stop_requested() || (config.max_records && stats.published >= config.max_records);
  };

  while (!done()) {
    std::string buffer;
    std::uint64_t delivered = 0;
    auto on_line = [&](std::string_view line) {
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.find_first_not_of(" \t") == std::string_view::npos) return;
      PostRecord p;
      try {
        p = parse_post_line(line);
      } catch (const ValidationError& e) {
        ++stats.skipped;
        spdlog::warn("stream: skipped record: {}", e.what());
        return;
      }
      ++delivered;
      if (!seen.insert(p.id)) {
        ++stats.duplicates;
        return;
      }
      bus.publish(config.topic, post_payload(p));
      ++stats.published;
    };
    std::optional<std::string> failure;
    try {
      auto resp = transport->perform_streaming(req, [&](std::string_view chunk) {
        buffer.append(chunk);
        std::size_t pos;
        while (!done() && (pos = buffer.find('\n')) != std::string::npos) {
          on_line(std::string_view(buffer).substr(0, pos));
          buffer.erase(0, pos + 1);
        }
        return !done();
      });
      if (resp.status == 401 || resp.status == 403) {
        throw PermanentError("stream auth rejected with status " + std::to_string(resp.status),
                             static_cast<int>(resp.status));
      }
      if (resp.status >= 400 && resp.status < 500 && resp.status != 408 && resp.status != 429) {
        throw PermanentError("stream answered status " + std::to_string(resp.status),
                             static_cast<int>(resp.status));
      }
      if (resp.status < 200 || resp.status >= 300) {
        failure = "status " + std::to_string(resp.status);
      } else {
        failure = "stream ended";
      }
    } catch (const TransportError& e) {
      failure = e.what();
    }
    if (done()) break;
    if (delivered) failures = 0;
    if (config.max_reconnects && stats.reconnects >= config.max_reconnects) {
      throw TransportError("stream: giving up after " + std::to_string(stats.reconnects) +
                           " reconnects: " + *failure);
    }
    auto base = static_cast<double>(config.backoff.count()) * std::pow(2.0, static_cast<double>(std::min<std::size_t>(failures, 20)));
    base = std::min(base, static_cast<double>(config.max_backoff.count()));
    auto delay = Millis(static_cast<Millis::rep>(std::uniform_real_distribution<double>(0.5, 1.0)(rng) * base));
    spdlog::info("stream: {}; reconnecting in {} ms", *failure, delay.count());
    ++failures;
    ++stats.reconnects;
    pause(c, delay, stop);
  }
  return stats;
}

}  // namespace tstem
