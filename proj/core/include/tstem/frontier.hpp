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

// Focused-crawl frontier: spider profiles, url dedup, scope and depth
// control, per-host politeness.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"
#include "tstem/model.hpp"

namespace tstem {

// Canonical crawl form: absolute http/https url, lowercase scheme and host,
// default port dropped, dot segments resolved, no fragment. Throws
// ValidationError for anything else.
std::string normalize_url(std::string_view url);

// Lowercased host of a canonical url, without brackets or port.
std::string url_host(std::string_view url);

bool is_onion_host(std::string_view host);

enum class ScopeRule { open, host_allowlist, onion_only };
std::string_view to_string(ScopeRule r);
ScopeRule parse_scope_rule(std::string_view s);

struct SpiderProfile {
  Spider name = Spider::ache;
  std::vector<std::string> seeds;  // canonical urls
  ScopeRule scope = ScopeRule::open;
  // For host_allowlist: exact hosts, or ".example.com" for any subdomain.
  std::vector<std::string> allowed_hosts;
  int max_depth = 3;
  Millis min_delay{1000};
  std::vector<std::string> keywords;  // ECMAScript regexes, case-insensitive
  bool honor_robots = true;

  // Dark-web profiles are the onion-only ones.
  SourceKind source_kind() const;

  // open and host_allowlist never admit .onion hosts; onion_only admits
  // nothing else.
  bool in_scope(std::string_view canonical_url) const;

  // Throws ConfigError: no seeds, negative depth, non-canonical or
  // out-of-scope seeds, or an invalid keyword pattern.
  void validate() const;
};

// Defaults for a named spider. Seeds are empty and come from a seed file.
SpiderProfile spider_preset(Spider s);

// Profile from a JSON object; unset fields fall back to the preset of its
// "name". Seeds may be given inline ("seeds") or by file ("seed_file").
SpiderProfile profile_from_json(const nlohmann::json& j,
                                const std::filesystem::path& base_dir = {});

// One url per line; '#' starts a comment; blank lines are ignored. Throws
// ConfigError naming the line of an invalid url.
std::vector<std::string> parse_seed_file(std::string_view text);
std::vector<std::string> load_seed_file(const std::filesystem::path& path);

// Compiled keyword patterns. An empty list matches everything.
class KeywordFilter {
 public:
  KeywordFilter() = default;
  explicit KeywordFilter(const std::vector<std::string>& patterns);

  bool matches(std::string_view text) const;
  bool empty() const { return patterns_.empty(); }

 private:
  std::vector<std::regex> patterns_;
  std::vector<std::optional<std::string>> literals_;  // set when a pattern has no regex syntax
};

bool lexical_prefilter(std::string_view text, const SpiderProfile& profile);

struct LinkExtraction {
  std::vector<std::string> urls;  // canonical, deduped, document order
  std::size_t malformed = 0;      // hrefs that failed to parse or resolve
  std::size_t ignored = 0;        // well-formed but not http(s)
};

LinkExtraction extract_links(std::string_view html, std::string_view base);

// Subset of robots.txt: the group for our user agent (or "*") with Allow
// and Disallow path prefixes; the longest matching rule wins, Allow on ties.
class RobotsRules {
 public:
  RobotsRules() = default;  // allows everything
  static RobotsRules parse(std::string_view text, std::string_view user_agent);

  bool allowed(std::string_view path_and_query) const;

 private:
  std::vector<std::pair<std::string, bool>> rules_;  // prefix, allow
};

struct CrawlTask {
  std::string url;
  Spider spider = Spider::ache;
  int depth = 0;
  std::optional<std::string> discovered_from;
  Timestamp enqueued_at{};

  bool operator==(const CrawlTask&) const = default;
};

nlohmann::json to_json(const CrawlTask& t);
CrawlTask crawl_task_from_json(const nlohmann::json& j);

enum class RejectReason { duplicate, scope, depth, invalid, unknown_spider };
std::string_view to_string(RejectReason r);

struct EnqueueResult {
  bool accepted = false;
  std::optional<RejectReason> reason;

  explicit operator bool() const { return accepted; }
};

struct FrontierStats {
  std::uint64_t accepted = 0;
  std::uint64_t dispatched = 0;
  std::uint64_t pending = 0;
  std::map<std::string, std::uint64_t> rejected;  // by reason
};

// Internally synchronized. A url is admitted at most once for the lifetime
// of the frontier (or of its visited snapshot), so next_ready never hands
// out the same url twice.
class Frontier {
 public:
  explicit Frontier(std::vector<SpiderProfile> profiles);

  // Enqueues every profile's seeds at depth 0.
  void seed(Timestamp now);

  EnqueueResult enqueue(CrawlTask task);

  // Oldest eligible task (seeds before discovered urls) whose host was last
  // dispatched at least the profile's min delay before `now`.
  std::optional<CrawlTask> next_ready(Timestamp now);

  // Earliest time at which next_ready could return something; nullopt when
  // nothing is pending.
  std::optional<Timestamp> next_eligible(Timestamp now) const;

  bool empty() const;
  FrontierStats stats() const;
  const SpiderProfile& profile(Spider s) const;

  // Visited snapshot: one canonical url per line.
  void save_visited(const std::filesystem::path& path) const;
  std::size_t load_visited(const std::filesystem::path& path);

 private:
  struct Entry {
    CrawlTask task;
    std::uint64_t seq;
  };
  struct HostQueue {
    std::deque<Entry> seeds;
    std::deque<Entry> discovered;
    std::optional<Timestamp> last_dispatch;
    Millis delay{0};
  };

  const Entry* head(const HostQueue& q) const;
  void reject(RejectReason r);

  mutable std::mutex mu_;
  std::map<Spider, SpiderProfile> profiles_;
  std::unordered_map<std::string, HostQueue> hosts_;
  std::unordered_set<std::string> visited_;
  std::uint64_t seq_ = 0;
  FrontierStats stats_;
};

}  // namespace tstem
