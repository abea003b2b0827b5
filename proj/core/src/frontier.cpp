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

#include "tstem/frontier.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <tuple>

#include "tstem/error.hpp"
#include "tstem/html.hpp"
#include "tstem/uri.hpp"

namespace tstem {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_http(const Uri& u) { return u.scheme == "http" || u.scheme == "https"; }

std::string bare_host(std::string h) {
  if (h.size() >= 2 && h.front() == '[' && h.back() == ']') h = h.substr(1, h.size() - 2);
  return h;
}

bool host_allowed(std::string_view host, std::string_view rule) {
  if (!rule.empty() && rule.front() == '.') {
    auto apex = rule.substr(1);
    return host == apex || (host.size() > rule.size() && host.substr(host.size() - rule.size()) == rule);
  }
  return host == rule;
}

bool has_regex_syntax(std::string_view p) {
  return p.find_first_of("\\^$.|?*+()[]{}") != std::string_view::npos;
}

bool icontains(std::string_view text, std::string_view needle) {
  if (needle.empty()) return true;
  auto it = std::search(text.begin(), text.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it != text.end();
}

// robots.txt pattern: '*' matches any run, a trailing '$' anchors the end.
bool robots_match(std::string_view pat, std::string_view path) {
  bool anchored = !pat.empty() && pat.back() == '$';
  if (anchored) pat.remove_suffix(1);
  std::size_t star = pat.find('*');
  if (star == std::string_view::npos) {
    if (anchored) return path == pat;
    return path.substr(0, pat.size()) == pat;
  }
  auto lit = pat.substr(0, star);
  if (path.substr(0, lit.size()) != lit) return false;
  auto rest = pat.substr(star + 1);
  std::string rest_pat(rest);
  if (anchored) rest_pat += '$';
  for (std::size_t k = lit.size(); k <= path.size(); ++k) {
    if (robots_match(rest_pat, path.substr(k))) return true;
  }
  return false;
}

const std::vector<std::string>& default_keywords() {
  static const std::vector<std::string> kw = {
      "malware",  "ransomware", "exploit", "botnet",   "phishing",        "trojan",
      "backdoor", "zero-day",   "CVE-",    "\\bC2\\b", "command and control",
      "indicators? of compromise", "\\bIOCs?\\b", "threat actor", "\\bAPT ?\\d+"};
  return kw;
}

}  // namespace

std::string normalize_url(std::string_view url) {
  auto u = parse_uri(trim(url));
  if (!u) throw ValidationError("not a valid url: '" + std::string(url) + "'");
  u->scheme = ascii_lower(u->scheme);
  if (!is_http(*u)) throw ValidationError("not an http(s) url: '" + std::string(url) + "'");
  if (!u->has_authority || u->host.empty()) {
    throw ValidationError("url has no host: '" + std::string(url) + "'");
  }
  return normalize(std::move(*u)).to_string();
}

std::string url_host(std::string_view url) {
  auto u = parse_uri(url);
  if (!u) return {};
  return bare_host(ascii_lower(u->host));
}

bool is_onion_host(std::string_view host) {
  auto h = ascii_lower(host);
  if (!h.empty() && h.back() == '.') h.pop_back();
  return h.size() > 6 && h.compare(h.size() - 6, 6, ".onion") == 0;
}

std::string_view to_string(ScopeRule r) {
  switch (r) {
    case ScopeRule::open: return "open";
    case ScopeRule::host_allowlist: return "host_allowlist";
    case ScopeRule::onion_only: return "onion_only";
  }
  return "open";
}

ScopeRule parse_scope_rule(std::string_view s) {
  if (s == "open") return ScopeRule::open;
  if (s == "host_allowlist") return ScopeRule::host_allowlist;
  if (s == "onion_only") return ScopeRule::onion_only;
  throw ConfigError("unknown scope rule '" + std::string(s) + "'");
}

SourceKind SpiderProfile::source_kind() const {
  return scope == ScopeRule::onion_only ? SourceKind::dark_web : SourceKind::clear_web;
}

bool SpiderProfile::in_scope(std::string_view canonical_url) const {
  auto host = url_host(canonical_url);
  if (host.empty()) return false;
  bool onion = is_onion_host(host);
  switch (scope) {
    case ScopeRule::onion_only: return onion;
    case ScopeRule::open: return !onion;
    case ScopeRule::host_allowlist: {
      if (onion) return false;
      if (!allowed_hosts.empty()) {
        return std::any_of(allowed_hosts.begin(), allowed_hosts.end(),
                           [&](const std::string& r) { return host_allowed(host, ascii_lower(r)); });
      }
      return std::any_of(seeds.begin(), seeds.end(),
                         [&](const std::string& s) { return url_host(s) == host; });
    }
  }
  return false;
}

void SpiderProfile::validate() const {
  auto who = std::string(to_string(name));
  if (seeds.empty()) throw ConfigError("spider " + who + ": no seeds");
  if (max_depth < 0) throw ConfigError("spider " + who + ": max_depth must be >= 0");
  if (min_delay.count() < 0) throw ConfigError("spider " + who + ": min_delay must be >= 0");
  for (const auto& s : seeds) {
    std::string canon;
    try {
      canon = normalize_url(s);
    } catch (const ValidationError& e) {
      throw ConfigError("spider " + who + ": " + e.what());
    }
    if (canon != s) throw ConfigError("spider " + who + ": seed not canonical: " + s);
    if (!in_scope(s)) throw ConfigError("spider " + who + ": seed out of scope: " + s);
  }
  KeywordFilter check(keywords);
}

SpiderProfile spider_preset(Spider s) {
  SpiderProfile p;
  p.name = s;
  p.keywords = default_keywords();
  switch (s) {
    case Spider::ache:
      p.scope = ScopeRule::open;
      p.max_depth = 2;
      p.min_delay = Millis(1000);
      break;
    case Spider::sitemap:
      p.scope = ScopeRule::host_allowlist;
      p.max_depth = 4;
      p.min_delay = Millis(1000);
      break;
    case Spider::ahmia:
      p.scope = ScopeRule::onion_only;
      p.max_depth = 2;
      p.min_delay = Millis(2000);
      p.honor_robots = false;
      break;
    case Spider::wiki1:
      p.scope = ScopeRule::onion_only;
      p.max_depth = 1;
      p.min_delay = Millis(2000);
      p.honor_robots = false;
      break;
    case Spider::wiki2:
      p.scope = ScopeRule::onion_only;
      p.max_depth = 2;
      p.min_delay = Millis(2000);
      p.honor_robots = false;
      break;
  }
  return p;
}

SpiderProfile profile_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    throw ConfigError("spider profile needs a string 'name'");
  }
  SpiderProfile p;
  try {
    p = spider_preset(parse_spider(j["name"].get<std::string>()));
    if (j.contains("scope")) p.scope = parse_scope_rule(j["scope"].get<std::string>());
    if (j.contains("allowed_hosts")) p.allowed_hosts = j["allowed_hosts"].get<std::vector<std::string>>();
    if (j.contains("max_depth")) p.max_depth = j["max_depth"].get<int>();
    if (j.contains("min_delay_ms")) p.min_delay = Millis(j["min_delay_ms"].get<long long>());
    if (j.contains("keywords")) p.keywords = j["keywords"].get<std::vector<std::string>>();
    if (j.contains("honor_robots")) p.honor_robots = j["honor_robots"].get<bool>();
    if (j.contains("seeds")) {
      for (const auto& s : j["seeds"].get<std::vector<std::string>>()) p.seeds.push_back(normalize_url(s));
    }
    if (j.contains("seed_file")) {
      std::filesystem::path f = j["seed_file"].get<std::string>();
      if (f.is_relative() && !base_dir.empty()) f = base_dir / f;
      for (auto& s : load_seed_file(f)) p.seeds.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spider profile: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("spider profile: ") + e.what());
  }
  return p;
}

std::vector<std::string> parse_seed_file(std::string_view text) {
  std::vector<std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    try {
      out.push_back(normalize_url(line));
    } catch (const ValidationError& e) {
      throw ConfigError("seed file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> load_seed_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open seed file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_seed_file(ss.str());
}

KeywordFilter::KeywordFilter(const std::vector<std::string>& patterns) {
  for (const auto& p : patterns) {
    if (p.empty()) continue;
    try {
      patterns_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid keyword pattern '" + p + "': " + e.what());
    }
    literals_.push_back(has_regex_syntax(p) ? std::optional<std::string>{} : std::optional<std::string>{p});
  }
}

bool KeywordFilter::matches(std::string_view text) const {
  if (patterns_.empty()) return true;
  for (std::size_t i = 0; i < patterns_.size(); ++i) {
    if (literals_[i]) {
      if (icontains(text, *literals_[i])) return true;
    } else if (std::regex_search(text.begin(), text.end(), patterns_[i])) {
      return true;
    }
  }
  return false;
}

bool lexical_prefilter(std::string_view text, const SpiderProfile& profile) {
  return KeywordFilter(profile.keywords).matches(text);
}

LinkExtraction extract_links(std::string_view html, std::string_view base) {
  LinkExtraction out;
  auto b = parse_uri(base);
  if (!b) throw ValidationError("base is not a valid url: '" + std::string(base) + "'");
  std::unordered_set<std::string> seen;
  for (const auto& href : anchor_hrefs(html)) {
    auto ref = parse_uri_reference(href);
    if (!ref) {
      ++out.malformed;
      continue;
    }
    ref->scheme = ascii_lower(ref->scheme);
    if (ref->is_absolute() && !is_http(*ref)) {
      ++out.ignored;
      continue;
    }
    auto target = resolve_reference(*b, *ref);
    if (!is_http(target) || !target.has_authority || target.host.empty()) {
      ++out.malformed;
      continue;
    }
    auto canon = normalize(std::move(target)).to_string();
    if (seen.insert(canon).second) out.urls.push_back(std::move(canon));
  }
  return out;
}

RobotsRules RobotsRules::parse(std::string_view text, std::string_view user_agent) {
  auto agent = ascii_lower(user_agent.substr(0, user_agent.find('/')));
  struct Group {
    std::vector<std::string> agents;
    std::vector<std::pair<std::string, bool>> rules;
  };
  std::vector<Group> groups;
  bool last_was_agent = false;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    line = trim(line.substr(0, line.find('#')));
    auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    auto key = ascii_lower(trim(line.substr(0, colon)));
    auto value = std::string(trim(line.substr(colon + 1)));
    if (key == "user-agent") {
      if (!last_was_agent) groups.emplace_back();
      groups.back().agents.push_back(ascii_lower(value));
      last_was_agent = true;
      continue;
    }
    last_was_agent = false;
    if (groups.empty()) continue;
    if (key == "allow" || key == "disallow") {
      if (value.empty()) continue;
      groups.back().rules.emplace_back(value, key == "allow");
    }
  }
  const Group* chosen = nullptr;
  const Group* star = nullptr;
  for (const auto& g : groups) {
    for (const auto& a : g.agents) {
      if (a == "*") {
        if (!star) star = &g;
      } else if (!agent.empty() && agent.find(a) != std::string::npos) {
        if (!chosen) chosen = &g;
      }
    }
  }
  RobotsRules r;
  if (!chosen) chosen = star;
  if (chosen) r.rules_ = chosen->rules;
  return r;
}

bool RobotsRules::allowed(std::string_view path) const {
  if (path.empty()) path = "/";
  std::size_t best_len = 0;
  bool best_allow = true;
  bool any = false;
  for (const auto& [pat, allow] : rules_) {
    if (!robots_match(pat, path)) continue;
    if (!any || pat.size() > best_len || (pat.size() == best_len && allow)) {
      best_len = pat.size();
      best_allow = allow;
      any = true;
    }
  }
  return best_allow;
}

nlohmann::json to_json(const CrawlTask& t) {
  nlohmann::json j = {{"url", t.url},
                      {"spider", std::string(to_string(t.spider))},
                      {"depth", t.depth},
                      {"enqueued_at", format_rfc3339(t.enqueued_at)}};
  if (t.discovered_from) j["discovered_from"] = *t.discovered_from;
  return j;
}

CrawlTask crawl_task_from_json(const nlohmann::json& j) {
  try {
    CrawlTask t;
    t.url = j.at("url").get<std::string>();
    t.spider = parse_spider(j.at("spider").get<std::string>());
    t.depth = j.at("depth").get<int>();
    if (j.contains("discovered_from")) t.discovered_from = j["discovered_from"].get<std::string>();
    t.enqueued_at = parse_rfc3339(j.at("enqueued_at").get<std::string>());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("crawl task: ") + e.what());
  }
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::duplicate: return "duplicate";
    case RejectReason::scope: return "scope";
    case RejectReason::depth: return "depth";
    case RejectReason::invalid: return "invalid";
    case RejectReason::unknown_spider: return "unknown_spider";
  }
  return "invalid";
}

Frontier::Frontier(std::vector<SpiderProfile> profiles) {
  if (profiles.empty()) throw ConfigError("frontier needs at least one spider profile");
  for (auto& p : profiles) {
    p.validate();
    auto name = p.name;
    if (!profiles_.emplace(name, std::move(p)).second) {
      throw ConfigError("duplicate spider profile " + std::string(to_string(name)));
    }
  }
}

void Frontier::seed(Timestamp now) {
  std::vector<CrawlTask> tasks;
  for (const auto& [name, p] : profiles_) {
    for (const auto& s : p.seeds) tasks.push_back(CrawlTask{s, name, 0, std::nullopt, now});
  }
  for (auto& t : tasks) enqueue(std::move(t));
}

void Frontier::reject(RejectReason r) { ++stats_.rejected[std::string(to_string(r))]; }

EnqueueResult Frontier::enqueue(CrawlTask task) {
  std::lock_guard lock(mu_);
  auto fail = [&](RejectReason r) {
    reject(r);
    return EnqueueResult{false, r};
  };
  bool canonical = false;
  try {
    canonical = normalize_url(task.url) == task.url;
  } catch (const ValidationError&) {
  }
  if (!canonical) return fail(RejectReason::invalid);
  auto pit = profiles_.find(task.spider);
  if (pit == profiles_.end()) return fail(RejectReason::unknown_spider);
  const auto& profile = pit->second;
  if (visited_.count(task.url)) return fail(RejectReason::duplicate);
  if (!profile.in_scope(task.url)) return fail(RejectReason::scope);
  if (task.depth < 0 || task.depth > profile.max_depth) return fail(RejectReason::depth);

  visited_.insert(task.url);
  auto& q = hosts_[url_host(task.url)];
  q.delay = std::max(q.delay, profile.min_delay);
  bool is_seed = task.depth == 0 && !task.discovered_from;
  (is_seed ? q.seeds : q.discovered).push_back(Entry{std::move(task), seq_++});
  ++stats_.accepted;
  ++stats_.pending;
  return {true, std::nullopt};
}

const Frontier::Entry* Frontier::head(const HostQueue& q) const {
  if (!q.seeds.empty()) return &q.seeds.front();
  if (!q.discovered.empty()) return &q.discovered.front();
  return nullptr;
}

std::optional<CrawlTask> Frontier::next_ready(Timestamp now) {
  std::lock_guard lock(mu_);
  HostQueue* best_q = nullptr;
  std::tuple<int, std::uint64_t> best_key{2, 0};
  for (auto& [host, q] : hosts_) {
    const Entry* e = head(q);
    if (!e) continue;
    if (q.last_dispatch && now < *q.last_dispatch + q.delay) continue;
    std::tuple<int, std::uint64_t> key{q.seeds.empty() ? 1 : 0, e->seq};
    if (!best_q || key < best_key) {
      best_q = &q;
      best_key = key;
    }
  }
  if (!best_q) return std::nullopt;
  auto& dq = best_q->seeds.empty() ? best_q->discovered : best_q->seeds;
  CrawlTask t = std::move(dq.front().task);
  dq.pop_front();
  best_q->last_dispatch = now;
  ++stats_.dispatched;
  --stats_.pending;
  return t;
}

std::optional<Timestamp> Frontier::next_eligible(Timestamp now) const {
  std::lock_guard lock(mu_);
  std::optional<Timestamp> best;
  for (const auto& [host, q] : hosts_) {
    if (!head(q)) continue;
    Timestamp at = q.last_dispatch ? std::max(now, *q.last_dispatch + q.delay) : now;
    if (!best || at < *best) best = at;
  }
  return best;
}

bool Frontier::empty() const {
  std::lock_guard lock(mu_);
  return stats_.pending == 0;
}

FrontierStats Frontier::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

const SpiderProfile& Frontier::profile(Spider s) const {
  auto it = profiles_.find(s);
  if (it == profiles_.end()) throw ValidationError("no profile for spider " + std::string(to_string(s)));
  return it->second;
}

void Frontier::save_visited(const std::filesystem::path& path) const {
  std::vector<std::string> urls;
  {
    std::lock_guard lock(mu_);
    urls.assign(visited_.begin(), visited_.end());
  }
  std::sort(urls.begin(), urls.end());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw StorageError("cannot write visited snapshot " + tmp.string());
    for (const auto& u : urls) f << u << '\n';
    if (!f.flush()) throw StorageError("cannot write visited snapshot " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot replace visited snapshot " + path.string() + ": " + ec.message());
}

std::size_t Frontier::load_visited(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) return 0;
  std::size_t added = 0;
  std::string line;
  std::lock_guard lock(mu_);
  while (std::getline(f, line)) {
    auto u = trim(line);
    if (!u.empty() && visited_.insert(std::string(u)).second) ++added;
  }
  return added;
}

}  // namespace tstem
