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


#include "tstem/enrichment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "tstem/error.hpp"
#include "tstem/http.hpp"

namespace tstem {

namespace {

std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out;
}

std::string read_file(const std::filesystem::path& p, const char* what) {
  std::ifstream f(p);
  if (!f) throw ConfigError(std::string("cannot open ") + what + " " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string_view found_name(Found f) { return to_string(f); }

Found parse_found(std::string_view s) {
  if (s == to_string(Found::yes)) return Found::yes;
  if (s == to_string(Found::no)) return Found::no;
  return Found::unknown;
}

}  // namespace

FixtureTable FixtureTable::parse(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("enrichment fixture is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("enrichment fixture must map indicator keys to provider objects");
  FixtureTable t;
  for (const auto& [key, row] : j.items()) {
    if (!row.is_object()) throw ConfigError("enrichment fixture: row for '" + key + "' is not an object");
    auto colon = key.find(':');
    if (colon == std::string::npos) throw ConfigError("enrichment fixture: '" + key + "' is not an indicator key");
    std::string canonical_key;
    try {
      auto kind = parse_indicator_type(std::string_view(key).substr(0, colon));
      canonical_key = indicator_key(std::string_view(key).substr(colon + 1), kind);
    } catch (const ValidationError& e) {
      throw ConfigError("enrichment fixture: bad key '" + key + "': " + e.what());
    }
    auto& out = t.rows_[canonical_key];
    for (const auto& [provider, found] : row.items()) {
      if (!found.is_boolean()) throw ConfigError("enrichment fixture: non-boolean mark for '" + key + "'");
      out[provider] = found.get<bool>();
    }
  }
  return t;
}

FixtureTable FixtureTable::load(const std::filesystem::path& path) {
  return parse(read_file(path, "enrichment fixture"));
}

bool FixtureTable::found(const std::string& key, const std::string& provider) const {
  auto it = rows_.find(key);
  if (it == rows_.end()) return false;
  auto p = it->second.find(provider);
  return p != it->second.end() && p->second;
}

FixtureProvider::FixtureProvider(std::string name, std::shared_ptr<const FixtureTable> table)
    : name_(std::move(name)), table_(std::move(table)) {
  if (!table_) throw ConfigError("fixture provider '" + name_ + "' has no table");
}

bool FixtureProvider::lookup(const Indicator& ind) { return table_->found(ind.key(), name_); }

HttpProvider::HttpProvider(HttpProviderConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(transport ? std::move(transport) : default_transport()) {
  if (config_.name.empty()) throw ConfigError("reputation provider needs a name");
  if (config_.base_url.empty()) throw ConfigError("reputation provider '" + config_.name + "' has no base_url");
  if (!config_.api_key_env.empty()) {
    const char* v = std::getenv(config_.api_key_env.c_str());
    if (!v || !*v) {
      throw ConfigError("reputation provider '" + config_.name + "': environment variable " +
                        config_.api_key_env + " is not set");
    }
    api_key_ = v;
  }
}

bool HttpProvider::lookup(const Indicator& ind) {
  HttpRequest req;
  req.url = join_url(config_.base_url, "/v1/indicators/" + std::string(to_string(ind.kind())) + "/" +
                                           percent_encode(ind.value()));
  req.timeout = config_.timeout;
  req.max_body = 1 << 20;
  if (!api_key_.empty()) req.headers.emplace_back(config_.api_key_header, api_key_);
  auto resp = transport_->perform(req);
  if (resp.status == 404) return false;
  if (resp.status >= 200 && resp.status < 300) {
    auto j = nlohmann::json::parse(resp.body, nullptr, false);
    if (j.is_object() && j.contains("found") && j["found"].is_boolean()) return j["found"].get<bool>();
    return true;
  }
  if (resp.status == 429 || resp.status >= 500) {
    throw TransportError(config_.name + ": status " + std::to_string(resp.status), true);
  }
  throw PermanentError(config_.name + ": status " + std::to_string(resp.status), static_cast<int>(resp.status));
}

std::string_view to_string(EnrichmentMode m) { return m == EnrichmentMode::live ? "live" : "fixture"; }

EnrichmentMode parse_enrichment_mode(std::string_view s) {
  if (s == "live") return EnrichmentMode::live;
  if (s == "fixture") return EnrichmentMode::fixture;
  throw ConfigError("unknown enrichment mode '" + std::string(s) + "'");
}

EnrichmentConfig enrichment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  EnrichmentConfig c;
  auto resolve = [&](std::filesystem::path p) {
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p;
  };
  try {
    if (j.contains("mode")) c.mode = parse_enrichment_mode(j["mode"].get<std::string>());
    if (j.contains("providers")) c.providers = j["providers"].get<std::vector<std::string>>();
    if (j.contains("fixture")) c.fixture_path = resolve(j["fixture"].get<std::string>());
    if (j.contains("ttl_seconds")) c.ttl = std::chrono::seconds(j["ttl_seconds"].get<long long>());
    if (j.contains("cache")) c.cache_path = resolve(j["cache"].get<std::string>());
    if (j.contains("live")) {
      for (const auto& p : j["live"]) {
        HttpProviderConfig h;
        h.name = p.at("name").get<std::string>();
        h.base_url = p.at("base_url").get<std::string>();
        if (p.contains("api_key_env")) h.api_key_env = p["api_key_env"].get<std::string>();
        if (p.contains("api_key_header")) h.api_key_header = p["api_key_header"].get<std::string>();
        if (p.contains("timeout_ms")) h.timeout = Millis(p["timeout_ms"].get<long long>());
        if (p.contains("rate_per_second")) h.rate_per_second = p["rate_per_second"].get<double>();
        c.live.push_back(std::move(h));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("enrichment config: ") + e.what());
  }
  if (c.ttl.count() <= 0) throw ConfigError("enrichment ttl must be positive");
  if (c.providers.empty()) throw ConfigError("enrichment needs at least one provider");
  if (c.mode == EnrichmentMode::fixture && c.fixture_path.empty()) {
    throw ConfigError("enrichment fixture mode needs 'fixture'");
  }
  return c;
}

Enricher::Enricher(std::vector<std::unique_ptr<ReputationProvider>> providers, std::chrono::seconds ttl,
                   Clock* clock, std::map<std::string, double> rate_per_second)
    : ttl_(ttl), clock_(clock ? clock : &SystemClock::instance()) {
  if (ttl_.count() <= 0) throw ConfigError("enrichment ttl must be positive");
  std::set<std::string> names;
  for (auto& p : providers) {
    if (!p) throw ConfigError("null reputation provider");
    if (!names.insert(p->name()).second) throw ConfigError("duplicate provider '" + p->name() + "'");
    auto slot = std::make_unique<Slot>();
    if (auto it = rate_per_second.find(p->name()); it != rate_per_second.end()) slot->rate = it->second;
    slot->tokens = std::max(1.0, slot->rate);
    slot->refilled = clock_->now();
    slot->provider = std::move(p);
    slots_.push_back(std::move(slot));
  }
}

std::unique_ptr<Enricher> Enricher::from_config(const EnrichmentConfig& config, Clock* clock,
                                                std::shared_ptr<HttpTransport> transport) {
  std::vector<std::unique_ptr<ReputationProvider>> providers;
  std::map<std::string, double> rates;
  if (config.mode == EnrichmentMode::fixture) {
    auto table = std::make_shared<const FixtureTable>(FixtureTable::load(config.fixture_path));
    for (const auto& name : config.providers) providers.push_back(std::make_unique<FixtureProvider>(name, table));
  } else {
    for (const auto& name : config.providers) {
      auto it = std::find_if(config.live.begin(), config.live.end(),
                             [&](const HttpProviderConfig& h) { return h.name == name; });
      if (it == config.live.end()) throw ConfigError("no live settings for provider '" + name + "'");
      rates[name] = it->rate_per_second;
      providers.push_back(std::make_unique<HttpProvider>(*it, transport));
    }
  }
  auto e = std::make_unique<Enricher>(std::move(providers), config.ttl, clock, rates);
  if (config.cache_path) e->load_cache(*config.cache_path);
  return e;
}

void Enricher::throttle(Slot& s) {
  if (s.rate <= 0) return;
  auto refill = [&] {
    auto now = clock_->now();
    double dt = std::chrono::duration<double>(now - s.refilled).count();
    if (dt > 0) s.tokens = std::min(std::max(1.0, s.rate), s.tokens + dt * s.rate);
    s.refilled = now;
  };
  refill();
  if (s.tokens < 1.0) {
    auto wait = Millis(static_cast<Millis::rep>(std::ceil((1.0 - s.tokens) / s.rate * 1000.0)));
    {
      std::lock_guard lock(mu_);
      ++stats_.throttled;
    }
    clock_->sleep_for(wait);
    refill();
    s.tokens = std::max(s.tokens, 1.0);
  }
  s.tokens -= 1.0;
}

std::vector<VerificationStatus> Enricher::verify(const Indicator& ind) {
  auto key = ind.key();
  std::vector<VerificationStatus> out;
  for (auto& slot : slots_) {
    const auto& name = slot->provider->name();
    std::lock_guard slot_lock(slot->mu);
    if (auto hit = cache_lookup(ind, name)) {
      std::lock_guard lock(mu_);
      ++stats_.cache_hits;
      out.push_back(*hit);
      continue;
    }
    throttle(*slot);
    VerificationStatus st{name, Found::unknown, clock_->now(), ttl_};
    try {
      st.found = slot->provider->lookup(ind) ? Found::yes : Found::no;
    } catch (const Error& e) {
      spdlog::debug("enrichment: {} lookup failed for {}: {}", name, key, e.what());
      st.ttl = std::chrono::seconds(0);
    }
    std::lock_guard lock(mu_);
    ++stats_.lookups;
    if (st.found == Found::unknown) {
      ++stats_.errors;
    } else {
      cache_[{key, name}] = st;
    }
    out.push_back(st);
  }
  return out;
}

Indicator Enricher::enrich(const Indicator& ind) {
  Indicator out = ind;
  for (const auto& st : verify(ind)) out = out.with_verification(st);
  return out;
}

std::optional<VerificationStatus> Enricher::cache_lookup(const Indicator& ind, const std::string& provider) const {
  std::lock_guard lock(mu_);
  auto it = cache_.find({ind.key(), provider});
  if (it == cache_.end()) return std::nullopt;
  if (clock_->now() >= it->second.checked_at + it->second.ttl) return std::nullopt;
  return it->second;
}

std::vector<std::string> Enricher::provider_names() const {
  std::vector<std::string> out;
  for (const auto& s : slots_) out.push_back(s->provider->name());
  return out;
}

EnrichmentStats Enricher::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Enricher::save_cache(const std::filesystem::path& path) const {
  nlohmann::json arr = nlohmann::json::array();
  {
    std::lock_guard lock(mu_);
    for (const auto& [k, st] : cache_) {
      arr.push_back({{"key", k.first},
                     {"provider", k.second},
                     {"found", std::string(found_name(st.found))},
                     {"checked_at", format_rfc3339(st.checked_at)},
                     {"ttl_seconds", st.ttl.count()}});
    }
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    f << arr.dump() << '\n';
    if (!f.flush()) throw StorageError("cannot write enrichment cache " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot replace enrichment cache " + path.string() + ": " + ec.message());
}

std::size_t Enricher::load_cache(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) return 0;
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(f);
    std::size_t n = 0;
    std::lock_guard lock(mu_);
    for (const auto& e : arr) {
      VerificationStatus st{e.at("provider").get<std::string>(), parse_found(e.at("found").get<std::string>()),
                            parse_rfc3339(e.at("checked_at").get<std::string>()),
                            std::chrono::seconds(e.at("ttl_seconds").get<long long>())};
      if (st.found == Found::unknown) continue;
      cache_[{e.at("key").get<std::string>(), st.provider}] = st;
      ++n;
    }
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw StorageError("corrupt enrichment cache " + path.string() + ": " + e.what());
  }
}

IocRollup rollup_indicators(const std::vector<Document>& documents, const std::vector<Indicator>& unique) {
  IocRollup r;
  for (const auto& d : documents) {
    if (!d.relevance() || !d.relevance()->relevant) continue;
    r.total += d.indicators().size();
    r.by_source[std::string(to_string(d.source().kind()))] += d.indicators().size();
  }
  std::set<std::string> keys;
  for (const auto& i : unique) {
    if (!keys.insert(i.key()).second) continue;
    ++r.unique;
    bool found = std::any_of(i.verification().begin(), i.verification().end(),
                             [](const auto& kv) { return kv.second.found == Found::yes; });
    if (found) ++r.verified;
  }
  return r;
}

}  // namespace tstem
