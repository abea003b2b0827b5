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


// Reputation checks for extracted indicators, with a ttl cache.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"
#include "tstem/model.hpp"

namespace tstem {

class HttpTransport;

// Six calendar months, the default re-check period.
inline constexpr std::chrono::seconds kDefaultVerificationTtl =
    std::chrono::duration_cast<std::chrono::seconds>(std::chrono::months(6));

// One reputation source. lookup answers found / not found and throws
// TransportError (or any tstem::Error) when it cannot tell.
class ReputationProvider {
 public:
  virtual ~ReputationProvider() = default;
  virtual const std::string& name() const = 0;
  virtual bool lookup(const Indicator& ind) = 0;
};

// indicator_key -> {provider -> found}.
class FixtureTable {
 public:
  FixtureTable() = default;
  static FixtureTable parse(std::string_view json);
  static FixtureTable load(const std::filesystem::path& path);

  // Absent indicator or provider reads as not found.
  bool found(const std::string& key, const std::string& provider) const;
  std::size_t size() const { return rows_.size(); }

 private:
  std::unordered_map<std::string, std::map<std::string, bool>> rows_;
};

class FixtureProvider final : public ReputationProvider {
 public:
  FixtureProvider(std::string name, std::shared_ptr<const FixtureTable> table);
  const std::string& name() const override { return name_; }
  bool lookup(const Indicator& ind) override;

 private:
  std::string name_;
  std::shared_ptr<const FixtureTable> table_;
};

struct HttpProviderConfig {
  std::string name;
  std::string base_url;
  std::string api_key_env;  // variable holding the key; empty for none
  std::string api_key_header = "x-apikey";
  Millis timeout{10000};
  double rate_per_second = 4.0;  // 0 = unlimited
};

// Thin client: GET <base_url>/v1/indicators/<kind>/<url-encoded value>.
// 200 means found (optionally {"found": bool} overrides), 404 means not
// found; anything else is an error. The key is read once at construction
// and never logged.
class HttpProvider final : public ReputationProvider {
 public:
  HttpProvider(HttpProviderConfig config, std::shared_ptr<HttpTransport> transport = nullptr);
  const std::string& name() const override { return config_.name; }
  bool lookup(const Indicator& ind) override;

 private:
  HttpProviderConfig config_;
  std::string api_key_;
  std::shared_ptr<HttpTransport> transport_;
};

enum class EnrichmentMode { live, fixture };
std::string_view to_string(EnrichmentMode m);
EnrichmentMode parse_enrichment_mode(std::string_view s);

struct EnrichmentConfig {
  EnrichmentMode mode = EnrichmentMode::fixture;
  std::vector<std::string> providers{"virustotal", "alienvault"};
  std::filesystem::path fixture_path;
  std::vector<HttpProviderConfig> live;  // one per provider in live mode
  std::chrono::seconds ttl = kDefaultVerificationTtl;
  std::optional<std::filesystem::path> cache_path;  // persisted between runs when set
};

EnrichmentConfig enrichment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});

struct EnrichmentStats {
  std::uint64_t lookups = 0;  // provider calls made
  std::uint64_t cache_hits = 0;
  std::uint64_t errors = 0;   // provider calls that ended as unknown
  std::uint64_t throttled = 0;
};

// Thread-safe. Each provider is called at most once per indicator key
// within the ttl; failures are reported as unknown and not cached.
class Enricher {
 public:
  Enricher(std::vector<std::unique_ptr<ReputationProvider>> providers,
           std::chrono::seconds ttl = kDefaultVerificationTtl, Clock* clock = nullptr,
           std::map<std::string, double> rate_per_second = {});

  static std::unique_ptr<Enricher> from_config(const EnrichmentConfig& config, Clock* clock = nullptr,
                                               std::shared_ptr<HttpTransport> transport = nullptr);

  // One status per provider, in provider order.
  std::vector<VerificationStatus> verify(const Indicator& ind);

  // The indicator with every provider's status attached.
  Indicator enrich(const Indicator& ind);

  // Hit iff checked within the ttl.
  std::optional<VerificationStatus> cache_lookup(const Indicator& ind, const std::string& provider) const;

  std::vector<std::string> provider_names() const;
  EnrichmentStats stats() const;

  void save_cache(const std::filesystem::path& path) const;
  std::size_t load_cache(const std::filesystem::path& path);

 private:
  struct Slot {
    std::unique_ptr<ReputationProvider> provider;
    double rate = 0;
    double tokens = 0;
    Timestamp refilled{};
    std::mutex mu;  // serializes calls to this provider
  };

  void throttle(Slot& s);  // requires s.mu

  std::vector<std::unique_ptr<Slot>> slots_;
  std::chrono::seconds ttl_;
  Clock* clock_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, VerificationStatus> cache_;  // (key, provider)
  EnrichmentStats stats_;
};

// Roll-up over indicators read back from the sink.
struct IocRollup {
  std::uint64_t total = 0;     // occurrences across documents
  std::uint64_t unique = 0;    // distinct keys
  std::uint64_t verified = 0;  // distinct keys found by at least one provider
  std::map<std::string, std::uint64_t> by_source;  // occurrences per document source kind; sums to total
};

IocRollup rollup_indicators(const std::vector<Document>& documents, const std::vector<Indicator>& unique);

}  // namespace tstem
