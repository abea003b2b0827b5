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

// Crawl and pipeline metrics: stage timings, relevancy ratios, harvest
// rate and per-spider / per-source breakdowns.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"
#include "tstem/model.hpp"

namespace tstem {

// Pages crawled per relevant page. Undefined (nullopt) when relevant == 0.
std::optional<double> harvest_rate(std::uint64_t total_crawled, std::uint64_t relevant);

// The conventional orientation, relevant / crawled. Undefined when nothing
// was crawled.
std::optional<double> precision_harvest_rate(std::uint64_t total_crawled, std::uint64_t relevant);

struct RelevancyRatio {
  double true_pct = 0;
  double false_pct = 0;

  bool operator==(const RelevancyRatio&) const = default;
};

// Percentages rounded to 0.1; false_pct is 100 - true_pct so the pair sums
// to exactly 100. Undefined when both counts are zero.
std::optional<RelevancyRatio> relevancy_ratio(std::uint64_t true_count, std::uint64_t false_count);

// Share of each key in percent, unrounded. Empty when the counts sum to 0.
std::map<std::string, double> percentages(const std::map<std::string, std::uint64_t>& counts);

// end_to_end runs from the raw record's publish time to the sink ack.
enum class Stage { classify, extract, end_to_end };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

// Running mean over every sample plus p95 over a uniform reservoir.
class TimingStats {
 public:
  static constexpr std::size_t kReservoir = 1024;

  explicit TimingStats(std::uint64_t seed = 0x5eed);

  void add(double ms);
  std::uint64_t count() const { return count_; }
  double mean() const { return count_ ? sum_ / static_cast<double>(count_) : 0.0; }
  // Nearest-rank p95 of the reservoir; exact while count <= kReservoir.
  double p95() const;

 private:
  std::uint64_t count_ = 0;
  double sum_ = 0;
  std::vector<double> reservoir_;
  std::mt19937_64 rng_;
};

struct TimingCell {
  std::uint64_t count = 0;
  double mean_ms = 0;
  double p95_ms = 0;

  bool operator==(const TimingCell&) const = default;
};

struct RelevancyCell {
  std::uint64_t true_count = 0;
  std::uint64_t false_count = 0;
  std::optional<RelevancyRatio> ratio;

  bool operator==(const RelevancyCell&) const = default;
};

struct SpiderCell {
  std::uint64_t crawled = 0;
  std::uint64_t relevant = 0;
  double crawled_pct = 0;   // of all crawled pages
  double relevant_pct = 0;  // of all relevant pages

  bool operator==(const SpiderCell&) const = default;
};

struct IocCell {
  std::uint64_t count = 0;
  double pct = 0;

  bool operator==(const IocCell&) const = default;
};

struct MetricSnapshot {
  Timestamp window_start{};
  Timestamp window_end{};

  std::map<std::string, std::map<std::string, TimingCell>> timings;  // stage -> source -> cell
  std::map<std::string, RelevancyCell> relevancy;                    // source -> cell

  std::uint64_t total_crawled = 0;
  std::uint64_t pages_classified = 0;  // crawled pages that reached the scorer
  std::uint64_t relevant_found = 0;
  std::optional<double> harvest_rate;
  std::optional<double> precision_harvest_rate;
  // Relevant web pages over the two possible denominators, in percent.
  std::optional<double> relevant_of_classified_pct;
  std::optional<double> relevant_of_crawled_pct;

  std::map<std::string, SpiderCell> spiders;
  std::map<std::string, IocCell> iocs;  // source -> occurrences
  std::uint64_t total_iocs = 0;

  std::map<std::string, std::uint64_t> counters;

  bool operator==(const MetricSnapshot&) const = default;
};

// Undefined values serialize as null.
nlohmann::json to_json(const MetricSnapshot& s);
MetricSnapshot metric_snapshot_from_json(const nlohmann::json& j);

// Thread-safe accumulator. Every method takes the same lock, so a snapshot
// is a consistent cut.
class MetricsRegistry {
 public:
  explicit MetricsRegistry(Clock* clock = nullptr);

  // Throws ValidationError for negative or non-finite durations.
  void record_stage_timing(Stage stage, SourceKind source, double elapsed_ms);

  // One fetched web page.
  void record_crawled(Spider spider);
  // A crawled page that reached the scorer.
  void record_classified_page(Spider spider, bool relevant);
  // A scored post or page, for the per-source relevancy ratio.
  void record_verdict(SourceKind source, bool relevant);
  void record_iocs(SourceKind source, std::uint64_t n);

  void increment(const std::string& counter, std::uint64_t n = 1);
  std::uint64_t counter(const std::string& name) const;

  MetricSnapshot snapshot() const;

 private:
  Clock* clock_;
  Timestamp start_;
  mutable std::mutex mu_;
  std::map<std::pair<Stage, SourceKind>, TimingStats> timings_;
  std::map<SourceKind, std::pair<std::uint64_t, std::uint64_t>> verdicts_;
  std::map<Spider, std::pair<std::uint64_t, std::uint64_t>> spiders_;  // crawled, relevant
  std::uint64_t crawled_ = 0;
  std::uint64_t classified_ = 0;
  std::uint64_t relevant_ = 0;
  std::map<SourceKind, std::uint64_t> iocs_;
  std::map<std::string, std::uint64_t> counters_;
};

// Serves GET /metrics with the registry's snapshot as JSON.
class MetricsServer {
 public:
  MetricsServer(const MetricsRegistry& registry, std::string host = "127.0.0.1", int port = 0);
  ~MetricsServer();
  MetricsServer(const MetricsServer&) = delete;
  MetricsServer& operator=(const MetricsServer&) = delete;

  // Binds and starts serving on a background thread; returns the port.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_;
};

}  // namespace tstem
