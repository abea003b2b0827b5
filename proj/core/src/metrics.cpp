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

#include "tstem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "tstem/error.hpp"

namespace tstem {

namespace {

double round1(double x) { return std::round(x * 10.0) / 10.0; }

Timestamp to_ms(Timestamp t) { return std::chrono::time_point_cast<Millis>(t); }

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::optional<double> harvest_rate(std::uint64_t total_crawled, std::uint64_t relevant) {
  if (relevant == 0) return std::nullopt;
  return static_cast<double>(total_crawled) / static_cast<double>(relevant);
}

std::optional<double> precision_harvest_rate(std::uint64_t total_crawled, std::uint64_t relevant) {
  if (total_crawled == 0) return std::nullopt;
  return static_cast<double>(relevant) / static_cast<double>(total_crawled);
}

std::optional<RelevancyRatio> relevancy_ratio(std::uint64_t true_count, std::uint64_t false_count) {
  auto total = true_count + false_count;
  if (total == 0) return std::nullopt;
  double t = round1(100.0 * static_cast<double>(true_count) / static_cast<double>(total));
  return RelevancyRatio{t, round1(100.0 - t)};
}

std::map<std::string, double> percentages(const std::map<std::string, std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (const auto& [k, v] : counts) total += v;
  std::map<std::string, double> out;
  if (total == 0) return out;
  for (const auto& [k, v] : counts) out[k] = 100.0 * static_cast<double>(v) / static_cast<double>(total);
  return out;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::classify: return "classify";
    case Stage::extract: return "extract";
    case Stage::end_to_end: return "end_to_end";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  if (s == "classify") return Stage::classify;
  if (s == "extract") return Stage::extract;
  if (s == "end_to_end") return Stage::end_to_end;
  throw ValidationError("unknown stage '" + std::string(s) + "'");
}

TimingStats::TimingStats(std::uint64_t seed) : rng_(seed) { reservoir_.reserve(kReservoir); }

void TimingStats::add(double ms) {
  ++count_;
  sum_ += ms;
  if (reservoir_.size() < kReservoir) {
    reservoir_.push_back(ms);
    return;
  }
  std::uniform_int_distribution<std::uint64_t> pick(0, count_ - 1);
  if (auto j = pick(rng_); j < kReservoir) reservoir_[j] = ms;
}

double TimingStats::p95() const {
  if (reservoir_.empty()) return 0.0;
  auto v = reservoir_;
  auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
  auto nth = v.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(rank, 1) - 1);
  std::nth_element(v.begin(), nth, v.end());
  return *nth;
}

nlohmann::json to_json(const MetricSnapshot& s) {
  nlohmann::json j;
  j["window_start"] = format_rfc3339(s.window_start);
  j["window_end"] = format_rfc3339(s.window_end);
  auto& timings = j["timings"] = nlohmann::json::object();
  for (const auto& [stage, by_source] : s.timings) {
    for (const auto& [source, c] : by_source) {
      timings[stage][source] = {{"count", c.count}, {"mean_ms", c.mean_ms}, {"p95_ms", c.p95_ms}};
    }
  }
  auto& rel = j["relevancy"] = nlohmann::json::object();
  for (const auto& [source, c] : s.relevancy) {
    rel[source] = {{"true", c.true_count},
                   {"false", c.false_count},
                   {"true_pct", c.ratio ? nlohmann::json(c.ratio->true_pct) : nlohmann::json(nullptr)},
                   {"false_pct", c.ratio ? nlohmann::json(c.ratio->false_pct) : nlohmann::json(nullptr)}};
  }
  j["crawl"] = {{"total_crawled", s.total_crawled},
                {"pages_classified", s.pages_classified},
                {"relevant_found", s.relevant_found},
                {"harvest_rate", opt(s.harvest_rate)},
                {"precision_harvest_rate", opt(s.precision_harvest_rate)},
                {"relevant_of_classified_pct", opt(s.relevant_of_classified_pct)},
                {"relevant_of_crawled_pct", opt(s.relevant_of_crawled_pct)}};
  auto& spiders = j["spiders"] = nlohmann::json::object();
  for (const auto& [name, c] : s.spiders) {
    spiders[name] = {{"crawled", c.crawled},
                     {"relevant", c.relevant},
                     {"crawled_pct", c.crawled_pct},
                     {"relevant_pct", c.relevant_pct}};
  }
  auto& by_source = j["iocs"]["by_source"] = nlohmann::json::object();
  j["iocs"]["total"] = s.total_iocs;
  for (const auto& [source, c] : s.iocs) by_source[source] = {{"count", c.count}, {"pct", c.pct}};
  j["counters"] = s.counters;
  return j;
}

MetricSnapshot metric_snapshot_from_json(const nlohmann::json& j) {
  MetricSnapshot s;
  try {
    s.window_start = parse_rfc3339(j.at("window_start").get<std::string>());
    s.window_end = parse_rfc3339(j.at("window_end").get<std::string>());
    for (const auto& [stage, by_source] : j.at("timings").items()) {
      for (const auto& [source, c] : by_source.items()) {
        s.timings[stage][source] = {c.at("count").get<std::uint64_t>(), c.at("mean_ms").get<double>(),
                                    c.at("p95_ms").get<double>()};
      }
    }
    for (const auto& [source, c] : j.at("relevancy").items()) {
      RelevancyCell cell{c.at("true").get<std::uint64_t>(), c.at("false").get<std::uint64_t>(), std::nullopt};
      if (!c.at("true_pct").is_null()) {
        cell.ratio = RelevancyRatio{c["true_pct"].get<double>(), c.at("false_pct").get<double>()};
      }
      s.relevancy[source] = cell;
    }
    const auto& crawl = j.at("crawl");
    s.total_crawled = crawl.at("total_crawled").get<std::uint64_t>();
    s.pages_classified = crawl.at("pages_classified").get<std::uint64_t>();
    s.relevant_found = crawl.at("relevant_found").get<std::uint64_t>();
    s.harvest_rate = opt_from(crawl, "harvest_rate");
    s.precision_harvest_rate = opt_from(crawl, "precision_harvest_rate");
    s.relevant_of_classified_pct = opt_from(crawl, "relevant_of_classified_pct");
    s.relevant_of_crawled_pct = opt_from(crawl, "relevant_of_crawled_pct");
    for (const auto& [name, c] : j.at("spiders").items()) {
      s.spiders[name] = {c.at("crawled").get<std::uint64_t>(), c.at("relevant").get<std::uint64_t>(),
                         c.at("crawled_pct").get<double>(), c.at("relevant_pct").get<double>()};
    }
    s.total_iocs = j.at("iocs").at("total").get<std::uint64_t>();
    for (const auto& [source, c] : j.at("iocs").at("by_source").items()) {
      s.iocs[source] = {c.at("count").get<std::uint64_t>(), c.at("pct").get<double>()};
    }
    s.counters = j.at("counters").get<std::map<std::string, std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed metric snapshot: ") + e.what());
  }
  return s;
}

MetricsRegistry::MetricsRegistry(Clock* clock)
    : clock_(clock ? clock : &SystemClock::instance()), start_(to_ms(clock_->now())) {}

void MetricsRegistry::record_stage_timing(Stage stage, SourceKind source, double elapsed_ms) {
  if (!std::isfinite(elapsed_ms) || elapsed_ms < 0) {
    throw ValidationError("stage timing must be a non-negative duration");
  }
  std::lock_guard lock(mu_);
  timings_.try_emplace({stage, source}).first->second.add(elapsed_ms);
}

void MetricsRegistry::record_crawled(Spider spider) {
  std::lock_guard lock(mu_);
  ++crawled_;
  ++spiders_[spider].first;
}

void MetricsRegistry::record_classified_page(Spider spider, bool relevant) {
  std::lock_guard lock(mu_);
  ++classified_;
  if (relevant) {
    ++relevant_;
    ++spiders_[spider].second;
  }
}

void MetricsRegistry::record_verdict(SourceKind source, bool relevant) {
  std::lock_guard lock(mu_);
  auto& v = verdicts_[source];
  ++(relevant ? v.first : v.second);
}

void MetricsRegistry::record_iocs(SourceKind source, std::uint64_t n) {
  std::lock_guard lock(mu_);
  iocs_[source] += n;
}

void MetricsRegistry::increment(const std::string& counter, std::uint64_t n) {
  std::lock_guard lock(mu_);
  counters_[counter] += n;
}

std::uint64_t MetricsRegistry::counter(const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = counters_.find(name);
  return it == counters_.end() ? 0 : it->second;
}

MetricSnapshot MetricsRegistry::snapshot() const {
  std::lock_guard lock(mu_);
  MetricSnapshot s;
  s.window_start = start_;
  s.window_end = to_ms(clock_->now());
  for (const auto& [k, t] : timings_) {
    if (t.count() == 0) continue;
    s.timings[std::string(to_string(k.first))][std::string(to_string(k.second))] =
        TimingCell{t.count(), t.mean(), t.p95()};
  }
  for (const auto& [source, v] : verdicts_) {
    s.relevancy[std::string(to_string(source))] = {v.first, v.second, relevancy_ratio(v.first, v.second)};
  }
  s.total_crawled = crawled_;
  s.pages_classified = classified_;
  s.relevant_found = relevant_;
  s.harvest_rate = harvest_rate(crawled_, relevant_);
  s.precision_harvest_rate = precision_harvest_rate(crawled_, relevant_);
  if (classified_) s.relevant_of_classified_pct = 100.0 * static_cast<double>(relevant_) / static_cast<double>(classified_);
  if (crawled_) s.relevant_of_crawled_pct = 100.0 * static_cast<double>(relevant_) / static_cast<double>(crawled_);

  std::map<std::string, std::uint64_t> crawled, relevant, iocs;
  for (const auto& [spider, v] : spiders_) {
    crawled[std::string(to_string(spider))] = v.first;
    relevant[std::string(to_string(spider))] = v.second;
  }
  auto crawled_pct = percentages(crawled);
  auto relevant_pct = percentages(relevant);
  for (const auto& [name, n] : crawled) {
    s.spiders[name] = {n, relevant[name], crawled_pct[name], relevant_pct[name]};
  }
  for (const auto& [source, n] : iocs_) {
    iocs[std::string(to_string(source))] = n;
    s.total_iocs += n;
  }
  auto ioc_pct = percentages(iocs);
  for (const auto& [name, n] : iocs) s.iocs[name] = {n, ioc_pct[name]};
  s.counters = counters_;
  return s;
}

struct MetricsServer::Impl {
  httplib::Server server;
  std::thread thread;
};

MetricsServer::MetricsServer(const MetricsRegistry& registry, std::string host, int port)
    : impl_(std::make_unique<Impl>()), host_(std::move(host)), port_(port) {
  impl_->server.Get("/metrics", [&registry](const httplib::Request&, httplib::Response& res) {
    res.set_content(to_json(registry.snapshot()).dump(), "application/json");
  });
}

MetricsServer::~MetricsServer() { stop(); }

int MetricsServer::start() {
  if (impl_->thread.joinable()) return port_;
  if (port_ == 0) {
    port_ = impl_->server.bind_to_any_port(host_);
  } else if (!impl_->server.bind_to_port(host_, port_)) {
    port_ = -1;
  }
  if (port_ <= 0) throw ConfigError("metrics server cannot bind " + host_);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void MetricsServer::stop() {
  if (impl_ && impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

}  // namespace tstem
