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

// Stage wiring for the post and web flows.
//
//   posts:  source -> tweet.raw -> [tweet.classify] -> doc.relevant
//   web:    frontier -> fetch -> web.raw -> [web.classify] -> doc.relevant
//   both:   doc.relevant -> [extract] -> enrich -> sink, ioc.extracted
//
// Bracketed names are consumer groups. A record's offset is committed only
// after the sink acknowledged it or it was written to a dead-letter topic.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/bus.hpp"
#include "tstem/classifier.hpp"
#include "tstem/clock.hpp"
#include "tstem/enrichment.hpp"
#include "tstem/fetcher.hpp"
#include "tstem/frontier.hpp"
#include "tstem/metrics.hpp"
#include "tstem/ner.hpp"
#include "tstem/sink.hpp"
#include "tstem/stream_source.hpp"

namespace tstem {

// Replaces ${NAME} with the environment variable's value; "$${" yields a
// literal "${". Throws ConfigError naming the variable when it is unset.
std::string interpolate_env(std::string_view s);
// Applies interpolate_env to every string value, recursively.
nlohmann::json interpolate_env_json(const nlohmann::json& j);

struct ClassifierSettings {
  std::optional<std::filesystem::path> model;
  std::optional<RemoteEndpoint> remote;  // preferred over the model when set
  double threshold = kDefaultRelevanceThreshold;
  ChunkingPolicy chunking;
};

struct NerSettings {
  std::optional<NerEndpoint> remote;
  bool fallback = true;  // use the offline tagger when the endpoint fails
  std::optional<std::filesystem::path> gazetteer;
};

struct MetricsSettings {
  std::optional<std::string> listen;  // "host:port" for GET /metrics
  Millis snapshot_interval{10000};    // metric records written to the sink
};

struct SourceSettings {
  std::optional<ReplayOptions> replay;
  std::optional<HttpStreamConfig> stream;
};

struct StageSettings {
  std::size_t workers = 1;       // per consuming stage
  std::size_t batch = 64;
  bool audit_stubs = true;       // index irrelevant documents without text
  std::size_t crawl_workers = 2;
  std::optional<std::filesystem::path> visited;  // frontier snapshot
  Millis poll_wait{100};
};

struct PipelineConfig {
  BusOptions bus;
  SinkConfig sink;
  ClassifierSettings classifier;
  NerSettings ner;
  std::optional<EnrichmentConfig> enrichment;  // nullopt disables
  MetricsSettings metrics;
  SourceSettings sources;
  std::vector<SpiderProfile> spiders;
  FetchConfig fetch;
  StageSettings stages;
};

// Sections: bus, sink, classifier, ner, enrichment, metrics, sources,
// spiders, fetch, pipeline. Relative paths resolve against base_dir.
// Throws ConfigError, naming the offending section where possible.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
// Reads, interpolates and parses a config file.
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

// Counter names in the metrics registry.
namespace counters {
inline constexpr std::string_view kSourcePublished = "source.published";
inline constexpr std::string_view kSourceSkipped = "source.skipped";
inline constexpr std::string_view kRelevant = "classify.relevant";
inline constexpr std::string_view kIrrelevant = "classify.irrelevant";
inline constexpr std::string_view kDocuments = "sink.documents";
inline constexpr std::string_view kStubs = "sink.stubs";
inline constexpr std::string_view kDroppedIrrelevant = "sink.dropped_irrelevant";
inline constexpr std::string_view kIndicators = "sink.indicators";
inline constexpr std::string_view kDlqClassify = "dlq.classify";
inline constexpr std::string_view kDlqExtract = "dlq.extract";
inline constexpr std::string_view kNerRemote = "ner.remote";
inline constexpr std::string_view kNerFallback = "ner.fallback";
inline constexpr std::string_view kFetchPermanent = "fetch.permanent_errors";
inline constexpr std::string_view kFetchTransient = "fetch.transient_errors";
inline constexpr std::string_view kFetchConfig = "fetch.config_errors";
inline constexpr std::string_view kFetchUnsupported = "fetch.unsupported";
inline constexpr std::string_view kRobotsDisallowed = "robots.disallowed";
inline constexpr std::string_view kPrefilterRejected = "prefilter.rejected";
inline constexpr std::string_view kFrontierAccepted = "frontier.accepted";
inline constexpr std::string_view kFrontierRejected = "frontier.rejected.";  // + reason
}  // namespace counters

enum class Flow { posts, web };
std::string_view to_string(Flow f);

enum class ShutdownResult { drained, forced };
std::string_view to_string(ShutdownResult r);

// Test seams. Null members fall back to the real thing.
struct PipelineDeps {
  std::shared_ptr<HttpTransport> transport;
  Clock* clock = nullptr;
  std::shared_ptr<const BaselineModel> model;  // replaces classifier.model
};

class Pipeline {
 public:
  Pipeline(Flow flow, PipelineConfig config, PipelineDeps deps = {});
  ~Pipeline();  // forced shutdown if still running
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void start();

  // True once the sources finished and every stage has committed all it
  // could see. Waits up to `timeout`.
  bool wait_idle(Millis timeout);
  bool idle() const;

  // Stops the sources, then lets stages drain for up to `grace`. Stages
  // still busy at the deadline stop after their current record and leave
  // the rest uncommitted for the next run.
  ShutdownResult shutdown(Millis grace);

  Flow flow() const { return flow_; }
  MessageBus& bus() { return *bus_; }
  Sink& sink() { return *sink_; }
  MetricsRegistry& metrics() { return metrics_; }
  const Frontier* frontier() const { return frontier_.get(); }
  int metrics_port() const;
  // First error that ended a source early, if any.
  std::optional<std::string> source_error() const;

 private:
  struct Scorer;
  struct NerStage;
  struct StageSpec {
    std::string group;
    std::string topic;
    std::function<void(const TopicRecord&)> handle;
  };

  void stage_loop(const StageSpec& spec, std::stop_token st);
  void classify_post(const TopicRecord& rec);
  void classify_page(const TopicRecord& rec);
  void extract(const TopicRecord& rec);
  void settle_irrelevant(const Document& doc, Timestamp ingested_at);
  void dead_letter(std::string_view dlq, std::string_view counter, const TopicRecord& rec,
                   std::string_view reason);
  void record_latency(SourceKind kind, Timestamp ingested_at);

  void run_post_source(std::stop_token st);
  void crawl_loop(std::stop_token st);
  void crawl_one(const CrawlTask& task);
  bool robots_allow(const CrawlTask& task);
  void snapshot_loop(std::stop_token st);
  void finish_sources();
  void set_source_error(const std::string& what);

  Flow flow_;
  PipelineConfig config_;
  Clock* clock_;
  std::shared_ptr<HttpTransport> transport_;

  std::unique_ptr<LogBus> bus_;
  std::unique_ptr<Sink> sink_;
  MetricsRegistry metrics_;
  std::unique_ptr<MetricsServer> metrics_server_;
  std::unique_ptr<Scorer> scorer_;
  std::unique_ptr<NerStage> ner_;
  std::unique_ptr<Enricher> enricher_;
  std::unique_ptr<Frontier> frontier_;
  std::unique_ptr<Fetcher> fetcher_;
  std::vector<StageSpec> stages_;

  std::mutex crawl_mu_;
  std::size_t in_flight_ = 0;  // guarded by crawl_mu_
  std::mutex robots_mu_;
  std::map<std::string, RobotsRules> robots_;  // origin -> rules

  mutable std::mutex state_mu_;
  std::optional<std::string> source_error_;
  std::atomic<bool> started_{false};
  std::atomic<bool> stopped_{false};
  std::atomic<bool> abort_stages_{false};
  std::atomic<std::size_t> sources_running_{0};

  std::vector<std::jthread> source_threads_;
  std::vector<std::jthread> stage_threads_;
  std::jthread snapshot_thread_;
};

std::unique_ptr<Pipeline> run_post_pipeline(PipelineConfig config, PipelineDeps deps = {});
std::unique_ptr<Pipeline> run_web_pipeline(PipelineConfig config, PipelineDeps deps = {});

}  // namespace tstem
