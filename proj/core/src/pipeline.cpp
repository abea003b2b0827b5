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

#include "tstem/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "tstem/error.hpp"
#include "tstem/extractor.hpp"
#include "tstem/html.hpp"
#include "tstem/http.hpp"
#include "tstem/uri.hpp"

namespace tstem {

// ---------------------------------------------------------------- config

std::string interpolate_env(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 3, "$${") == 0) {
      out += "${";
      i += 3;
      continue;
    }
    if (s.compare(i, 2, "${") != 0) {
      out += s[i++];
      continue;
    }
    auto close = s.find('}', i + 2);
    if (close == std::string_view::npos) throw ConfigError("unterminated '${' in config value");
    auto name = s.substr(i + 2, close - i - 2);
    bool valid = !name.empty() && !std::isdigit(static_cast<unsigned char>(name[0])) &&
                 std::all_of(name.begin(), name.end(), [](char c) {
                   return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
                 });
    if (!valid) throw ConfigError("bad variable name '${" + std::string(name) + "}' in config value");
    const char* v = std::getenv(std::string(name).c_str());
    if (!v) throw ConfigError("config references unset environment variable " + std::string(name));
    out += v;
    i = close + 1;
  }
  return out;
}

nlohmann::json interpolate_env_json(const nlohmann::json& j) {
  if (j.is_string()) return interpolate_env(j.get_ref<const std::string&>());
  if (j.is_array()) {
    auto out = nlohmann::json::array();
    for (const auto& e : j) out.push_back(interpolate_env_json(e));
    return out;
  }
  if (j.is_object()) {
    auto out = nlohmann::json::object();
    for (const auto& [k, v] : j.items()) out[k] = interpolate_env_json(v);
    return out;
  }
  return j;
}

namespace {

template <typename Fn>
void section(const nlohmann::json& j, const char* name, Fn&& fn) {
  if (!j.contains(name) || j[name].is_null()) return;
  try {
    fn(j[name]);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
}

Millis millis(const nlohmann::json& j, const char* key, Millis dflt) {
  return j.contains(key) ? Millis(j[key].get<long long>()) : dflt;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  static const std::set<std::string> kSections = {"bus",     "sink",    "classifier", "ner",   "enrichment",
                                                  "metrics", "sources", "spiders",    "fetch", "pipeline"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kSections.count(k)) throw ConfigError("unknown config section '" + k + "'");
  }
  if (!j.contains("bus")) throw ConfigError("config needs a 'bus' section");
  if (!j.contains("sink")) throw ConfigError("config needs a 'sink' section");
  auto resolve = [&](std::filesystem::path p) {
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p;
  };

  PipelineConfig c;
  section(j, "bus", [&](const nlohmann::json& s) {
    c.bus.dir = resolve(s.at("dir").get<std::string>());
    if (s.contains("durability")) {
      auto d = s["durability"].get<std::string>();
      if (d == "sync") {
        c.bus.durability = Durability::sync;
      } else if (d == "buffered") {
        c.bus.durability = Durability::buffered;
      } else {
        throw ConfigError("durability must be 'sync' or 'buffered'");
      }
    }
    if (s.contains("max_backlog")) c.bus.max_backlog = s["max_backlog"].get<std::uint64_t>();
    if (s.contains("max_record_bytes")) c.bus.max_record_bytes = s["max_record_bytes"].get<std::size_t>();
  });
  section(j, "sink", [&](const nlohmann::json& s) {
    c.sink = sink_config_from_json(s);
    c.sink.archive_dir = resolve(c.sink.archive_dir);
  });
  section(j, "classifier", [&](const nlohmann::json& s) {
    if (s.contains("model")) c.classifier.model = resolve(s["model"].get<std::string>());
    if (s.contains("remote")) {
      const auto& r = s["remote"];
      RemoteEndpoint ep;
      ep.base_url = r.at("url").get<std::string>();
      ep.timeout = millis(r, "timeout_ms", ep.timeout);
      if (r.contains("max_in_flight")) ep.max_in_flight = r["max_in_flight"].get<std::size_t>();
      c.classifier.remote = ep;
    }
    if (s.contains("threshold")) c.classifier.threshold = s["threshold"].get<double>();
    if (s.contains("window")) c.classifier.chunking.window = s["window"].get<std::size_t>();
    if (s.contains("stride")) c.classifier.chunking.stride = s["stride"].get<std::size_t>();
    if (s.contains("aggregation")) {
      c.classifier.chunking.aggregation = parse_aggregation(s["aggregation"].get<std::string>());
    }
    c.classifier.chunking.validate();
    if (!(c.classifier.threshold >= 0 && c.classifier.threshold <= 1)) {
      throw ConfigError("threshold must be within [0, 1]");
    }
  });
  section(j, "ner", [&](const nlohmann::json& s) {
    if (s.contains("remote")) {
      const auto& r = s["remote"];
      NerEndpoint ep;
      ep.base_url = r.at("url").get<std::string>();
      ep.timeout = millis(r, "timeout_ms", ep.timeout);
      if (r.contains("max_in_flight")) ep.max_in_flight = r["max_in_flight"].get<std::size_t>();
      c.ner.remote = ep;
    }
    if (s.contains("fallback")) c.ner.fallback = s["fallback"].get<bool>();
    if (s.contains("gazetteer")) c.ner.gazetteer = resolve(s["gazetteer"].get<std::string>());
  });
  section(j, "enrichment", [&](const nlohmann::json& s) {
    if (s.contains("enabled") && !s["enabled"].get<bool>()) return;
    auto copy = s;
    copy.erase("enabled");
    c.enrichment = enrichment_config_from_json(copy, base_dir);
  });
  section(j, "metrics", [&](const nlohmann::json& s) {
    if (s.contains("listen")) c.metrics.listen = s["listen"].get<std::string>();
    c.metrics.snapshot_interval = millis(s, "snapshot_interval_ms", c.metrics.snapshot_interval);
    if (c.metrics.snapshot_interval.count() <= 0) throw ConfigError("snapshot_interval_ms must be positive");
  });
  section(j, "sources", [&](const nlohmann::json& s) {
    if (s.contains("fixture")) {
      ReplayOptions r;
      r.path = resolve(s["fixture"].get<std::string>());
      if (s.contains("rate")) r.rate = s["rate"].get<double>();
      if (s.contains("loop")) r.loop = s["loop"].get<bool>();
      if (s.contains("max_records")) r.max_records = s["max_records"].get<std::uint64_t>();
      if (r.rate < 0) throw ConfigError("rate must be >= 0");
      c.sources.replay = r;
    }
    if (s.contains("stream")) {
      const auto& t = s["stream"];
      HttpStreamConfig h;
      h.url = t.at("url").get<std::string>();
      if (t.contains("token_env")) h.token_env = t["token_env"].get<std::string>();
      h.backoff = millis(t, "backoff_ms", h.backoff);
      h.max_backoff = millis(t, "max_backoff_ms", h.max_backoff);
      if (t.contains("max_reconnects")) h.max_reconnects = t["max_reconnects"].get<std::size_t>();
      if (t.contains("max_records")) h.max_records = t["max_records"].get<std::uint64_t>();
      c.sources.stream = h;
    }
  });
  section(j, "spiders", [&](const nlohmann::json& s) {
    if (!s.is_array()) throw ConfigError("must be an array of spider names or profiles");
    for (const auto& e : s) {
      c.spiders.push_back(e.is_string() ? spider_preset(parse_spider(e.get<std::string>()))
                                        : profile_from_json(e, base_dir));
    }
  });
  section(j, "fetch", [&](const nlohmann::json& s) { c.fetch = fetch_config_from_json(s); });
  section(j, "pipeline", [&](const nlohmann::json& s) {
    if (s.contains("workers")) c.stages.workers = s["workers"].get<std::size_t>();
    if (s.contains("batch")) c.stages.batch = s["batch"].get<std::size_t>();
    if (s.contains("audit_stubs")) c.stages.audit_stubs = s["audit_stubs"].get<bool>();
    if (s.contains("crawl_workers")) c.stages.crawl_workers = s["crawl_workers"].get<std::size_t>();
    if (s.contains("visited")) c.stages.visited = resolve(s["visited"].get<std::string>());
    c.stages.poll_wait = millis(s, "poll_wait_ms", c.stages.poll_wait);
    if (c.stages.workers == 0 || c.stages.batch == 0 || c.stages.crawl_workers == 0) {
      throw ConfigError("workers, batch and crawl_workers must be positive");
    }
  });
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw ConfigError("cannot open config " + file.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not JSON: " + e.what());
  }
  return pipeline_config_from_json(interpolate_env_json(j), file.parent_path());
}

std::string_view to_string(Flow f) { return f == Flow::posts ? "posts" : "web"; }
std::string_view to_string(ShutdownResult r) { return r == ShutdownResult::drained ? "drained" : "forced"; }

// ---------------------------------------------------------------- stages

struct Pipeline::Scorer {
  std::shared_ptr<const BaselineModel> model;
  std::unique_ptr<RemoteScorer> remote;
  double threshold = kDefaultRelevanceThreshold;
  ChunkingPolicy chunking;

  RelevanceVerdict sentence(std::string_view text) const {
    return remote ? remote->score(text, Granularity::sentence) : score_sentence(*model, text, threshold);
  }
  RelevanceVerdict page(std::string_view text) const {
    return remote ? remote->score(text, Granularity::page) : score_page(*model, text, chunking, threshold);
  }
};

struct Pipeline::NerStage {
  std::unique_ptr<NerClient> remote;
  bool fallback = true;
  Gazetteer gazetteer;
};

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string key(std::string_view k) { return std::string(k); }

}  // namespace

Pipeline::Pipeline(Flow flow, PipelineConfig config, PipelineDeps deps)
    : flow_(flow),
      config_(std::move(config)),
      clock_(deps.clock ? deps.clock : &SystemClock::instance()),
      transport_(deps.transport ? deps.transport : default_transport()),
      metrics_(clock_) {
  scorer_ = std::make_unique<Scorer>();
  scorer_->threshold = config_.classifier.threshold;
  scorer_->chunking = config_.classifier.chunking;
  if (config_.classifier.remote) {
    scorer_->remote = std::make_unique<RemoteScorer>(*config_.classifier.remote, transport_, scorer_->threshold);
  } else if (deps.model) {
    scorer_->model = deps.model;
  } else if (config_.classifier.model) {
    scorer_->model = std::make_shared<const BaselineModel>(BaselineModel::load(*config_.classifier.model));
  } else {
    throw ConfigError("classifier: set 'model' or 'remote'");
  }
  if (scorer_->model && !scorer_->model->trained()) throw ConfigError("classifier: model is not trained");

  ner_ = std::make_unique<NerStage>();
  ner_->fallback = config_.ner.fallback;
  if (config_.ner.remote) ner_->remote = std::make_unique<NerClient>(*config_.ner.remote, transport_);
  if (config_.ner.gazetteer) ner_->gazetteer = Gazetteer::load(*config_.ner.gazetteer);

  if (config_.enrichment) enricher_ = Enricher::from_config(*config_.enrichment, clock_, transport_);

  if (flow_ == Flow::web) {
    if (config_.spiders.empty()) throw ConfigError("spiders: the web flow needs at least one spider");
    frontier_ = std::make_unique<Frontier>(config_.spiders);
    fetcher_ = std::make_unique<Fetcher>(config_.fetch, transport_, clock_);
    stages_.push_back({"web.classify", key(topics::kWebRaw), [this](const TopicRecord& r) { classify_page(r); }});
  } else {
    if (config_.sources.stream && !config_.sources.replay && !config_.sources.stream->token_env.empty() &&
        !std::getenv(config_.sources.stream->token_env.c_str())) {
      throw ConfigError("sources: environment variable " + config_.sources.stream->token_env + " is not set");
    }
    stages_.push_back({"tweet.classify", key(topics::kTweetRaw), [this](const TopicRecord& r) { classify_post(r); }});
  }
  stages_.push_back({"extract", key(topics::kDocRelevant), [this](const TopicRecord& r) { extract(r); }});

  bus_ = std::make_unique<LogBus>(config_.bus, clock_);
  sink_ = std::make_unique<Sink>(config_.sink, transport_, clock_);
}

Pipeline::~Pipeline() {
  if (started_ && !stopped_) shutdown(Millis(0));
}

void Pipeline::start() {
  if (started_.exchange(true)) throw StateError("pipeline already started");
  for (const auto& s : stages_) bus_->subscribe(s.group, s.topic);

  if (config_.metrics.listen) {
    auto colon = config_.metrics.listen->rfind(':');
    if (colon == std::string::npos) throw ConfigError("metrics: listen must be host:port");
    int port = 0;
    try {
      port = std::stoi(config_.metrics.listen->substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("metrics: bad port in '" + *config_.metrics.listen + "'");
    }
    metrics_server_ = std::make_unique<MetricsServer>(metrics_, config_.metrics.listen->substr(0, colon), port);
    metrics_server_->start();
  }

  for (const auto& s : stages_) {
    stage_threads_.emplace_back([this, &s](std::stop_token st) { stage_loop(s, st); });
  }
  snapshot_thread_ = std::jthread([this](std::stop_token st) { snapshot_loop(st); });

  if (flow_ == Flow::web) {
    if (config_.stages.visited) frontier_->load_visited(*config_.stages.visited);
    frontier_->seed(clock_->now());
    sources_running_ = config_.stages.crawl_workers;
    for (std::size_t i = 0; i < config_.stages.crawl_workers; ++i) {
      source_threads_.emplace_back([this](std::stop_token st) { crawl_loop(st); });
    }
  } else {
    sources_running_ = 1;
    source_threads_.emplace_back([this](std::stop_token st) { run_post_source(st); });
  }
}

bool Pipeline::idle() const {
  if (!started_ || sources_running_ > 0) return false;
  for (const auto& s : stages_) {
    auto h = bus_->head(s.topic);
    if (h && bus_->position(s.group) <= *h) return false;
  }
  return true;
}

bool Pipeline::wait_idle(Millis timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!idle()) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(Millis(5));
  }
  return true;
}

ShutdownResult Pipeline::shutdown(Millis grace) {
  if (!started_ || stopped_.exchange(true)) return ShutdownResult::drained;
  for (auto& t : source_threads_) t.request_stop();
  bool drained = wait_idle(grace);
  if (!drained) abort_stages_ = true;
  for (auto& t : stage_threads_) t.request_stop();
  stage_threads_.clear();
  if (!drained) bus_->close();
  source_threads_.clear();
  snapshot_thread_ = std::jthread();

  try {
    sink_->index_metrics(to_json(metrics_.snapshot()));
  } catch (const Error& e) {
    spdlog::warn("pipeline: final metric snapshot not written: {}", e.what());
  }
  if (frontier_ && config_.stages.visited) {
    try {
      frontier_->save_visited(*config_.stages.visited);
    } catch (const Error& e) {
      spdlog::warn("pipeline: visited snapshot not written: {}", e.what());
    }
  }
  if (config_.sink.remote_url) {
    try {
      sink_->flush_remote();
    } catch (const Error& e) {
      spdlog::warn("pipeline: remote flush incomplete: {}", e.what());
    }
  }
  if (metrics_server_) metrics_server_->stop();
  if (drained) {
    try {
      bus_->close();
    } catch (const Error&) {
    }
  }
  spdlog::info("pipeline: {} shutdown {}", to_string(flow_), to_string(drained ? ShutdownResult::drained : ShutdownResult::forced));
  return drained ? ShutdownResult::drained : ShutdownResult::forced;
}

int Pipeline::metrics_port() const { return metrics_server_ ? metrics_server_->port() : 0; }

std::optional<std::string> Pipeline::source_error() const {
  std::lock_guard lock(state_mu_);
  return source_error_;
}

void Pipeline::set_source_error(const std::string& what) {
  spdlog::error("pipeline: source failed: {}", what);
  std::lock_guard lock(state_mu_);
  if (!source_error_) source_error_ = what;
}

void Pipeline::finish_sources() { --sources_running_; }

void Pipeline::stage_loop(const StageSpec& spec, std::stop_token st) {
  std::unique_ptr<Consumer> consumer;
  try {
    consumer = bus_->consumer(spec.group, spec.topic);
  } catch (const Error& e) {
    spdlog::error("pipeline: stage {} cannot start: {}", spec.group, e.what());
    return;
  }
  while (!st.stop_requested() && !abort_stages_) {
    std::vector<TopicRecord> batch;
    try {
      batch = consumer->poll(config_.stages.batch, config_.stages.poll_wait);
    } catch (const StateError&) {
      break;
    }
    if (batch.empty()) continue;

    std::vector<char> done(batch.size(), 0);
    auto run = [&](std::size_t i) {
      if (abort_stages_) return;
      try {
        spec.handle(batch[i]);
        done[i] = 1;
      } catch (const std::exception& e) {
        spdlog::warn("pipeline: stage {} left offset {} uncommitted: {}", spec.group, batch[i].offset, e.what());
      }
    };
    std::size_t workers = std::min(config_.stages.workers, batch.size());
    if (workers <= 1) {
      for (std::size_t i = 0; i < batch.size() && !abort_stages_; ++i) run(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i; (i = next++) < batch.size();) run(i);
        });
      }
    }
    std::size_t prefix = 0;
    while (prefix < batch.size() && done[prefix]) ++prefix;
    if (prefix == 0) continue;
    try {
      consumer->commit(batch[prefix - 1].offset);
    } catch (const StateError&) {
      break;
    }
  }
}

void Pipeline::dead_letter(std::string_view dlq, std::string_view counter, const TopicRecord& rec,
                           std::string_view reason) {
  nlohmann::json j = {{"stage", dlq},
                      {"reason", reason},
                      {"topic", rec.topic},
                      {"offset", rec.offset},
                      {"payload", rec.payload}};
  bus_->publish(dlq, canonical_dump(j));
  metrics_.increment(key(counter));
  spdlog::warn("pipeline: {}@{} dead-lettered to {}: {}", rec.topic, rec.offset, dlq, reason);
}

void Pipeline::record_latency(SourceKind kind, Timestamp ingested_at) {
  auto ms = std::chrono::duration<double, std::milli>(clock_->now() - ingested_at).count();
  metrics_.record_stage_timing(Stage::end_to_end, kind, std::max(0.0, ms));
}

void Pipeline::settle_irrelevant(const Document& doc, Timestamp ingested_at) {
  metrics_.increment(key(counters::kIrrelevant));
  if (!config_.stages.audit_stubs) {
    metrics_.increment(key(counters::kDroppedIrrelevant));
    return;
  }
  sink_->index(doc.without_text());
  metrics_.increment(key(counters::kStubs));
  record_latency(doc.source().kind(), ingested_at);
}

void Pipeline::classify_post(const TopicRecord& rec) {
  std::optional<Document> doc;
  try {
    auto post = parse_post_line(rec.payload);
    auto t0 = std::chrono::steady_clock::now();
    auto sentences = split_sentences(post.text);
    double best = 0;
    std::string model_id;
    if (sentences.empty()) sentences.push_back({post.text, 0});
    for (const auto& s : sentences) {
      auto v = scorer_->sentence(s.text);
      if (model_id.empty() || v.score > best) {
        best = v.score;
        model_id = v.model_id;
      }
    }
    auto verdict = make_verdict(best, scorer_->threshold, Granularity::sentence, model_id);
    metrics_.record_stage_timing(Stage::classify, SourceKind::twitter, elapsed_ms(t0));
    metrics_.record_verdict(SourceKind::twitter, verdict.relevant);
    doc = post_document(post, post.created_at).with_relevance(verdict);
  } catch (const StateError&) {
    throw;
  } catch (const std::exception& e) {
    dead_letter(topics::kDlqClassify, counters::kDlqClassify, rec, e.what());
    return;
  }
  try {
    if (doc->relevance()->relevant) {
      metrics_.increment(key(counters::kRelevant));
      bus_->publish(topics::kDocRelevant,
                    canonical_dump({{"document", to_json(*doc)}, {"ingested_at", format_rfc3339(rec.produced_at)}}));
    } else {
      settle_irrelevant(*doc, rec.produced_at);
    }
  } catch (const StateError&) {
    throw;
  } catch (const std::exception& e) {
    dead_letter(topics::kDlqClassify, counters::kDlqClassify, rec, e.what());
  }
}

void Pipeline::classify_page(const TopicRecord& rec) {
  std::optional<Document> doc;
  Spider spider = Spider::ache;
  try {
    auto j = nlohmann::json::parse(rec.payload);
    spider = parse_spider(j.at("spider").get<std::string>());
    auto source = Source::web(parse_source_kind(j.at("source").get<std::string>()), spider);
    const auto& text = j.at("text").get_ref<const std::string&>();
    auto t0 = std::chrono::steady_clock::now();
    auto verdict = scorer_->page(text);
    metrics_.record_stage_timing(Stage::classify, source.kind(), elapsed_ms(t0));
    metrics_.record_classified_page(spider, verdict.relevant);
    metrics_.record_verdict(source.kind(), verdict.relevant);
    doc = Document::create(source, j.at("url").get<std::string>(), text,
                           parse_rfc3339(j.at("fetched_at").get<std::string>()))
              .with_relevance(verdict);
  } catch (const StateError&) {
    throw;
  } catch (const std::exception& e) {
    dead_letter(topics::kDlqClassify, counters::kDlqClassify, rec, e.what());
    return;
  }
  try {
    if (doc->relevance()->relevant) {
      metrics_.increment(key(counters::kRelevant));
      bus_->publish(topics::kDocRelevant,
                    canonical_dump({{"document", to_json(*doc)}, {"ingested_at", format_rfc3339(rec.produced_at)}}));
    } else {
      settle_irrelevant(*doc, rec.produced_at);
    }
  } catch (const StateError&) {
    throw;
  } catch (const std::exception& e) {
    dead_letter(topics::kDlqClassify, counters::kDlqClassify, rec, e.what());
  }
}

void Pipeline::extract(const TopicRecord& rec) {
  try {
    auto j = nlohmann::json::parse(rec.payload);
    auto doc = document_from_json(j.at("document"));
    auto ingested_at = parse_rfc3339(j.at("ingested_at").get<std::string>());
    if (!doc.relevance() || !doc.relevance()->relevant) {
      throw ValidationError("document " + doc.id() + " reached extraction without a relevant verdict");
    }
    const auto& text = doc.raw_text();
    const auto kind = doc.source().kind();
    const auto& grammar = DefangGrammar::builtin();

    auto t0 = std::chrono::steady_clock::now();
    auto rules = extract_indicators(text, grammar, doc.fetched_at());
    std::vector<EntitySpan> spans;
    if (ner_->remote) {
      try {
        spans = ner_->remote->tag(text).spans;
        metrics_.increment(key(counters::kNerRemote));
      } catch (const Error& e) {
        if (!ner_->fallback) throw;
        spdlog::debug("pipeline: ner endpoint failed, using fallback: {}", e.what());
        spans = tag_fallback(text, ner_->gazetteer, grammar);
        metrics_.increment(key(counters::kNerFallback));
      }
    } else {
      spans = tag_fallback(text, ner_->gazetteer, grammar);
    }
    auto merged = merge_with_ner(rules, spans, text, grammar, doc.fetched_at());
    std::vector<Indicator> inds;
    inds.reserve(merged.indicators.size());
    for (const auto& ind : merged.indicators) {
      auto i = ind.with_source(doc.source());
      if (enricher_) i = enricher_->enrich(i);
      inds.push_back(std::move(i));
    }
    metrics_.record_stage_timing(Stage::extract, kind, elapsed_ms(t0));

    for (const auto& ind : inds) {
      sink_->index(ind);
      bus_->publish(topics::kIocExtracted, canonical_dump(to_json(ind)));
    }
    sink_->index(doc.with_indicators(inds).with_context(std::move(merged.context)));
    metrics_.increment(key(counters::kDocuments));
    metrics_.increment(key(counters::kIndicators), inds.size());
    metrics_.record_iocs(kind, inds.size());
    record_latency(kind, ingested_at);
  } catch (const StateError&) {
    throw;
  } catch (const std::exception& e) {
    dead_letter(topics::kDlqExtract, counters::kDlqExtract, rec, e.what());
  }
}

// ---------------------------------------------------------------- sources

void Pipeline::run_post_source(std::stop_token st) {
  try {
    if (config_.sources.replay) {
      auto stats = replay(*bus_, *config_.sources.replay, clock_, st);
      metrics_.increment(key(counters::kSourcePublished), stats.published);
      metrics_.increment(key(counters::kSourceSkipped), stats.skipped);
    } else if (config_.sources.stream) {
      auto stats = connect_http_stream(*bus_, *config_.sources.stream, transport_, clock_, st);
      metrics_.increment(key(counters::kSourcePublished), stats.published);
      metrics_.increment(key(counters::kSourceSkipped), stats.skipped);
    }
  } catch (const StateError& e) {
    if (!stopped_) set_source_error(e.what());
  } catch (const std::exception& e) {
    set_source_error(e.what());
  }
  finish_sources();
}

bool Pipeline::robots_allow(const CrawlTask& task) {
  auto uri = parse_uri(task.url);
  if (!uri) return true;
  auto origin = uri->scheme + "://" + uri->authority();
  std::lock_guard lock(robots_mu_);
  auto it = robots_.find(origin);
  if (it == robots_.end()) {
    RobotsRules rules;
    if (auto body = fetcher_->fetch_aux(origin + "/robots.txt")) {
      rules = RobotsRules::parse(*body, config_.fetch.user_agent);
    }
    it = robots_.emplace(origin, std::move(rules)).first;
  }
  auto path = uri->path.empty() ? std::string("/") : uri->path;
  if (uri->query) path += "?" + *uri->query;
  return it->second.allowed(path);
}

void Pipeline::crawl_one(const CrawlTask& task) {
  const auto& profile = frontier_->profile(task.spider);
  if (profile.honor_robots && !is_onion_host(url_host(task.url)) && !robots_allow(task)) {
    metrics_.increment(key(counters::kRobotsDisallowed));
    return;
  }
  FetchResult r;
  try {
    r = fetcher_->fetch(task);
  } catch (const PermanentError& e) {
    metrics_.increment(key(counters::kFetchPermanent));
    spdlog::info("crawl: {}: {}", task.url, e.what());
    return;
  } catch (const ConfigError& e) {
    metrics_.increment(key(counters::kFetchConfig));
    spdlog::warn("crawl: {}: {}", task.url, e.what());
    return;
  } catch (const TransportError& e) {
    metrics_.increment(key(counters::kFetchTransient));
    spdlog::info("crawl: {}: {}", task.url, e.what());
    return;
  }
  metrics_.record_crawled(task.spider);

  auto kind = classify_content_type(r.content_type, r.body);
  if (kind == ContentKind::unsupported) {
    metrics_.increment(key(counters::kFetchUnsupported));
    return;
  }
  auto text = extract_text(r.body, r.content_type).text;
  if (kind == ContentKind::html && task.depth < profile.max_depth) {
    for (auto& url : extract_links(r.body, r.final_url).urls) {
      auto res = frontier_->enqueue({std::move(url), task.spider, task.depth + 1, task.url, clock_->now()});
      if (res.accepted) {
        metrics_.increment(key(counters::kFrontierAccepted));
      } else {
        metrics_.increment(key(counters::kFrontierRejected) + std::string(to_string(*res.reason)));
      }
    }
  }
  if (!lexical_prefilter(text, profile)) {
    metrics_.increment(key(counters::kPrefilterRejected));
    return;
  }
  nlohmann::json j = {{"url", task.url},
                      {"final_url", r.final_url},
                      {"spider", to_string(task.spider)},
                      {"source", to_string(profile.source_kind())},
                      {"depth", task.depth},
                      {"status", r.status},
                      {"truncated", r.truncated},
                      {"fetched_at", format_rfc3339(r.fetched_at)},
                      {"text", std::move(text)}};
  bus_->publish(topics::kWebRaw, canonical_dump(j));
  metrics_.increment(key(counters::kSourcePublished));
}

void Pipeline::crawl_loop(std::stop_token st) {
  while (!st.stop_requested()) {
    std::optional<CrawlTask> task;
    std::optional<Timestamp> wake;
    bool finished = false;
    {
      std::lock_guard lock(crawl_mu_);
      auto now = clock_->now();
      task = frontier_->next_ready(now);
      if (task) {
        ++in_flight_;
      } else if (frontier_->empty()) {
        finished = in_flight_ == 0;
      } else {
        wake = frontier_->next_eligible(now);
      }
    }
    if (task) {
      bool closed = false;
      try {
        crawl_one(*task);
      } catch (const StateError& e) {
        closed = true;
        if (!stopped_) set_source_error(e.what());
      } catch (const std::exception& e) {
        spdlog::error("crawl: {}: {}", task->url, e.what());
      }
      {
        std::lock_guard lock(crawl_mu_);
        --in_flight_;
      }
      if (closed) break;
      continue;
    }
    if (finished) break;
    if (wake) {
      auto d = std::chrono::ceil<Millis>(*wake - clock_->now());
      clock_->sleep_for(std::clamp(d, Millis(1), Millis(50)));
    } else {
      std::this_thread::sleep_for(Millis(2));
    }
  }
  finish_sources();
}

void Pipeline::snapshot_loop(std::stop_token st) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  while (!st.stop_requested()) {
    cv.wait_for(lock, st, config_.metrics.snapshot_interval, [] { return false; });
    if (st.stop_requested()) break;
    try {
      sink_->index_metrics(to_json(metrics_.snapshot()));
    } catch (const Error& e) {
      spdlog::warn("pipeline: metric snapshot not written: {}", e.what());
    }
  }
}

std::unique_ptr<Pipeline> run_post_pipeline(PipelineConfig config, PipelineDeps deps) {
  auto p = std::make_unique<Pipeline>(Flow::posts, std::move(config), std::move(deps));
  p->start();
  return p;
}

std::unique_ptr<Pipeline> run_web_pipeline(PipelineConfig config, PipelineDeps deps) {
  auto p = std::make_unique<Pipeline>(Flow::web, std::move(config), std::move(deps));
  p->start();
  return p;
}

}  // namespace tstem
