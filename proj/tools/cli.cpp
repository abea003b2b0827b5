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

#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "tstem/classifier.hpp"
#include "tstem/clock.hpp"
#include "tstem/enrichment.hpp"
#include "tstem/error.hpp"
#include "tstem/extractor.hpp"
#include "tstem/http.hpp"
#include "tstem/metrics.hpp"
#include "tstem/ner.hpp"
#include "tstem/pipeline.hpp"
#include "tstem/sink.hpp"

namespace tstem::cli {
namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

class SignalScope {
 public:
  SignalScope() {
    g_interrupted.store(false);
    prev_int_ = std::signal(SIGINT, on_signal);
    prev_term_ = std::signal(SIGTERM, on_signal);
  }
  ~SignalScope() {
    std::signal(SIGINT, prev_int_);
    std::signal(SIGTERM, prev_term_);
  }

 private:
  void (*prev_int_)(int);
  void (*prev_term_)(int);
};

// Routes spdlog to the error stream for the duration of a run.
class LogScope {
 public:
  LogScope(std::ostream& err, const std::string& level) : prev_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("tstem", sink);
    logger->set_level(spdlog::level::from_str(level));
    spdlog::set_default_logger(logger);
  }
  ~LogScope() { spdlog::set_default_logger(prev_); }

 private:
  std::shared_ptr<spdlog::logger> prev_;
};

std::string read_all(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string read_input(const std::string& path, std::istream& in) {
  if (path == "-") return read_all(in);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  return read_all(f);
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  for (std::string line; std::getline(ss, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

fs::path config_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TSTEM_CONFIG"); env && *env) return env;
  throw ConfigError("no config file: pass --config or set TSTEM_CONFIG");
}

void print_json(std::ostream& out, const nlohmann::json& j) { out << j.dump() << '\n'; }

// ------------------------------------------------------------ pipelines

struct RunOptions {
  std::string config;
  std::string spider;
  std::string fixture;
  std::optional<double> rate;
  bool loop = false;
  std::uint64_t max_records = 0;
  int grace_ms = 10000;
};

int run_pipeline(Flow flow, const RunOptions& o, std::ostream& out) {
  auto config = load_pipeline_config(config_path(o.config));
  if (flow == Flow::web && !o.spider.empty()) {
    auto want = parse_spider(o.spider);
    std::vector<SpiderProfile> kept;
    for (auto& p : config.spiders) {
      if (p.name == want) kept.push_back(std::move(p));
    }
    if (kept.empty()) throw ConfigError("config has no spider named '" + o.spider + "'");
    config.spiders = std::move(kept);
  }
  if (flow == Flow::posts) {
    ReplayOptions r = config.sources.replay.value_or(ReplayOptions{});
    r.path = o.fixture;
    if (o.rate) r.rate = *o.rate;
    if (o.loop) r.loop = true;
    if (o.max_records) r.max_records = o.max_records;
    config.sources.replay = r;
    config.sources.stream.reset();
  }

  SignalScope signals;
  Pipeline p(flow, std::move(config));
  p.start();
  while (!g_interrupted.load() && !p.wait_idle(Millis(200))) {
  }
  auto result = p.shutdown(Millis(o.grace_ms));
  spdlog::info("{} pipeline stopped: {}", to_string(flow), to_string(result));
  print_json(out, to_json(p.metrics().snapshot()));
  if (auto e = p.source_error()) throw TransportError("source failed: " + *e, false);
  return kExitOk;
}

// ------------------------------------------------------------ extract

struct ExtractOptions {
  std::string in = "-";
  std::string format = "text";
  bool ner = false;
  std::string gazetteer;
};

void extract_one(const std::string& text, const std::optional<Gazetteer>& gaz,
                 const nlohmann::json& tag, std::ostream& out) {
  auto inds = extract_indicators(text);
  if (gaz) inds = merge_with_ner(inds, tag_fallback(text, *gaz), text).indicators;
  for (const auto& ind : inds) {
    auto j = to_json(ind);
    for (const auto& [k, v] : tag.items()) j[k] = v;
    print_json(out, j);
  }
}

int run_extract(const ExtractOptions& o, std::istream& in, std::ostream& out) {
  std::optional<Gazetteer> gaz;
  if (o.ner) gaz = o.gazetteer.empty() ? Gazetteer{} : Gazetteer::load(o.gazetteer);
  auto data = read_input(o.in, in);
  if (o.format == "text") {
    extract_one(data, gaz, nlohmann::json::object(), out);
    return kExitOk;
  }
  auto lines = split_lines(data);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error&) {
      throw ValidationError("line " + std::to_string(i + 1) + " is not JSON");
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
      throw ValidationError("line " + std::to_string(i + 1) + " has no string field 'text'");
    }
    nlohmann::json tag = {{"record", i}};
    if (rec.contains("id")) tag["id"] = rec["id"];
    extract_one(rec["text"].get<std::string>(), gaz, tag, out);
  }
  return kExitOk;
}

// ------------------------------------------------------------ train / eval

struct TrainOptions {
  std::string corpus;
  std::string out;
  std::uint64_t seed = 0;
  std::uint32_t dim = BaselineModel::kDefaultDim;
  int epochs = 20;
  std::string validation;
  double threshold = kDefaultRelevanceThreshold;
};

int run_train(const TrainOptions& o, std::ostream& out) {
  TrainConfig c;
  c.seed = o.seed;
  c.dim = o.dim;
  c.epochs = o.epochs;
  auto corpus = load_corpus(o.corpus);
  auto model = train_baseline(corpus, c);
  model.save(o.out);
  spdlog::info("trained {} on {} examples, saved to {}", model.model_id(), corpus.size(), o.out);
  auto report_on = o.validation.empty() ? corpus : load_corpus(o.validation);
  print_json(out, to_json(evaluate_model(model, report_on, o.threshold)));
  return kExitOk;
}

int run_eval(const std::string& model_path, const std::string& corpus, double threshold, std::ostream& out) {
  auto model = BaselineModel::load(model_path);
  print_json(out, to_json(evaluate_model(model, load_corpus(corpus), threshold)));
  return kExitOk;
}

// ------------------------------------------------------------ metrics

int run_metrics(const std::string& endpoint, const std::string& archive, bool all, std::ostream& out) {
  if (!endpoint.empty()) {
    std::string url = endpoint;
    if (url.size() < 8 || url.compare(url.size() - 8, 8, "/metrics") != 0) url = join_url(url, "/metrics");
    HttpRequest req;
    req.url = url;
    req.timeout = Millis(10000);
    auto resp = default_transport()->perform(req);
    if (resp.status != 200) {
      throw PermanentError("GET " + url + " returned " + std::to_string(resp.status), static_cast<int>(resp.status));
    }
    // Round trip through the snapshot type so malformed replies fail here.
    print_json(out, to_json(metric_snapshot_from_json(nlohmann::json::parse(resp.body))));
    return kExitOk;
  }
  fs::path dir = archive;
  if (fs::is_regular_file(dir)) dir = dir.parent_path();
  if (!fs::is_directory(dir)) throw ConfigError("archive directory " + archive + " does not exist");
  auto replay = replay_archive(dir);
  if (replay.metrics.empty()) throw StorageError("archive " + dir.string() + " holds no metric snapshots");
  if (all) {
    for (const auto& m : replay.metrics) print_json(out, m);
  } else {
    print_json(out, replay.metrics.back());
  }
  return kExitOk;
}

// ------------------------------------------------------------ verify

struct VerifyOptions {
  std::string in = "-";
  std::string fixture;
  bool live = false;
  std::string config;
  std::string cache;
  std::vector<std::string> providers;
  std::string as_of;
};

Indicator indicator_from_line(const std::string& line, std::size_t n) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ValidationError("line " + std::to_string(n) + " is not JSON");
  }
  if (j.is_object() && j.contains("key") && !j.contains("value")) {
    auto key = j["key"].get<std::string>();
    auto colon = key.find(':');
    if (colon == std::string::npos) throw ValidationError("line " + std::to_string(n) + ": bad key");
    return Indicator::create(key.substr(colon + 1), parse_indicator_type(key.substr(0, colon)));
  }
  if (j.is_object() && j.contains("sources")) return indicator_from_json(j);
  if (!j.is_object() || !j.contains("value") || !j.contains("kind")) {
    throw ValidationError("line " + std::to_string(n) + " needs 'value' and 'kind'");
  }
  return Indicator::create(j["value"].get<std::string>(), parse_indicator_type(j["kind"].get<std::string>()));
}

int run_verify(const VerifyOptions& o, std::istream& in, std::ostream& out) {
  EnrichmentConfig ec;
  if (o.live) {
    auto path = config_path(o.config);
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
      j = interpolate_env_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.contains("enrichment")) throw ConfigError(path.string() + ": no enrichment section");
    ec = enrichment_config_from_json(j["enrichment"], path.parent_path());
    ec.mode = EnrichmentMode::live;
  } else {
    ec.mode = EnrichmentMode::fixture;
    ec.fixture_path = o.fixture;
  }
  if (!o.providers.empty()) ec.providers = o.providers;
  if (!o.cache.empty()) ec.cache_path = o.cache;

  std::optional<ManualClock> fixed;
  if (!o.as_of.empty()) fixed.emplace(parse_rfc3339(o.as_of));
  auto enricher = Enricher::from_config(ec, fixed ? &*fixed : nullptr);
  auto lines = split_lines(read_input(o.in, in));
  std::vector<Indicator> done;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    done.push_back(enricher->enrich(indicator_from_line(lines[i], i + 1)));
    print_json(out, to_json(done.back()));
  }
  if (ec.cache_path) enricher->save_cache(*ec.cache_path);
  auto s = enricher->stats();
  spdlog::info("verified {} indicators: {} lookups, {} cache hits, {} errors", done.size(), s.lookups,
               s.cache_hits, s.errors);
  return kExitOk;
}

// ------------------------------------------------------------ errors

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const TransportError*>(&e)) return "transport";
  if (dynamic_cast<const PermanentError*>(&e)) return "permanent";
  if (dynamic_cast<const ProtocolError*>(&e)) return "protocol";
  if (dynamic_cast<const StorageError*>(&e)) return "storage";
  if (dynamic_cast<const StateError*>(&e)) return "state";
  return "internal";
}

void report(std::ostream& err, bool json, int code, const std::string& type, const std::string& msg) {
  if (json) {
    err << nlohmann::json{{"error", {{"type", type}, {"message", msg}, {"exit_code", code}}}}.dump() << '\n';
  } else {
    err << "tstem: " << msg << '\n';
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Collects web pages and posts, keeps the threat-relevant ones and extracts indicators."};
  app.name("tstem");
  app.require_subcommand(1);
  bool json_errors = false;
  std::string log_level = "warn";
  app.add_flag("--json", json_errors, "Report errors on stderr as JSON");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, critical or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  RunOptions crawl_opts;
  auto* crawl = app.add_subcommand("crawl", "Run the web pipeline until drained or interrupted");
  crawl->add_option("--config", crawl_opts.config, "Pipeline config (default: $TSTEM_CONFIG)");
  crawl->add_option("--spider", crawl_opts.spider, "Run only this spider (ache, sitemap, ahmia, wiki1, wiki2)");
  crawl->add_option("--grace-ms", crawl_opts.grace_ms, "Drain time after a stop request")->check(CLI::NonNegativeNumber);

  RunOptions stream_opts;
  double rate = 0;
  auto* stream = app.add_subcommand("stream", "Run the post pipeline from an NDJSON fixture");
  stream->add_option("--config", stream_opts.config, "Pipeline config (default: $TSTEM_CONFIG)");
  stream->add_option("--fixture", stream_opts.fixture, "Post fixture, one JSON object per line")
      ->required()
      ->check(CLI::ExistingFile);
  auto* rate_opt = stream->add_option("--rate", rate, "Records per second, 0 for unpaced")->check(CLI::NonNegativeNumber);
  stream->add_flag("--loop", stream_opts.loop, "Replay the fixture until interrupted");
  stream->add_option("--max-records", stream_opts.max_records, "Stop after this many records");
  stream->add_option("--grace-ms", stream_opts.grace_ms, "Drain time after a stop request")->check(CLI::NonNegativeNumber);

  ExtractOptions extract_opts;
  auto* extract = app.add_subcommand("extract", "Refang and extract indicators to NDJSON");
  extract->add_option("--in", extract_opts.in, "Input file, or - for stdin")->required();
  extract->add_option("--format", extract_opts.format, "text: whole input is one document; ndjson: one {\"text\"} per line")
      ->check(CLI::IsMember({"text", "ndjson"}));
  extract->add_flag("--ner", extract_opts.ner, "Merge in the offline entity tagger");
  extract->add_option("--gazetteer", extract_opts.gazetteer, "Gazetteer for --ner")->check(CLI::ExistingFile);

  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train the baseline relevance model");
  train->add_option("--corpus", train_opts.corpus, "NDJSON {\"text\", \"relevant\"}")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_opts.out, "Model file to write")->required();
  train->add_option("--seed", train_opts.seed, "Shuffle seed")->required();
  train->add_option("--dim", train_opts.dim, "Hashed feature buckets")->check(CLI::PositiveNumber);
  train->add_option("--epochs", train_opts.epochs, "Passes over the corpus")->check(CLI::PositiveNumber);
  train->add_option("--validation", train_opts.validation, "Report on this corpus instead of the training one")
      ->check(CLI::ExistingFile);
  train->add_option("--threshold", train_opts.threshold, "Relevance threshold")->check(CLI::Range(0.0, 1.0));

  std::string eval_model, eval_corpus;
  double eval_threshold = kDefaultRelevanceThreshold;
  auto* eval = app.add_subcommand("eval", "Evaluate a baseline model on a labeled corpus");
  eval->add_option("--model", eval_model, "Model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--corpus", eval_corpus, "NDJSON {\"text\", \"relevant\"}")->required()->check(CLI::ExistingFile);
  eval->add_option("--threshold", eval_threshold, "Relevance threshold")->check(CLI::Range(0.0, 1.0));

  std::string endpoint, archive;
  bool all_snapshots = false;
  auto* metrics = app.add_subcommand("metrics", "Print a metrics snapshot");
  auto* ep_opt = metrics->add_option("--endpoint", endpoint, "Base url of a running pipeline's metrics server");
  auto* ar_opt = metrics->add_option("--from-archive", archive, "Sink archive directory");
  ep_opt->excludes(ar_opt);
  metrics->add_flag("--all", all_snapshots, "With --from-archive: every snapshot, one per line");
  metrics->require_option(1);

  VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "Look indicators up with the reputation providers");
  verify->add_option("--in", verify_opts.in, "NDJSON indicators ({\"value\",\"kind\"} or {\"key\"}), or -")->required();
  auto* fx_opt = verify->add_option("--fixture", verify_opts.fixture, "Offline provider table")->check(CLI::ExistingFile);
  auto* live_opt = verify->add_flag("--live", verify_opts.live, "Query the live providers from the config");
  fx_opt->excludes(live_opt);
  verify->add_option("--config", verify_opts.config, "Config with an enrichment section (with --live)");
  verify->add_option("--cache", verify_opts.cache, "Verification cache file, loaded and saved");
  verify->add_option("--provider", verify_opts.providers, "Provider names (repeatable)");
  verify->add_option("--as-of", verify_opts.as_of, "Fixed check time (RFC 3339) for reproducible output")
      ->excludes(live_opt);

  try {
    app.parse(argc, argv);
    if (*verify && !verify_opts.live && verify_opts.fixture.empty()) {
      throw CLI::ValidationError("verify", "one of --fixture or --live is required");
    }
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (json_errors) {
      report(err, true, kExitUsage, "usage", e.what());
    } else {
      err << "tstem: " << e.what() << "\n\n" << app.help() << std::flush;
    }
    return kExitUsage;
  }

  LogScope logs(err, log_level);
  try {
    if (*crawl) return run_pipeline(Flow::web, crawl_opts, out);
    if (*stream) {
      if (rate_opt->count()) stream_opts.rate = rate;
      return run_pipeline(Flow::posts, stream_opts, out);
    }
    if (*extract) return run_extract(extract_opts, in, out);
    if (*train) return run_train(train_opts, out);
    if (*eval) return run_eval(eval_model, eval_corpus, eval_threshold, out);
    if (*metrics) return run_metrics(endpoint, archive, all_snapshots, out);
    if (*verify) return run_verify(verify_opts, in, out);
  } catch (const std::exception& e) {
    report(err, json_errors, kExitError, error_type(e), e.what());
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace tstem::cli
