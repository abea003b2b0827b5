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

// Relevance scoring at sentence and page granularity.
//
// Baseline model file layout (all integers little-endian):
//
//   offset  size  field
//   0       8     magic "TSTEMBLM"
//   8       4     u32 version (1)
//   12      4     u32 D, number of hashed feature buckets
//   16      1     u8 n, number of n-gram orders
//   17      n     u8 orders, ascending
//   17+n    8     f64 bias
//   25+n    4     u32 m, metadata length
//   29+n    m     metadata, a JSON object (UTF-8)
//   29+n+m  8*D   f64 weights

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"
#include "tstem/model.hpp"

namespace tstem {

class HttpTransport;

struct WordToken {
  std::string text;  // ASCII-lowercased
  std::size_t start = 0;
  std::size_t end = 0;
};

// Word tokens: maximal runs of ASCII letters/digits and non-ASCII bytes.
// Everything else separates.
std::vector<WordToken> tokenize_words(std::string_view text);

struct Sentence {
  std::string text;
  std::size_t start = 0;
};

// Splits after a whitespace-delimited chunk ending in '.', '!' or '?'
// (optionally followed by closing quotes or brackets) when the next chunk
// begins with an uppercase letter or digit, or at end of text. Dots inside
// a chunk (urls, IPs, file names) never split. Chunks that are known
// abbreviations ("e.g.", "Dr.", ...) never split.
std::vector<Sentence> split_sentences(std::string_view text);

enum class Aggregation { max, mean };
std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view s);

struct ChunkingPolicy {
  std::size_t window = 512;
  std::size_t stride = 256;
  Aggregation aggregation = Aggregation::max;

  void validate() const;  // throws ValidationError unless 0 < stride <= window
};

// Token index ranges [begin, end) of the windows over `n_tokens` tokens.
// Windows start at 0, stride, 2*stride, ... and stop after the first window
// that reaches the last token. n_tokens <= window gives one window.
std::vector<std::pair<std::size_t, std::size_t>> window_bounds(std::size_t n_tokens,
                                                               const ChunkingPolicy& policy);

double aggregate(const std::vector<double>& scores, Aggregation a);

class BaselineModel {
 public:
  static constexpr std::uint32_t kDefaultDim = 1u << 18;

  // Not usable for scoring; score_text throws StateError.
  BaselineModel() = default;

  // All-zero weights; every text scores exactly 0.5.
  static BaselineModel zero(std::uint32_t dim = kDefaultDim);

  bool trained() const { return !weights_.empty(); }
  std::uint32_t dim() const { return static_cast<std::uint32_t>(weights_.size()); }
  const std::vector<std::uint8_t>& orders() const { return orders_; }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  const nlohmann::json& metadata() const { return metadata_; }
  std::string model_id() const;

  // Sparse feature vector: sorted unique bucket indices with values.
  std::vector<std::pair<std::uint32_t, double>> features(std::string_view text) const;

  double score(std::string_view text) const;

  void save(const std::filesystem::path& path) const;
  static BaselineModel load(const std::filesystem::path& path);
  std::string serialize() const;
  static BaselineModel deserialize(std::string_view bytes);

 private:
  friend class BaselineTrainer;
  std::vector<double> weights_;
  double bias_ = 0.0;
  std::vector<std::uint8_t> orders_{1, 2};
  nlohmann::json metadata_ = nlohmann::json::object();
};

struct LabeledText {
  std::string text;
  bool relevant = false;
};

// Reads NDJSON lines {"text": ..., "relevant": bool}.
std::vector<LabeledText> load_corpus(const std::filesystem::path& path);

struct TrainConfig {
  std::uint32_t dim = BaselineModel::kDefaultDim;
  int epochs = 20;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
  std::string model_id = "baseline-hashed-ngram";
};

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct LabelMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::uint64_t support = 0;
};

// Metrics with a zero denominator are reported as 0.
struct EvalReport {
  Confusion confusion;
  double accuracy = 0;
  LabelMetrics relevant;    // positive class
  LabelMetrics irrelevant;  // negative class, computed with roles swapped
};

EvalReport evaluate(const std::vector<bool>& predictions, const std::vector<bool>& gold);
EvalReport report_from_confusion(const Confusion& c);
nlohmann::json to_json(const EvalReport& r);

// Throws ValidationError on an empty or single-label corpus. Deterministic
// for a given corpus, config and seed.
BaselineModel train_baseline(const std::vector<LabeledText>& corpus, const TrainConfig& config);

struct TrainResult {
  BaselineModel model;
  std::optional<EvalReport> held_out;
};

TrainResult train_baseline(const std::vector<LabeledText>& corpus,
                           const std::vector<LabeledText>& validation, const TrainConfig& config,
                           double threshold = kDefaultRelevanceThreshold);

// Throws StateError when the model is not trained.
double score_text(const BaselineModel& model, std::string_view text);

RelevanceVerdict score_page(const BaselineModel& model, std::string_view text,
                            const ChunkingPolicy& policy = {},
                            double threshold = kDefaultRelevanceThreshold);

RelevanceVerdict score_sentence(const BaselineModel& model, std::string_view text,
                                double threshold = kDefaultRelevanceThreshold);

EvalReport evaluate_model(const BaselineModel& model, const std::vector<LabeledText>& corpus,
                          double threshold = kDefaultRelevanceThreshold);

struct RemoteEndpoint {
  std::string base_url;
  Millis timeout{5000};
  std::size_t max_in_flight = 8;
};

// Client for POST /v1/classify. Concurrent calls beyond max_in_flight wait.
class RemoteScorer {
 public:
  RemoteScorer(RemoteEndpoint ep, std::shared_ptr<HttpTransport> transport = nullptr,
               double threshold = kDefaultRelevanceThreshold);
  ~RemoteScorer();

  RelevanceVerdict score(std::string_view text, Granularity g);

 private:
  RemoteEndpoint ep_;
  std::shared_ptr<HttpTransport> transport_;
  double threshold_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

RelevanceVerdict remote_score(const RemoteEndpoint& ep, std::string_view text, Granularity g,
                              double threshold = kDefaultRelevanceThreshold);

}  // namespace tstem
