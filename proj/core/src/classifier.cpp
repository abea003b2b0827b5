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

#include "tstem/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "tstem/error.hpp"
#include "tstem/http.hpp"
#include "tstem/uri.hpp"

namespace tstem {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::vector<WordToken> tokenize_words(std::string_view text) {
  std::vector<WordToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    WordToken t;
    t.start = i;
    t.end = j;
    t.text = ascii_lower(text.substr(i, j - i));
    out.push_back(std::move(t));
    i = j;
  }
  return out;
}

namespace {

const char* const kAbbreviations[] = {
    "approx.", "co.",  "corp.", "dr.", "e.g.", "etc.", "fig.", "i.e.", "inc.", "jr.", "ltd.",
    "mr.",     "mrs.", "ms.",   "no.", "prof.", "sr.", "st.",  "u.s.", "vs.",
};

bool is_abbreviation(std::string_view chunk) {
  while (!chunk.empty() && (chunk.front() == '(' || chunk.front() == '"' || chunk.front() == '\'')) {
    chunk.remove_prefix(1);
  }
  auto lower = ascii_lower(chunk);
  for (const char* a : kAbbreviations) {
    if (lower == a) return true;
  }
  return false;
}

bool ends_with_terminal(std::string_view chunk) {
  while (!chunk.empty() && std::string_view("\"')]").find(chunk.back()) != std::string_view::npos) {
    chunk.remove_suffix(1);
  }
  return !chunk.empty() && (chunk.back() == '.' || chunk.back() == '!' || chunk.back() == '?');
}

bool starts_upper(std::string_view chunk) {
  while (!chunk.empty() && std::string_view("\"'([").find(chunk.front()) != std::string_view::npos) {
    chunk.remove_prefix(1);
  }
  return !chunk.empty() && chunk.front() >= 'A' && chunk.front() <= 'Z';
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t i = 0; i < text.size();) {
    if (is_space(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    chunks.emplace_back(i, j);
    i = j;
  }
  std::vector<Sentence> out;
  std::size_t begin = 0;
  bool open = false;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    auto [a, b] = chunks[k];
    if (!open) {
      begin = a;
      open = true;
    }
    auto chunk = text.substr(a, b - a);
    bool last = k + 1 == chunks.size();
    bool split = last;
    if (!last && ends_with_terminal(chunk) && !is_abbreviation(chunk)) {
      auto [na, nb] = chunks[k + 1];
      split = starts_upper(text.substr(na, nb - na));
    }
    if (split) {
      out.push_back(Sentence{std::string(text.substr(begin, b - begin)), begin});
      open = false;
    }
  }
  return out;
}

std::string_view to_string(Aggregation a) { return a == Aggregation::max ? "max" : "mean"; }

Aggregation parse_aggregation(std::string_view s) {
  if (s == "max") return Aggregation::max;
  if (s == "mean") return Aggregation::mean;
  throw ValidationError("unknown aggregation '" + std::string(s) + "'");
}

void ChunkingPolicy::validate() const {
  if (stride == 0 || stride > window) {
    throw ValidationError("chunking policy requires 0 < stride <= window (window=" +
                          std::to_string(window) + ", stride=" + std::to_string(stride) + ")");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> window_bounds(std::size_t n_tokens,
                                                               const ChunkingPolicy& policy) {
  policy.validate();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n_tokens <= policy.window) {
    out.emplace_back(0, n_tokens);
    return out;
  }
  for (std::size_t s = 0;; s += policy.stride) {
    std::size_t e = std::min(s + policy.window, n_tokens);
    out.emplace_back(s, e);
    if (e == n_tokens) break;
  }
  return out;
}

double aggregate(const std::vector<double>& scores, Aggregation a) {
  if (scores.empty()) throw ValidationError("aggregate over no scores");
  if (a == Aggregation::max) return *std::max_element(scores.begin(), scores.end());
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------- model

BaselineModel BaselineModel::zero(std::uint32_t dim) {
  if (dim == 0) throw ValidationError("feature dimension must be positive");
  BaselineModel m;
  m.weights_.assign(dim, 0.0);
  m.metadata_ = {{"model_id", "baseline-zero"}};
  return m;
}

std::string BaselineModel::model_id() const {
  if (metadata_.contains("model_id") && metadata_["model_id"].is_string()) {
    return metadata_["model_id"].get<std::string>();
  }
  return "baseline";
}

std::vector<std::pair<std::uint32_t, double>> BaselineModel::features(
    std::string_view text) const {
  if (weights_.empty()) throw StateError("baseline model is not trained");
  auto toks = tokenize_words(text);
  std::map<std::uint32_t, double> counts;
  const auto d = static_cast<std::uint64_t>(weights_.size());
  std::size_t total = 0;
  for (auto order : orders_) {
    if (order == 0 || toks.size() < order) continue;
    for (std::size_t i = 0; i + order <= toks.size(); ++i) {
      std::string gram(1, static_cast<char>('0' + order));
      for (std::size_t k = 0; k < order; ++k) {
        gram += '\x1f';
        gram += toks[i + k].text;
      }
      counts[static_cast<std::uint32_t>(fnv1a(gram) % d)] += 1.0;
      ++total;
    }
  }
  std::vector<std::pair<std::uint32_t, double>> out(counts.begin(), counts.end());
  if (total > 0) {
    double scale = 1.0 / std::sqrt(static_cast<double>(total));
    for (auto& [i, v] : out) v *= scale;
  }
  return out;
}

double BaselineModel::score(std::string_view text) const {
  double z = bias_;
  for (auto [i, v] : features(text)) z += weights_[i] * v;
  return sigmoid(z);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::string_view s;
  std::size_t pos = 0;

  void need(std::size_t n) {
    if (pos + n > s.size()) throw StorageError("model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(s[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = s.substr(pos, n);
    pos += n;
    return v;
  }
};

constexpr std::string_view kMagic = "TSTEMBLM";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string BaselineModel::serialize() const {
  if (weights_.empty()) throw StateError("cannot save an untrained model");
  std::string out(kMagic);
  put_u32(out, kVersion);
  put_u32(out, dim());
  out.push_back(static_cast<char>(orders_.size()));
  for (auto o : orders_) out.push_back(static_cast<char>(o));
  put_f64(out, bias_);
  auto meta = metadata_.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  out.reserve(out.size() + weights_.size() * 8);
  for (double w : weights_) put_f64(out, w);
  return out;
}

BaselineModel BaselineModel::deserialize(std::string_view bytes) {
  Reader r{bytes};
  if (r.bytes(kMagic.size()) != kMagic) throw StorageError("not a baseline model file");
  auto version = r.u32();
  if (version != kVersion) {
    throw StorageError("unsupported model file version " + std::to_string(version));
  }
  BaselineModel m;
  auto d = r.u32();
  if (d == 0) throw StorageError("model file has zero dimension");
  auto n = r.u8();
  m.orders_.clear();
  for (int i = 0; i < n; ++i) m.orders_.push_back(r.u8());
  m.bias_ = r.f64();
  auto mlen = r.u32();
  try {
    m.metadata_ = nlohmann::json::parse(r.bytes(mlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw StorageError(std::string("model metadata is not JSON: ") + e.what());
  }
  m.weights_.resize(d);
  for (auto& w : m.weights_) w = r.f64();
  if (r.pos != bytes.size()) throw StorageError("trailing bytes after model weights");
  return m;
}

void BaselineModel::save(const std::filesystem::path& path) const {
  auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw StorageError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw StorageError("write failed for " + path.string());
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::vector<LabeledText> load_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open corpus " + path.string());
  std::vector<LabeledText> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("text").get<std::string>(), j.at("relevant").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------- training

class BaselineTrainer {
 public:
  static BaselineModel train(const std::vector<LabeledText>& corpus, const TrainConfig& cfg) {
    if (corpus.empty()) throw ValidationError("training corpus is empty");
    bool pos = false, neg = false;
    for (const auto& x : corpus) (x.relevant ? pos : neg) = true;
    if (!pos || !neg) throw ValidationError("training corpus must contain both labels");
    if (cfg.epochs <= 0) throw ValidationError("epochs must be positive");

    BaselineModel m = BaselineModel::zero(cfg.dim);
    std::vector<std::vector<std::pair<std::uint32_t, double>>> feats;
    feats.reserve(corpus.size());
    for (const auto& x : corpus) feats.push_back(m.features(x.text));

    std::vector<double> u(cfg.dim, 0.0);
    double ub = 0.0;
    double c = 1.0;
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (auto idx : order) {
        double z = m.bias_;
        for (auto [i, v] : feats[idx]) z += m.weights_[i] * v;
        double g = cfg.learning_rate * ((corpus[idx].relevant ? 1.0 : 0.0) - sigmoid(z));
        for (auto [i, v] : feats[idx]) {
          m.weights_[i] += g * v;
          u[i] += c * g * v;
        }
        m.bias_ += g;
        ub += c * g;
        c += 1.0;
      }
    }
    for (std::size_t i = 0; i < u.size(); ++i) m.weights_[i] -= u[i] / c;
    m.bias_ -= ub / c;
    std::size_t positives = 0;
    for (const auto& x : corpus) positives += x.relevant;
    m.metadata_ = {{"model_id", cfg.model_id},     {"trained_on", corpus.size()},
                   {"positives", positives},       {"epochs", cfg.epochs},
                   {"learning_rate", cfg.learning_rate}, {"seed", cfg.seed}};
    return m;
  }
};

BaselineModel train_baseline(const std::vector<LabeledText>& corpus, const TrainConfig& config) {
  return BaselineTrainer::train(corpus, config);
}

TrainResult train_baseline(const std::vector<LabeledText>& corpus,
                           const std::vector<LabeledText>& validation, const TrainConfig& config,
                           double threshold) {
  TrainResult r{BaselineTrainer::train(corpus, config), std::nullopt};
  if (!validation.empty()) r.held_out = evaluate_model(r.model, validation, threshold);
  return r;
}

// ---------------------------------------------------------------- scoring

double score_text(const BaselineModel& model, std::string_view text) { return model.score(text); }

RelevanceVerdict score_sentence(const BaselineModel& model, std::string_view text,
                                double threshold) {
  return make_verdict(score_text(model, text), threshold, Granularity::sentence, model.model_id());
}

RelevanceVerdict score_page(const BaselineModel& model, std::string_view text,
                            const ChunkingPolicy& policy, double threshold) {
  auto toks = tokenize_words(text);
  auto bounds = window_bounds(toks.size(), policy);
  std::vector<double> scores;
  if (bounds.size() == 1) {
    scores.push_back(score_text(model, text));
  } else {
    for (auto [b, e] : bounds) {
      auto a = toks[b].start;
      auto z = toks[e - 1].end;
      scores.push_back(score_text(model, text.substr(a, z - a)));
    }
  }
  return make_verdict(aggregate(scores, policy.aggregation), threshold, Granularity::page,
                      model.model_id());
}

// ---------------------------------------------------------------- evaluation

namespace {

LabelMetrics label_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  LabelMetrics m;
  m.support = tp + fn;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

}  // namespace

EvalReport report_from_confusion(const Confusion& c) {
  EvalReport r;
  r.confusion = c;
  r.accuracy =
      c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
  r.relevant = label_metrics(c.tp, c.fp, c.fn);
  r.irrelevant = label_metrics(c.tn, c.fn, c.fp);
  return r;
}

EvalReport evaluate(const std::vector<bool>& predictions, const std::vector<bool>& gold) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("prediction/gold length mismatch: " +
                          std::to_string(predictions.size()) + " vs " +
                          std::to_string(gold.size()));
  }
  Confusion c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predictions[i] && gold[i]) ++c.tp;
    else if (predictions[i]) ++c.fp;
    else if (gold[i]) ++c.fn;
    else ++c.tn;
  }
  return report_from_confusion(c);
}

EvalReport evaluate_model(const BaselineModel& model, const std::vector<LabeledText>& corpus,
                          double threshold) {
  std::vector<bool> pred, gold;
  for (const auto& x : corpus) {
    pred.push_back(score_text(model, x.text) >= threshold);
    gold.push_back(x.relevant);
  }
  return evaluate(pred, gold);
}

nlohmann::json to_json(const EvalReport& r) {
  auto lm = [](const LabelMetrics& m) {
    return nlohmann::json{
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  };
  return {{"accuracy", r.accuracy},
          {"confusion",
           {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn},
            {"fn", r.confusion.fn}}},
          {"labels", {{"relevant", lm(r.relevant)}, {"irrelevant", lm(r.irrelevant)}}}};
}

// ---------------------------------------------------------------- remote

RemoteScorer::RemoteScorer(RemoteEndpoint ep, std::shared_ptr<HttpTransport> transport,
                           double threshold)
    : ep_(std::move(ep)),
      transport_(transport ? std::move(transport) : default_transport()),
      threshold_(threshold),
      slots_(std::make_unique<std::counting_semaphore<>>(
          static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, ep_.max_in_flight)))) {
  if (ep_.base_url.empty()) throw ConfigError("classifier endpoint is not configured");
}

RemoteScorer::~RemoteScorer() = default;

RelevanceVerdict RemoteScorer::score(std::string_view text, Granularity g) {
  slots_->acquire();
  struct Release {
    std::counting_semaphore<>* s;
    ~Release() { s->release(); }
  } release{slots_.get()};

  auto url = join_url(ep_.base_url, "/v1/classify");
  auto resp = post_json(*transport_, url,
                        {{"text", std::string(text)}, {"granularity", std::string(to_string(g))}},
                        ep_.timeout);
  if (!resp.is_object() || !resp.contains("score")) {
    throw ProtocolError(url + ": response missing field 'score'");
  }
  if (!resp["score"].is_number()) throw ProtocolError(url + ": field 'score' is not a number");
  double s = resp["score"].get<double>();
  if (!(s >= 0.0 && s <= 1.0)) throw ProtocolError(url + ": field 'score' outside [0,1]");
  std::string model_id = "remote";
  if (resp.contains("model_id")) {
    if (!resp["model_id"].is_string()) {
      throw ProtocolError(url + ": field 'model_id' is not a string");
    }
    model_id = resp["model_id"].get<std::string>();
  }
  return make_verdict(s, threshold_, g, model_id);
}

RelevanceVerdict remote_score(const RemoteEndpoint& ep, std::string_view text, Granularity g,
                              double threshold) {
  RemoteScorer scorer(ep, nullptr, threshold);
  return scorer.score(text, g);
}

}  // namespace tstem
