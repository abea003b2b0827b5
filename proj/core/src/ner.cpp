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

#include "tstem/ner.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "tstem/error.hpp"
#include "tstem/http.hpp"
#include "tstem/uri.hpp"

namespace tstem {

IobTag parse_iob_tag(std::string_view tag) {
  if (tag == "O") return {};
  if (tag.size() > 2 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I')) {
    if (auto label = parse_entity_label(tag.substr(2))) {
      return {tag[0] == 'B' ? IobTag::Kind::B : IobTag::Kind::I, *label};
    }
  }
  throw ValidationError("unknown IOB tag '" + std::string(tag) + "'");
}

std::string to_string(const IobTag& t) {
  if (t.kind == IobTag::Kind::O) return "O";
  return std::string(t.kind == IobTag::Kind::B ? "B-" : "I-") + std::string(to_string(t.label));
}

DecodeResult decode_iob(const std::vector<NerToken>& tokens, const std::vector<std::string>& labels,
                        std::string_view host) {
  if (tokens.size() != labels.size()) {
    throw ValidationError("token/tag length mismatch: " + std::to_string(tokens.size()) + " vs " +
                          std::to_string(labels.size()));
  }
  std::vector<IobTag> tags;
  tags.reserve(labels.size());
  for (const auto& l : labels) tags.push_back(parse_iob_tag(l));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].start >= tokens[i].end) throw ValidationError("empty token at index " + std::to_string(i));
    if (i > 0 && tokens[i].start < tokens[i - 1].end) {
      throw ValidationError("tokens overlap or are out of order at index " + std::to_string(i));
    }
    if (!host.empty() && tokens[i].end > host.size()) {
      throw ValidationError("token " + std::to_string(i) + " ends past the host text");
    }
  }

  DecodeResult out;
  auto emit = [&](std::size_t first, std::size_t last, EntityLabel label) {
    EntitySpan s{label, tokens[first].start, tokens[last].end, {}};
    if (!host.empty()) {
      s.text = std::string(host.substr(s.start, s.end - s.start));
    } else {
      s.text.assign(s.end - s.start, ' ');
      for (std::size_t k = first; k <= last; ++k) {
        s.text.replace(tokens[k].start - s.start,
                       std::min(tokens[k].text.size(), tokens[k].end - tokens[k].start),
                       tokens[k].text);
      }
    }
    out.spans.push_back(std::move(s));
  };

  constexpr auto kNone = static_cast<std::size_t>(-1);
  std::size_t open = kNone;  // first token of the current run
  EntityLabel open_label = EntityLabel::Malware;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& t = tags[i];
    bool continues = t.kind == IobTag::Kind::I && open != kNone && open_label == t.label;
    if (continues) continue;
    if (open != kNone) emit(open, i - 1, open_label);
    open = kNone;
    if (t.kind == IobTag::Kind::O) continue;
    if (t.kind == IobTag::Kind::I) ++out.repairs;
    open = i;
    open_label = t.label;
  }
  if (open != kNone) emit(open, tags.size() - 1, open_label);
  return out;
}

// ---------------------------------------------------------------- gazetteer

namespace {

bool is_word(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80;
}

bool at_boundary(std::string_view text, std::size_t p) {
  return p == 0 || p >= text.size() || !is_word(text[p - 1]) || !is_word(text[p]);
}

bool iequals_at(std::string_view text, std::size_t pos, std::string_view term) {
  if (pos + term.size() > text.size()) return false;
  for (std::size_t i = 0; i < term.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) !=
        std::tolower(static_cast<unsigned char>(term[i]))) {
      return false;
    }
  }
  return true;
}

bool overlaps(const EntitySpan& a, const EntitySpan& b) {
  return a.start < b.end && b.start < a.end;
}

}  // namespace

Gazetteer::Gazetteer(std::vector<std::pair<std::string, EntityLabel>> terms)
    : terms_(std::move(terms)) {
  terms_.erase(std::remove_if(terms_.begin(), terms_.end(),
                              [](const auto& t) { return t.first.empty(); }),
               terms_.end());
  std::stable_sort(terms_.begin(), terms_.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
}

Gazetteer Gazetteer::parse(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("gazetteer is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("gazetteer must be a JSON object of label -> terms");
  std::vector<std::pair<std::string, EntityLabel>> terms;
  for (const auto& [name, list] : j.items()) {
    auto label = parse_entity_label(name);
    if (!label) throw ConfigError("gazetteer: unknown label '" + name + "'");
    if (!list.is_array()) throw ConfigError("gazetteer: terms for '" + name + "' must be an array");
    for (const auto& t : list) {
      if (!t.is_string()) throw ConfigError("gazetteer: non-string term under '" + name + "'");
      terms.emplace_back(t.get<std::string>(), *label);
    }
  }
  return Gazetteer(std::move(terms));
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open gazetteer " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::vector<EntitySpan> Gazetteer::match(std::string_view text) const {
  std::vector<EntitySpan> out;
  for (std::size_t p = 0; p < text.size();) {
    if (!is_word(text[p]) || !at_boundary(text, p)) {
      ++p;
      continue;
    }
    bool hit = false;
    for (const auto& [term, label] : terms_) {
      if (iequals_at(text, p, term) && at_boundary(text, p + term.size())) {
        out.push_back(EntitySpan{label, p, p + term.size(), std::string(text.substr(p, term.size()))});
        p += term.size();
        hit = true;
        break;
      }
    }
    if (!hit) ++p;
  }
  return out;
}

std::vector<EntitySpan> tag_fallback(std::string_view text, const Gazetteer& gazetteer,
                                     const DefangGrammar& g) {
  std::vector<EntitySpan> chosen;
  for (const auto& m : extract_matches(text, g)) {
    auto label = m.indicator.kind() == IndicatorType::cve ? EntityLabel::Vulnerability
                                                          : EntityLabel::Indicator;
    chosen.push_back(make_span(label, m.start, m.end, text));
  }
  for (auto& s : gazetteer.match(text)) {
    bool clash = std::any_of(chosen.begin(), chosen.end(),
                             [&](const EntitySpan& c) { return overlaps(c, s); });
    if (!clash) chosen.push_back(std::move(s));
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  return chosen;
}

// ---------------------------------------------------------------- remote

NerClient::NerClient(NerEndpoint ep, std::shared_ptr<HttpTransport> transport)
    : ep_(std::move(ep)),
      transport_(transport ? std::move(transport) : default_transport()),
      slots_(std::make_unique<std::counting_semaphore<>>(
          static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, ep_.max_in_flight)))) {
  if (ep_.base_url.empty()) throw ConfigError("ner endpoint is not configured");
}

NerClient::~NerClient() = default;

TagResult NerClient::tag(std::string_view text) {
  TagResult out;
  if (text.empty()) return out;
  slots_->acquire();
  struct Release {
    std::counting_semaphore<>* s;
    ~Release() { s->release(); }
  } release{slots_.get()};

  auto url = join_url(ep_.base_url, "/v1/ner");
  auto resp = post_json(*transport_, url, {{"text", std::string(text)}}, ep_.timeout);
  if (!resp.is_object() || !resp.contains("spans")) {
    throw ProtocolError(url + ": response missing field 'spans'");
  }
  if (!resp["spans"].is_array()) throw ProtocolError(url + ": field 'spans' is not an array");

  std::vector<EntitySpan> candidates;
  for (const auto& s : resp["spans"]) {
    auto drop = [&](const std::string& why) {
      ++out.dropped;
      spdlog::debug("ner: dropped span {}: {}", s.dump(), why);
    };
    if (!s.is_object() || !s.contains("label") || !s.contains("start") || !s.contains("end") ||
        !s["label"].is_string() || !s["start"].is_number_integer() ||
        !s["end"].is_number_integer()) {
      drop("malformed");
      continue;
    }
    auto label = parse_entity_label(s["label"].get<std::string>());
    auto start = s["start"].get<long long>();
    auto end = s["end"].get<long long>();
    if (!label) {
      drop("unknown label");
      continue;
    }
    if (start < 0 || end <= start || static_cast<std::size_t>(end) > text.size()) {
      drop("offsets out of range");
      continue;
    }
    auto a = static_cast<std::size_t>(start);
    auto b = static_cast<std::size_t>(end);
    if (!at_boundary(text, a) || !at_boundary(text, b)) {
      drop("offsets split a word");
      continue;
    }
    auto slice = text.substr(a, b - a);
    if (s.contains("text") && (!s["text"].is_string() || s["text"].get<std::string>() != slice)) {
      drop("text does not match offsets");
      continue;
    }
    candidates.push_back(EntitySpan{*label, a, b, std::string(slice)});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const EntitySpan& x, const EntitySpan& y) { return x.start < y.start; });
  for (auto& c : candidates) {
    if (!out.spans.empty() && overlaps(out.spans.back(), c)) {
      ++out.dropped;
      continue;
    }
    out.spans.push_back(std::move(c));
  }
  return out;
}

TagResult tag_remote(const NerEndpoint& ep, std::string_view text) {
  NerClient c(ep);
  return c.tag(text);
}

}  // namespace tstem
