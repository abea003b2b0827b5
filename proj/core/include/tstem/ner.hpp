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

// Entity tagging over the five-label scheme.

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tstem/clock.hpp"
#include "tstem/extractor.hpp"
#include "tstem/model.hpp"

namespace tstem {

class HttpTransport;

struct NerToken {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct IobTag {
  enum class Kind { O, B, I };
  Kind kind = Kind::O;
  EntityLabel label = EntityLabel::Malware;  // meaningless for O

  bool operator==(const IobTag&) const = default;
};

// "O", "B-<Label>" or "I-<Label>"; anything else throws ValidationError.
IobTag parse_iob_tag(std::string_view tag);
std::string to_string(const IobTag& t);

struct DecodeResult {
  std::vector<EntitySpan> spans;
  std::size_t repairs = 0;  // I- tags that did not continue a same-label run
};

// A span is a B-X tag followed by every immediately following I-X tag. An
// I-X that does not continue a run of X opens a new span as if it were B-X
// and counts as one repair. Span offsets come from the tokens; span text is
// the slice of `host` when given, otherwise the token texts laid out at
// their offsets with spaces in the gaps. Throws ValidationError on length
// mismatch, unknown tags, or tokens that are empty or out of order.
DecodeResult decode_iob(const std::vector<NerToken>& tokens, const std::vector<std::string>& labels,
                        std::string_view host = {});

// Term list per label. Matching is ASCII case-insensitive on whole words;
// longer terms win at the same position.
class Gazetteer {
 public:
  Gazetteer() = default;
  explicit Gazetteer(std::vector<std::pair<std::string, EntityLabel>> terms);

  // JSON object mapping label name to an array of terms.
  static Gazetteer parse(std::string_view json);
  static Gazetteer load(const std::filesystem::path& path);

  const std::vector<std::pair<std::string, EntityLabel>>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }

  std::vector<EntitySpan> match(std::string_view text) const;

 private:
  std::vector<std::pair<std::string, EntityLabel>> terms_;  // longest first
};

// Offline tagger: extractor matches become Indicator spans (Vulnerability
// for CVE ids), gazetteer hits fill the rest. Spans never overlap;
// extractor spans take precedence. Result is ordered by start.
std::vector<EntitySpan> tag_fallback(std::string_view text, const Gazetteer& gazetteer,
                                     const DefangGrammar& g = DefangGrammar::builtin());

struct TagResult {
  std::vector<EntitySpan> spans;
  std::size_t dropped = 0;  // spans rejected by offset or label validation
};

struct NerEndpoint {
  std::string base_url;
  Millis timeout{5000};
  std::size_t max_in_flight = 8;
};

// Client for POST /v1/ner. A returned span is kept only if its label is one
// of the five, 0 <= start < end <= text length, both ends fall on word
// boundaries (never inside a run of letters/digits), it does not overlap an
// earlier kept span, and an optional "text" field equals the slice.
class NerClient {
 public:
  NerClient(NerEndpoint ep, std::shared_ptr<HttpTransport> transport = nullptr);
  ~NerClient();

  TagResult tag(std::string_view text);

 private:
  NerEndpoint ep_;
  std::shared_ptr<HttpTransport> transport_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

TagResult tag_remote(const NerEndpoint& ep, std::string_view text);

}  // namespace tstem
