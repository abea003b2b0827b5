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

// Shared domain vocabulary: indicators, documents, entity spans and
// relevance verdicts, plus canonicalization and identity rules.
//
// Every type here is immutable once built. "Modifiers" return a copy.

#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tstem/clock.hpp"

namespace tstem {

enum class IndicatorType { ipv4, ipv6, url, domain, email, md5, sha1, sha256, cve };

inline constexpr IndicatorType kAllIndicatorTypes[] = {
    IndicatorType::ipv4,   IndicatorType::ipv6, IndicatorType::url,
    IndicatorType::domain, IndicatorType::email, IndicatorType::md5,
    IndicatorType::sha1,   IndicatorType::sha256, IndicatorType::cve};

std::string_view to_string(IndicatorType t);
// Throws ValidationError on names outside the closed set.
IndicatorType parse_indicator_type(std::string_view s);

enum class SourceKind { twitter, clear_web, dark_web };
enum class Spider { ache, sitemap, ahmia, wiki1, wiki2 };

std::string_view to_string(SourceKind k);
std::string_view to_string(Spider s);
SourceKind parse_source_kind(std::string_view s);
Spider parse_spider(std::string_view s);

// Where a record came from. Web sources always name the spider that
// collected them; posts never do.
class Source {
 public:
  static Source twitter() { return Source(SourceKind::twitter, std::nullopt); }
  static Source web(SourceKind kind, Spider spider);

  SourceKind kind() const { return kind_; }
  const std::optional<Spider>& spider() const { return spider_; }

  // "twitter", "clear_web/ache", ...
  std::string to_string() const;
  static Source parse(std::string_view s);

  auto operator<=>(const Source&) const = default;

 private:
  Source(SourceKind k, std::optional<Spider> s) : kind_(k), spider_(s) {}
  SourceKind kind_;
  std::optional<Spider> spider_;
};

enum class Found { yes, no, unknown };

std::string_view to_string(Found f);

struct VerificationStatus {
  std::string provider;
  Found found = Found::unknown;
  Timestamp checked_at{};
  std::chrono::seconds ttl{0};

  bool operator==(const VerificationStatus&) const = default;
};

// Returns every rule the value breaks for `kind`; empty when valid. The
// value is expected to be refanged already.
std::vector<std::string> validate_indicator(std::string_view value, IndicatorType kind);

// Canonical form: lowercase hex for hashes, lowercase scheme and host for
// urls (path/query case preserved), lowercase domains and email domains,
// RFC 5952 text for IPv6, uppercase "CVE-" ids. Throws ValidationError
// naming the first failed rule.
std::string canonicalize_indicator(std::string_view value, IndicatorType kind);

// "kind:canonical-value". Equal keys iff the indicators are duplicates.
std::string indicator_key(std::string_view value, IndicatorType kind);

// True for private, loopback, link-local, CGNAT, multicast and other
// reserved IPv4/IPv6 space. Only meaningful for ip kinds.
bool is_non_routable(std::string_view canonical_ip, IndicatorType kind);

// Top-level labels accepted for bare domains and email domains.
bool is_allowed_tld(std::string_view lowercase_label);

class Indicator {
 public:
  // Canonicalizes and validates; throws ValidationError on failure.
  static Indicator create(std::string_view value, IndicatorType kind,
                          Timestamp first_seen = {},
                          std::optional<std::string> defanged_form = std::nullopt);

  const std::string& value() const { return value_; }
  IndicatorType kind() const { return kind_; }
  Timestamp first_seen() const { return first_seen_; }
  const std::vector<Source>& sources() const { return sources_; }
  const std::optional<std::string>& defanged_form() const { return defanged_form_; }
  const std::map<std::string, VerificationStatus>& verification() const { return verification_; }
  bool non_routable() const { return non_routable_; }
  std::string key() const;

  Indicator with_source(const Source& s) const;
  Indicator with_first_seen(Timestamp t) const;
  Indicator with_verification(const VerificationStatus& v) const;

  friend bool operator==(const Indicator& a, const Indicator& b) {
    return a.kind_ == b.kind_ && a.value_ == b.value_;
  }

 private:
  Indicator() = default;

  std::string value_;
  IndicatorType kind_ = IndicatorType::url;
  Timestamp first_seen_{};
  std::vector<Source> sources_;  // sorted, unique
  std::optional<std::string> defanged_form_;
  std::map<std::string, VerificationStatus> verification_;
  bool non_routable_ = false;
};

enum class EntityLabel { Malware, Indicator, System, Organization, Vulnerability };

inline constexpr EntityLabel kAllEntityLabels[] = {
    EntityLabel::Malware, EntityLabel::Indicator, EntityLabel::System,
    EntityLabel::Organization, EntityLabel::Vulnerability};

std::string_view to_string(EntityLabel l);
std::optional<EntityLabel> parse_entity_label(std::string_view s);

// A labeled half-open character range [start, end) over a host text.
struct EntitySpan {
  EntityLabel label = EntityLabel::Malware;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;

  bool operator==(const EntitySpan&) const = default;
};

// Builds a span over `host`, enforcing 0 <= start < end <= host.size().
EntitySpan make_span(EntityLabel label, std::size_t start, std::size_t end,
                     std::string_view host);

enum class Granularity { sentence, page };

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view s);

struct RelevanceVerdict {
  double score = 0.0;
  bool relevant = false;
  Granularity granularity = Granularity::sentence;
  std::string model_id;

  bool operator==(const RelevanceVerdict&) const = default;
};

inline constexpr double kDefaultRelevanceThreshold = 0.5;

// relevant == (score >= threshold). Throws ValidationError if score is
// outside [0, 1] or NaN.
RelevanceVerdict make_verdict(double score, double threshold, Granularity g,
                              std::string model_id);

class Document {
 public:
  static Document create(const Source& source, std::string locator, std::string raw_text,
                         Timestamp fetched_at);

  // Hex SHA-256 over (source, locator, raw_text), length-prefixed fields.
  static std::string compute_id(const Source& source, std::string_view locator,
                                std::string_view raw_text);

  const std::string& id() const { return id_; }
  const Source& source() const { return source_; }
  const std::string& locator() const { return locator_; }
  const std::string& raw_text() const { return raw_text_; }
  Timestamp fetched_at() const { return fetched_at_; }
  const std::optional<RelevanceVerdict>& relevance() const { return relevance_; }
  const std::vector<Indicator>& indicators() const { return indicators_; }
  const std::vector<EntitySpan>& context() const { return context_; }

  Document with_relevance(RelevanceVerdict v) const;
  Document with_indicators(std::vector<Indicator> inds) const;
  Document with_context(std::vector<EntitySpan> spans) const;
  // Same identity and metadata, raw text dropped (audit stubs).
  Document without_text() const;

  friend bool operator==(const Document& a, const Document& b);

 private:
  Document() = default;
  friend Document document_from_json(const nlohmann::json& j);

  std::string id_;
  Source source_ = Source::twitter();
  std::string locator_;
  std::string raw_text_;
  Timestamp fetched_at_{};
  std::optional<RelevanceVerdict> relevance_;
  std::vector<Indicator> indicators_;
  std::vector<EntitySpan> context_;
};

// Canonical JSON record format (bus payloads and sink lines).
nlohmann::json to_json(const Indicator& ind);
Indicator indicator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EntitySpan& s);
nlohmann::json to_json(const RelevanceVerdict& v);
RelevanceVerdict verdict_from_json(const nlohmann::json& j);

// Compact serialization with sorted keys; byte-stable for equal values.
std::string canonical_dump(const nlohmann::json& j);

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace tstem
