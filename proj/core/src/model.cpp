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

#include "tstem/model.hpp"

#include <arpa/inet.h>
#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "tstem/error.hpp"
#include "tstem/uri.hpp"

namespace tstem {

std::string_view to_string(IndicatorType t) {
  switch (t) {
    case IndicatorType::ipv4: return "ipv4";
    case IndicatorType::ipv6: return "ipv6";
    case IndicatorType::url: return "url";
    case IndicatorType::domain: return "domain";
    case IndicatorType::email: return "email";
    case IndicatorType::md5: return "md5";
    case IndicatorType::sha1: return "sha1";
    case IndicatorType::sha256: return "sha256";
    case IndicatorType::cve: return "cve";
  }
  return "?";
}

IndicatorType parse_indicator_type(std::string_view s) {
  for (auto t : kAllIndicatorTypes) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown indicator type '" + std::string(s) + "'");
}

std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::twitter: return "twitter";
    case SourceKind::clear_web: return "clear_web";
    case SourceKind::dark_web: return "dark_web";
  }
  return "?";
}

std::string_view to_string(Spider s) {
  switch (s) {
    case Spider::ache: return "ache";
    case Spider::sitemap: return "sitemap";
    case Spider::ahmia: return "ahmia";
    case Spider::wiki1: return "wiki1";
    case Spider::wiki2: return "wiki2";
  }
  return "?";
}

SourceKind parse_source_kind(std::string_view s) {
  for (auto k : {SourceKind::twitter, SourceKind::clear_web, SourceKind::dark_web}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown source kind '" + std::string(s) + "'");
}

Spider parse_spider(std::string_view s) {
  for (auto sp : {Spider::ache, Spider::sitemap, Spider::ahmia, Spider::wiki1, Spider::wiki2}) {
    if (to_string(sp) == s) return sp;
  }
  throw ValidationError("unknown spider '" + std::string(s) + "'");
}

Source Source::web(SourceKind kind, Spider spider) {
  if (kind == SourceKind::twitter) {
    throw ValidationError("spider name is only valid for web sources");
  }
  return Source(kind, spider);
}

std::string Source::to_string() const {
  std::string out(tstem::to_string(kind_));
  if (spider_) {
    out += '/';
    out += tstem::to_string(*spider_);
  }
  return out;
}

Source Source::parse(std::string_view s) {
  auto slash = s.find('/');
  auto kind = parse_source_kind(s.substr(0, slash));
  if (slash == std::string_view::npos) {
    if (kind != SourceKind::twitter) {
      throw ValidationError("web source '" + std::string(s) + "' must name its spider");
    }
    return twitter();
  }
  return web(kind, parse_spider(s.substr(slash + 1)));
}

std::string_view to_string(Found f) {
  switch (f) {
    case Found::yes: return "found";
    case Found::no: return "not_found";
    case Found::unknown: return "unknown";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Validation and canonical forms.

namespace {

bool is_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) { return is_alpha(c) || is_digit(c); }

std::string ascii_upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return out;
}

constexpr std::array<std::string_view, 8> kDefangTokens = {
    "[.]", "(.)", "[dot]", "(dot)", "hxxp", "[:]", "[at]", "(at)"};

bool contains_defang_token(std::string_view v) {
  auto lower = ascii_lower(v);
  return std::any_of(kDefangTokens.begin(), kDefangTokens.end(),
                     [&](std::string_view t) { return lower.find(t) != std::string::npos; });
}

void check_hash(std::string_view v, std::size_t len, std::vector<std::string>& out) {
  if (v.size() != len) out.push_back("length != " + std::to_string(len));
  if (!std::all_of(v.begin(), v.end(), is_hex)) out.push_back("non-hex character");
}

void check_ipv4(std::string_view v, std::vector<std::string>& out) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto dot = v.find('.', start);
    parts.push_back(v.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  if (parts.size() != 4) {
    out.push_back("not four dot-separated octets");
    return;
  }
  bool range = false, digits = false, zero = false;
  for (auto p : parts) {
    if (p.empty() || p.size() > 3 || !std::all_of(p.begin(), p.end(), is_digit)) {
      if (!p.empty() && std::all_of(p.begin(), p.end(), is_digit)) {
        range = true;
      } else {
        digits = true;
      }
      continue;
    }
    if (std::stoi(std::string(p)) > 255) range = true;
    if (p.size() > 1 && p.front() == '0') zero = true;
  }
  if (digits) out.push_back("octet is not a decimal number");
  if (range) out.push_back("octet out of range");
  if (zero) out.push_back("octet has a leading zero");
}

void check_ipv6(std::string_view v, std::vector<std::string>& out) {
  in6_addr addr{};
  std::string s(v);
  if (s == "::" || s.find_first_not_of("0123456789abcdefABCDEF:.") != std::string::npos ||
      inet_pton(AF_INET6, s.c_str(), &addr) != 1) {
    out.push_back("not a valid IPv6 address");
  }
}

void check_domain(std::string_view v, std::vector<std::string>& out,
                  std::string_view prefix = {}) {
  auto add = [&](std::string msg) { out.push_back(std::string(prefix) + msg); };
  if (v.size() > 253) add("domain longer than 253 characters");
  if (v.find('.') == std::string_view::npos) {
    add("domain has no dot");
    return;
  }
  std::size_t start = 0;
  std::string_view last;
  bool bad_len = false, bad_char = false, bad_hyphen = false;
  while (true) {
    auto dot = v.find('.', start);
    auto label = v.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (label.empty() || label.size() > 63) bad_len = true;
    if (!std::all_of(label.begin(), label.end(), [](char c) { return is_alnum(c) || c == '-'; })) {
      bad_char = true;
    }
    if (!label.empty() && (label.front() == '-' || label.back() == '-')) bad_hyphen = true;
    last = label;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  if (bad_len) add("domain label empty or longer than 63 characters");
  if (bad_char) add("domain label has an invalid character");
  if (bad_hyphen) add("domain label starts or ends with '-'");
  if (last.size() < 2 || !std::all_of(last.begin(), last.end(), is_alpha)) {
    add("top-level label must be at least two letters");
  } else if (!is_allowed_tld(ascii_lower(last))) {
    add("top-level domain not in allowlist");
  }
}

void check_email(std::string_view v, std::vector<std::string>& out) {
  auto at = v.find('@');
  if (at == std::string_view::npos || v.find('@', at + 1) != std::string_view::npos) {
    out.push_back("email must contain exactly one '@'");
    return;
  }
  auto local = v.substr(0, at);
  if (local.empty() || local.size() > 64 || local.front() == '.' || local.back() == '.' ||
      !std::all_of(local.begin(), local.end(), [](char c) {
        return is_alnum(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-';
      })) {
    out.push_back("invalid email local part");
  }
  check_domain(v.substr(at + 1), out, "email ");
}

void check_url(std::string_view v, std::vector<std::string>& out) {
  auto u = parse_uri(v);
  if (!u) {
    out.push_back("does not parse as a URI");
    return;
  }
  if (!u->has_authority || u->host.empty()) {
    out.push_back("url has no host");
    return;
  }
  auto host = ascii_lower(u->host);
  if (host.front() == '.' || host.back() == '.' || host.find("..") != std::string::npos) {
    out.push_back("url host has an empty label");
  }
}

void check_cve(std::string_view v, std::vector<std::string>& out) {
  // CVE-YYYY-NNNN+
  bool ok = v.size() >= 13 && ascii_upper(v.substr(0, 4)) == "CVE-" &&
            std::all_of(v.begin() + 4, v.begin() + 8, is_digit) && v[8] == '-' &&
            std::all_of(v.begin() + 9, v.end(), is_digit);
  if (!ok) out.push_back("does not match CVE-YYYY-NNNN+");
}

}  // namespace

std::vector<std::string> validate_indicator(std::string_view value, IndicatorType kind) {
  std::vector<std::string> out;
  if (value.empty()) {
    out.emplace_back("empty value");
    return out;
  }
  if (contains_defang_token(value)) out.emplace_back("contains a defang token");
  switch (kind) {
    case IndicatorType::md5: check_hash(value, 32, out); break;
    case IndicatorType::sha1: check_hash(value, 40, out); break;
    case IndicatorType::sha256: check_hash(value, 64, out); break;
    case IndicatorType::ipv4: check_ipv4(value, out); break;
    case IndicatorType::ipv6: check_ipv6(value, out); break;
    case IndicatorType::domain: check_domain(value, out); break;
    case IndicatorType::email: check_email(value, out); break;
    case IndicatorType::url: check_url(value, out); break;
    case IndicatorType::cve: check_cve(value, out); break;
  }
  return out;
}

std::string canonicalize_indicator(std::string_view value, IndicatorType kind) {
  auto violations = validate_indicator(value, kind);
  if (!violations.empty()) {
    throw ValidationError(std::string(to_string(kind)) + " '" + std::string(value) +
                          "': " + violations.front());
  }
  switch (kind) {
    case IndicatorType::md5:
    case IndicatorType::sha1:
    case IndicatorType::sha256:
    case IndicatorType::domain:
      return ascii_lower(value);
    case IndicatorType::ipv4:
      return std::string(value);
    case IndicatorType::ipv6: {
      in6_addr addr{};
      inet_pton(AF_INET6, std::string(value).c_str(), &addr);
      char buf[INET6_ADDRSTRLEN];
      inet_ntop(AF_INET6, &addr, buf, sizeof buf);
      return buf;
    }
    case IndicatorType::email: {
      auto at = value.find('@');
      return std::string(value.substr(0, at + 1)) + ascii_lower(value.substr(at + 1));
    }
    case IndicatorType::url: {
      auto u = *parse_uri(value);
      u.scheme = ascii_lower(u.scheme);
      u.host = ascii_lower(u.host);
      return u.to_string();
    }
    case IndicatorType::cve:
      return ascii_upper(value);
  }
  return std::string(value);
}

std::string indicator_key(std::string_view value, IndicatorType kind) {
  return std::string(to_string(kind)) + ":" + canonicalize_indicator(value, kind);
}

bool is_non_routable(std::string_view ip, IndicatorType kind) {
  if (kind == IndicatorType::ipv4) {
    in_addr a{};
    if (inet_pton(AF_INET, std::string(ip).c_str(), &a) != 1) return false;
    std::uint32_t v = ntohl(a.s_addr);
    auto in = [v](std::uint32_t net, int bits) {
      std::uint32_t mask = bits == 0 ? 0 : ~std::uint32_t{0} << (32 - bits);
      return (v & mask) == net;
    };
    return in(0x00000000, 8) || in(0x0A000000, 8) || in(0x64400000, 10) ||
           in(0x7F000000, 8) || in(0xA9FE0000, 16) || in(0xAC100000, 12) ||
           in(0xC0000000, 24) || in(0xC0000200, 24) || in(0xC0A80000, 16) ||
           in(0xC6120000, 15) || in(0xC6336400, 24) || in(0xCB007100, 24) ||
           in(0xE0000000, 4) || in(0xF0000000, 4);
  }
  if (kind == IndicatorType::ipv6) {
    in6_addr a{};
    if (inet_pton(AF_INET6, std::string(ip).c_str(), &a) != 1) return false;
    const auto* b = a.s6_addr;
    bool all_zero_but_last = std::all_of(b, b + 15, [](unsigned char c) { return c == 0; });
    if (all_zero_but_last && (b[15] == 0 || b[15] == 1)) return true;  // :: and ::1
    if ((b[0] & 0xfe) == 0xfc) return true;                             // fc00::/7
    if (b[0] == 0xfe && (b[1] & 0xc0) == 0x80) return true;             // fe80::/10
    if (b[0] == 0xff) return true;                                      // multicast
    if (b[0] == 0x20 && b[1] == 0x01 && b[2] == 0x0d && b[3] == 0xb8) return true;  // doc
    return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Indicator

Indicator Indicator::create(std::string_view value, IndicatorType kind, Timestamp first_seen,
                            std::optional<std::string> defanged_form) {
  Indicator ind;
  ind.value_ = canonicalize_indicator(value, kind);
  ind.kind_ = kind;
  ind.first_seen_ = first_seen;
  if (defanged_form && *defanged_form != ind.value_) ind.defanged_form_ = std::move(defanged_form);
  ind.non_routable_ = is_non_routable(ind.value_, kind);
  return ind;
}

std::string Indicator::key() const { return std::string(to_string(kind_)) + ":" + value_; }

Indicator Indicator::with_source(const Source& s) const {
  Indicator copy = *this;
  auto it = std::lower_bound(copy.sources_.begin(), copy.sources_.end(), s);
  if (it == copy.sources_.end() || !(*it == s)) copy.sources_.insert(it, s);
  return copy;
}

Indicator Indicator::with_first_seen(Timestamp t) const {
  Indicator copy = *this;
  copy.first_seen_ = t;
  return copy;
}

Indicator Indicator::with_verification(const VerificationStatus& v) const {
  Indicator copy = *this;
  copy.verification_[v.provider] = v;
  return copy;
}

// ---------------------------------------------------------------------------
// Spans and verdicts

std::string_view to_string(EntityLabel l) {
  switch (l) {
    case EntityLabel::Malware: return "Malware";
    case EntityLabel::Indicator: return "Indicator";
    case EntityLabel::System: return "System";
    case EntityLabel::Organization: return "Organization";
    case EntityLabel::Vulnerability: return "Vulnerability";
  }
  return "?";
}

std::optional<EntityLabel> parse_entity_label(std::string_view s) {
  for (auto l : kAllEntityLabels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

EntitySpan make_span(EntityLabel label, std::size_t start, std::size_t end,
                     std::string_view host) {
  if (!(start < end && end <= host.size())) {
    throw ValidationError("span [" + std::to_string(start) + ", " + std::to_string(end) +
                          ") outside text of length " + std::to_string(host.size()));
  }
  return EntitySpan{label, start, end, std::string(host.substr(start, end - start))};
}

std::string_view to_string(Granularity g) {
  return g == Granularity::sentence ? "sentence" : "page";
}

Granularity parse_granularity(std::string_view s) {
  if (s == "sentence") return Granularity::sentence;
  if (s == "page") return Granularity::page;
  throw ValidationError("unknown granularity '" + std::string(s) + "'");
}

RelevanceVerdict make_verdict(double score, double threshold, Granularity g,
                              std::string model_id) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError("relevance score outside [0, 1]");
  }
  return RelevanceVerdict{score, score >= threshold, g, std::move(model_id)};
}

// ---------------------------------------------------------------------------
// Document

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out += kHex[b >> 4];
    out += kHex[b & 0xf];
  }
  return out;
}

std::string Document::compute_id(const Source& source, std::string_view locator,
                                 std::string_view raw_text) {
  std::string buf;
  auto field = [&buf](std::string_view f) {
    buf += std::to_string(f.size());
    buf += ':';
    buf += f;
  };
  field(source.to_string());
  field(locator);
  field(raw_text);
  return sha256_hex(buf);
}

Document Document::create(const Source& source, std::string locator, std::string raw_text,
                          Timestamp fetched_at) {
  Document d;
  d.id_ = compute_id(source, locator, raw_text);
  d.source_ = source;
  d.locator_ = std::move(locator);
  d.raw_text_ = std::move(raw_text);
  d.fetched_at_ = fetched_at;
  return d;
}

Document Document::with_relevance(RelevanceVerdict v) const {
  Document copy = *this;
  copy.relevance_ = std::move(v);
  return copy;
}

Document Document::with_indicators(std::vector<Indicator> inds) const {
  Document copy = *this;
  copy.indicators_ = std::move(inds);
  return copy;
}

Document Document::with_context(std::vector<EntitySpan> spans) const {
  Document copy = *this;
  copy.context_ = std::move(spans);
  return copy;
}

Document Document::without_text() const {
  Document copy = *this;
  copy.raw_text_.clear();
  return copy;
}

bool operator==(const Document& a, const Document& b) {
  if (a.id_ != b.id_ || !(a.source_ == b.source_) || a.locator_ != b.locator_ ||
      a.raw_text_ != b.raw_text_ || a.relevance_ != b.relevance_ || a.context_ != b.context_ ||
      a.indicators_.size() != b.indicators_.size()) {
    return false;
  }
  using namespace std::chrono;
  if (duration_cast<milliseconds>(a.fetched_at_ - b.fetched_at_).count() != 0) return false;
  return std::equal(a.indicators_.begin(), a.indicators_.end(), b.indicators_.begin());
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

std::string canonical_dump(const json& j) {
  // nlohmann::json stores objects in std::map, so keys come out sorted.
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

json to_json(const Indicator& ind) {
  json j;
  j["value"] = ind.value();
  j["kind"] = to_string(ind.kind());
  j["first_seen"] = format_rfc3339(ind.first_seen());
  json sources = json::array();
  for (const auto& s : ind.sources()) sources.push_back(s.to_string());
  j["sources"] = std::move(sources);
  j["defanged_form"] = ind.defanged_form() ? json(*ind.defanged_form()) : json(nullptr);
  json ver = json::object();
  for (const auto& [name, st] : ind.verification()) {
    ver[name] = {{"found", to_string(st.found)},
                 {"checked_at", format_rfc3339(st.checked_at)},
                 {"ttl_s", st.ttl.count()}};
  }
  j["verification"] = std::move(ver);
  j["non_routable"] = ind.non_routable();
  return j;
}

Indicator indicator_from_json(const json& j) {
  try {
    std::optional<std::string> defanged;
    if (j.contains("defanged_form") && !j["defanged_form"].is_null()) {
      defanged = j["defanged_form"].get<std::string>();
    }
    auto ind = Indicator::create(j.at("value").get<std::string>(),
                                 parse_indicator_type(j.at("kind").get<std::string>()),
                                 parse_rfc3339(j.at("first_seen").get<std::string>()), defanged);
    if (j.contains("sources")) {
      for (const auto& s : j["sources"]) ind = ind.with_source(Source::parse(s.get<std::string>()));
    }
    if (j.contains("verification")) {
      for (const auto& [name, st] : j["verification"].items()) {
        VerificationStatus v;
        v.provider = name;
        auto f = st.at("found").get<std::string>();
        v.found = f == "found" ? Found::yes : f == "not_found" ? Found::no : Found::unknown;
        v.checked_at = parse_rfc3339(st.at("checked_at").get<std::string>());
        v.ttl = std::chrono::seconds(st.at("ttl_s").get<long long>());
        ind = ind.with_verification(v);
      }
    }
    return ind;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed indicator record: ") + e.what());
  }
}

json to_json(const EntitySpan& s) {
  return {{"label", to_string(s.label)}, {"start", s.start}, {"end", s.end}, {"text", s.text}};
}

json to_json(const RelevanceVerdict& v) {
  return {{"score", v.score},
          {"relevant", v.relevant},
          {"granularity", to_string(v.granularity)},
          {"model_id", v.model_id}};
}

RelevanceVerdict verdict_from_json(const json& j) {
  RelevanceVerdict v;
  v.score = j.at("score").get<double>();
  v.relevant = j.at("relevant").get<bool>();
  v.granularity = parse_granularity(j.at("granularity").get<std::string>());
  v.model_id = j.at("model_id").get<std::string>();
  return v;
}

json to_json(const Document& doc) {
  json j;
  j["id"] = doc.id();
  j["source"] = doc.source().to_string();
  j["locator"] = doc.locator();
  j["raw_text"] = doc.raw_text();
  j["fetched_at"] = format_rfc3339(doc.fetched_at());
  j["relevance"] = doc.relevance() ? to_json(*doc.relevance()) : json(nullptr);
  json inds = json::array();
  for (const auto& i : doc.indicators()) inds.push_back(to_json(i));
  j["indicators"] = std::move(inds);
  json ctx = json::array();
  for (const auto& s : doc.context()) ctx.push_back(to_json(s));
  j["context"] = std::move(ctx);
  return j;
}

Document document_from_json(const json& j) {
  try {
    Document d;
    d.id_ = j.at("id").get<std::string>();
    d.source_ = Source::parse(j.at("source").get<std::string>());
    d.locator_ = j.at("locator").get<std::string>();
    d.raw_text_ = j.at("raw_text").get<std::string>();
    d.fetched_at_ = parse_rfc3339(j.at("fetched_at").get<std::string>());
    if (j.contains("relevance") && !j["relevance"].is_null()) {
      d.relevance_ = verdict_from_json(j["relevance"]);
    }
    if (j.contains("indicators")) {
      for (const auto& i : j["indicators"]) d.indicators_.push_back(indicator_from_json(i));
    }
    if (j.contains("context")) {
      for (const auto& s : j["context"]) {
        auto label = parse_entity_label(s.at("label").get<std::string>());
        if (!label) throw ValidationError("unknown entity label in document context");
        d.context_.push_back(EntitySpan{*label, s.at("start").get<std::size_t>(),
                                        s.at("end").get<std::size_t>(),
                                        s.at("text").get<std::string>()});
      }
    }
    return d;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed document record: ") + e.what());
  }
}

}  // namespace tstem
