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

#include <random>

#include <gtest/gtest.h>

#include "tstem/error.hpp"
#include "tstem/model.hpp"

namespace tstem {
namespace {

bool has_violation(const std::vector<std::string>& v, std::string_view needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

TEST(IndicatorKey, LowercasesMixedCaseMd5) {
  EXPECT_EQ(indicator_key("D282E137DB2D55AE8FD3A299136F277E", IndicatorType::md5),
            "md5:d282e137db2d55ae8fd3a299136f277e");
}

TEST(IndicatorKey, UrlKeepsValue) {
  EXPECT_EQ(indicator_key("http://193.38.55.43/", IndicatorType::url),
            "url:http://193.38.55.43/");
}

TEST(IndicatorKey, EmptyValueIsValidationError) {
  EXPECT_THROW(indicator_key("", IndicatorType::domain), ValidationError);
}

TEST(IndicatorKey, UrlLowercasesSchemeAndHostOnly) {
  EXPECT_EQ(indicator_key("HTTPS://NftUart.COM/InvoiceTemplate.dotm", IndicatorType::url),
            "url:https://nftuart.com/InvoiceTemplate.dotm");
}

TEST(IndicatorKey, TrailingSlashIsSignificant) {
  EXPECT_NE(indicator_key("http://a.com/", IndicatorType::url),
            indicator_key("http://a.com", IndicatorType::url));
}

TEST(IndicatorKey, Ipv6UsesCompressedForm) {
  EXPECT_EQ(indicator_key("2001:DB8:0:0:0:0:0:1", IndicatorType::ipv6), "ipv6:2001:db8::1");
}

TEST(IndicatorKey, CveIsUppercased) {
  EXPECT_EQ(indicator_key("cve-2021-44228", IndicatorType::cve), "cve:CVE-2021-44228");
}

TEST(IndicatorKey, EmailLowercasesDomainOnly) {
  EXPECT_EQ(indicator_key("Ops.Team@Evil-Mail.NET", IndicatorType::email),
            "email:Ops.Team@evil-mail.net");
}

TEST(ValidateIndicator, OctetOutOfRange) {
  auto v = validate_indicator("999.1.1.1", IndicatorType::ipv4);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(has_violation(v, "octet out of range"));
}

TEST(ValidateIndicator, Sha256FromSampleIsValid) {
  EXPECT_TRUE(validate_indicator(
                  "cd09bf437f46210521ad5c21891414f236e29aa6869906820c7c9dc2b565d8be",
                  IndicatorType::sha256)
                  .empty());
}

TEST(ValidateIndicator, ShortMd5) {
  auto v = validate_indicator("abcd", IndicatorType::md5);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v.front(), "length != 32");
}

TEST(ValidateIndicator, ReportsEveryViolatedRule) {
  auto v = validate_indicator("xyz", IndicatorType::sha1);
  EXPECT_TRUE(has_violation(v, "length != 40"));
  EXPECT_TRUE(has_violation(v, "non-hex"));
}

TEST(ValidateIndicator, DefangedValueRejected) {
  EXPECT_TRUE(has_violation(validate_indicator("evil[.]com", IndicatorType::domain), "defang"));
  EXPECT_TRUE(has_violation(validate_indicator("hxxp://a.com/", IndicatorType::url), "defang"));
}

TEST(ValidateIndicator, DomainRules) {
  EXPECT_TRUE(validate_indicator("expiredaccessreviewnow.com", IndicatorType::domain).empty());
  EXPECT_TRUE(validate_indicator("wordpress-123380-0.cloudclusters.net", IndicatorType::domain)
                  .empty());
  EXPECT_TRUE(validate_indicator(
                  "bafybeicrq42t3uoi53hf2hhntwq74hfapj5rutrp6ejlidohaghypibnyy.ipfs.dweb.link",
                  IndicatorType::domain)
                  .empty());
  EXPECT_TRUE(has_violation(validate_indicator("setup.exe", IndicatorType::domain), "allowlist"));
  EXPECT_TRUE(has_violation(validate_indicator("localhost", IndicatorType::domain), "no dot"));
  EXPECT_TRUE(has_violation(validate_indicator("a.b1", IndicatorType::domain), "two letters"));
  EXPECT_TRUE(has_violation(validate_indicator("-a.com", IndicatorType::domain), "'-'"));
}

TEST(ValidateIndicator, CveShape) {
  EXPECT_TRUE(validate_indicator("CVE-2023-12345", IndicatorType::cve).empty());
  EXPECT_FALSE(validate_indicator("CVE-2023-123", IndicatorType::cve).empty());
  EXPECT_FALSE(validate_indicator("CVE-23-1234", IndicatorType::cve).empty());
}

TEST(ValidateIndicator, UrlNeedsHost) {
  EXPECT_TRUE(validate_indicator("https://t.co/yYu1KoZvO1", IndicatorType::url).empty());
  EXPECT_FALSE(validate_indicator("http://", IndicatorType::url).empty());
  EXPECT_FALSE(validate_indicator("not a url", IndicatorType::url).empty());
}

TEST(Indicator, NonRoutableIsFlaggedNotDropped) {
  auto priv = Indicator::create("10.1.2.3", IndicatorType::ipv4);
  EXPECT_TRUE(priv.non_routable());
  auto pub = Indicator::create("157.90.132.182", IndicatorType::ipv4);
  EXPECT_FALSE(pub.non_routable());
  EXPECT_TRUE(Indicator::create("198.51.100.7", IndicatorType::ipv4).non_routable());
  EXPECT_TRUE(Indicator::create("fe80::1", IndicatorType::ipv6).non_routable());
}

TEST(Indicator, EqualityByKindAndValue) {
  auto a = Indicator::create("D282E137DB2D55AE8FD3A299136F277E", IndicatorType::md5);
  auto b = Indicator::create("d282e137db2d55ae8fd3a299136f277e", IndicatorType::md5)
               .with_source(Source::twitter());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.key(), b.key());
}

TEST(Indicator, SourcesAreASet) {
  auto ind = Indicator::create("evil.com", IndicatorType::domain)
                 .with_source(Source::twitter())
                 .with_source(Source::web(SourceKind::dark_web, Spider::ahmia))
                 .with_source(Source::twitter());
  EXPECT_EQ(ind.sources().size(), 2u);
}

TEST(Indicator, JsonRoundTrip) {
  auto t = parse_rfc3339("2023-03-01T10:00:00.250Z");
  auto ind = Indicator::create("http://88.119.169.53/", IndicatorType::url, t,
                               "http://88[.]119[.]169[.]53/")
                 .with_source(Source::twitter())
                 .with_verification({"virustotal", Found::yes, t, std::chrono::hours(24)});
  auto back = indicator_from_json(nlohmann::json::parse(canonical_dump(to_json(ind))));
  EXPECT_EQ(back, ind);
  EXPECT_EQ(back.defanged_form(), ind.defanged_form());
  EXPECT_EQ(back.sources(), ind.sources());
  EXPECT_EQ(back.verification(), ind.verification());
  EXPECT_EQ(back.first_seen(), t);
}

TEST(Source, SpiderPresentIffWeb) {
  EXPECT_THROW(Source::web(SourceKind::twitter, Spider::ache), ValidationError);
  EXPECT_THROW(Source::parse("clear_web"), ValidationError);
  EXPECT_EQ(Source::parse("dark_web/ahmia"), Source::web(SourceKind::dark_web, Spider::ahmia));
  EXPECT_EQ(Source::parse("twitter"), Source::twitter());
}

TEST(EntitySpan, SliceInvariant) {
  std::string text = "Emotet hit Windows";
  auto s = make_span(EntityLabel::Malware, 0, 6, text);
  EXPECT_EQ(s.text, "Emotet");
  EXPECT_THROW(make_span(EntityLabel::System, 11, 11, text), ValidationError);
  EXPECT_THROW(make_span(EntityLabel::System, 11, 40, text), ValidationError);
}

TEST(Verdict, ThresholdIsInclusive) {
  EXPECT_TRUE(make_verdict(0.5, 0.5, Granularity::page, "m").relevant);
  EXPECT_FALSE(make_verdict(0.5 - 1e-6, 0.5, Granularity::page, "m").relevant);
  EXPECT_TRUE(make_verdict(0.5 + 1e-6, 0.5, Granularity::page, "m").relevant);
  EXPECT_THROW(make_verdict(1.5, 0.5, Granularity::page, "m"), ValidationError);
}

TEST(Document, IdIsPureFunctionOfInputs) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int round = 0; round < 200; ++round) {
    std::string text(rng() % 64, '\0');
    for (auto& c : text) c = static_cast<char>(byte(rng));
    auto src = round % 2 ? Source::twitter() : Source::web(SourceKind::clear_web, Spider::ache);
    auto a = Document::create(src, "loc" + std::to_string(round), text, Timestamp{});
    auto b = Document::create(src, "loc" + std::to_string(round), text,
                              Timestamp{} + std::chrono::hours(5));
    EXPECT_EQ(a.id(), b.id());
    auto c = Document::create(src, "loc" + std::to_string(round), text + "x", Timestamp{});
    EXPECT_NE(a.id(), c.id());
  }
  // Field boundaries are unambiguous.
  EXPECT_NE(Document::compute_id(Source::twitter(), "ab", "c"),
            Document::compute_id(Source::twitter(), "a", "bc"));
}

TEST(Document, JsonRoundTrip) {
  auto t = parse_rfc3339("2023-03-01T10:00:00Z");
  auto doc = Document::create(Source::web(SourceKind::dark_web, Spider::ahmia),
                              "http://abc.onion/x", "hash d282e137db2d55ae8fd3a299136f277e", t)
                 .with_relevance(make_verdict(0.9, 0.5, Granularity::page, "baseline"))
                 .with_indicators({Indicator::create("d282e137db2d55ae8fd3a299136f277e",
                                                     IndicatorType::md5, t)})
                 .with_context({make_span(EntityLabel::Malware, 0, 4, "hash d282")});
  auto back = document_from_json(nlohmann::json::parse(canonical_dump(to_json(doc))));
  EXPECT_EQ(back, doc);
}

TEST(Rfc3339, FormatAndParse) {
  auto t = parse_rfc3339("2023-04-01T12:30:45.123Z");
  EXPECT_EQ(format_rfc3339(t), "2023-04-01T12:30:45.123Z");
  EXPECT_EQ(parse_rfc3339("2023-04-01T14:30:45.123+02:00"), t);
  EXPECT_THROW(parse_rfc3339("2023-04-01 12:30"), ValidationError);
}

// Round trip: every valid indicator validates after canonicalization, and
// the key is idempotent.
TEST(IndicatorKey, IdempotentOverSamples) {
  const std::pair<const char*, IndicatorType> samples[] = {
      {"C2b8c65B0fBC9723E7af0EC5DD30746e77Ab3b65", IndicatorType::sha1},
      {"7593EC1357315431B04A17A55F01BD1295CA4B00CE8B910F8854A7E414E8F2CC", IndicatorType::sha256},
      {"HTTP://Example.COM/Path?Q=A", IndicatorType::url},
      {"Evil.Example.ORG", IndicatorType::domain},
      {"2001:0db8:0000::0001", IndicatorType::ipv6},
      {"cve-2019-0708", IndicatorType::cve},
      {"A@B.COM", IndicatorType::email},
      {"8.8.8.8", IndicatorType::ipv4},
  };
  for (auto [value, kind] : samples) {
    auto canon = canonicalize_indicator(value, kind);
    EXPECT_TRUE(validate_indicator(canon, kind).empty()) << value;
    EXPECT_EQ(indicator_key(canon, kind), indicator_key(value, kind)) << value;
  }
}

}  // namespace
}  // namespace tstem
