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

#include "support/fixture_server.hpp"
#include "support/iob_oracle.hpp"
#include "tstem/error.hpp"
#include "tstem/ner.hpp"

namespace tstem {
namespace {

// Tokens "t0 t1 t2 ..." separated by single spaces.
std::vector<NerToken> make_tokens(std::size_t n, std::string* host = nullptr) {
  std::vector<NerToken> toks;
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) text += ' ';
    std::string w = "t" + std::to_string(i);
    toks.push_back({w, text.size(), text.size() + w.size()});
    text += w;
  }
  if (host) *host = text;
  return toks;
}

Gazetteer small_gazetteer() {
  return Gazetteer({{"Emotet", EntityLabel::Malware}, {"Windows", EntityLabel::System}});
}

TEST(DecodeIob, SimpleSentence) {
  std::string host = "Emotet infects Windows";
  std::vector<NerToken> toks = {{"Emotet", 0, 6}, {"infects", 7, 14}, {"Windows", 15, 22}};
  auto r = decode_iob(toks, {"B-Malware", "O", "B-System"}, host);
  ASSERT_EQ(r.spans.size(), 2u);
  EXPECT_EQ(r.spans[0], (EntitySpan{EntityLabel::Malware, 0, 6, "Emotet"}));
  EXPECT_EQ(r.spans[1], (EntitySpan{EntityLabel::System, 15, 22, "Windows"}));
  EXPECT_EQ(r.repairs, 0u);
}

TEST(DecodeIob, AllOutside) {
  auto toks = make_tokens(3);
  EXPECT_TRUE(decode_iob(toks, {"O", "O", "O"}).spans.empty());
}

TEST(DecodeIob, OrphanInsideIsRepaired) {
  std::string host;
  auto toks = make_tokens(2, &host);
  auto r = decode_iob(toks, {"I-Malware", "I-Malware"}, host);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].text, "t0 t1");
  EXPECT_EQ(r.repairs, 1u);
}

TEST(DecodeIob, Errors) {
  auto toks = make_tokens(2);
  EXPECT_THROW(decode_iob(toks, {"O"}), ValidationError);
  EXPECT_THROW(decode_iob(toks, {"O", "B-Person"}), ValidationError);
  EXPECT_THROW(decode_iob(toks, {"O", "X-Malware"}), ValidationError);
  std::vector<NerToken> bad = {{"a", 5, 6}, {"b", 2, 3}};
  EXPECT_THROW(decode_iob(bad, {"O", "O"}), ValidationError);
}

TEST(DecodeIob, TextWithoutHostUsesTokenLayout) {
  std::vector<NerToken> toks = {{"Cobalt", 0, 6}, {"Strike", 8, 14}};
  auto r = decode_iob(toks, {"B-Malware", "I-Malware"});
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].text, "Cobalt  Strike");
}

// Every tag sequence of length <= 4 over the 11-tag alphabet.
TEST(DecodeIob, ExhaustiveAgainstOracle) {
  const auto alphabet = oracle::all_iob_tags();
  std::size_t checked = 0;
  for (std::size_t len = 0; len <= 4; ++len) {
    std::string host;
    auto toks = make_tokens(len, &host);
    std::vector<std::size_t> idx(len, 0);
    while (true) {
      std::vector<std::string> tags;
      for (auto i : idx) tags.push_back(alphabet[i]);
      auto got = decode_iob(toks, tags, host);
      auto [want, repairs] = oracle::brute_decode(tags);
      ASSERT_EQ(got.spans.size(), want.size());
      for (std::size_t k = 0; k < want.size(); ++k) {
        EXPECT_EQ(std::string(to_string(got.spans[k].label)), want[k].label);
        EXPECT_EQ(got.spans[k].start, toks[want[k].first_token].start);
        EXPECT_EQ(got.spans[k].end, toks[want[k].last_token].end);
        EXPECT_EQ(got.spans[k].text, host.substr(got.spans[k].start, got.spans[k].end - got.spans[k].start));
        if (k) {
          EXPECT_LT(got.spans[k - 1].end, got.spans[k].start);
        }
      }
      EXPECT_EQ(got.repairs, repairs);
      ++checked;
      std::size_t p = 0;
      while (p < len && ++idx[p] == alphabet.size()) idx[p++] = 0;
      if (p == len) break;
    }
  }
  EXPECT_EQ(checked, 1u + 11u + 121u + 1331u + 14641u);
}

TEST(DecodeIob, RandomLongSequencesAreTotal) {
  const auto alphabet = oracle::all_iob_tags();
  std::mt19937 rng(21);
  for (int round = 0; round < 500; ++round) {
    std::size_t n = rng() % 60;
    std::string host;
    auto toks = make_tokens(n, &host);
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < n; ++i) tags.push_back(alphabet[rng() % alphabet.size()]);
    auto r = decode_iob(toks, tags, host);
    for (std::size_t k = 1; k < r.spans.size(); ++k) EXPECT_LE(r.spans[k - 1].end, r.spans[k].start);
    EXPECT_EQ(r.repairs, oracle::brute_decode(tags).second);
  }
}

TEST(TagFallback, GazetteerAndCve) {
  std::string text = "Emotet hit Windows via CVE-2021-44228";
  auto spans = tag_fallback(text, small_gazetteer());
  ASSERT_EQ(spans.size(), 3u);
  EXPECT_EQ(spans[0], (EntitySpan{EntityLabel::Malware, 0, 6, "Emotet"}));
  EXPECT_EQ(spans[1], (EntitySpan{EntityLabel::System, 11, 18, "Windows"}));
  EXPECT_EQ(spans[2], (EntitySpan{EntityLabel::Vulnerability, 23, 37, "CVE-2021-44228"}));
}

TEST(TagFallback, NothingFound) {
  EXPECT_TRUE(tag_fallback("nothing here", Gazetteer{}).empty());
}

TEST(TagFallback, HashBecomesIndicatorSpan) {
  std::string text = "d282e137db2d55ae8fd3a299136f277e";
  auto spans = tag_fallback(text, Gazetteer{});
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0], (EntitySpan{EntityLabel::Indicator, 0, 32, text}));
}

TEST(TagFallback, DefangedIndicatorSpanCoversOriginalSlice) {
  std::string text = "beacon to evil[.]com from windows hosts";
  auto spans = tag_fallback(text, small_gazetteer());
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].text, "evil[.]com");
  EXPECT_EQ(spans[1].label, EntityLabel::System);
  EXPECT_EQ(spans[1].text, "windows");
}

TEST(TagFallback, WholeWordsOnlyAndLongestTerm) {
  Gazetteer g({{"Windows", EntityLabel::System},
               {"Windows Server", EntityLabel::System},
               {"Conti", EntityLabel::Malware}});
  auto spans = tag_fallback("Continental runs Windows Server 2019", g);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].text, "Windows Server");
}

TEST(TagFallback, SpansSatisfySliceInvariantOnRandomText) {
  auto g = Gazetteer::load(TSTEM_DATA_DIR "/gazetteer.json");
  EXPECT_GE(g.size(), 40u);
  const std::vector<std::string> words = {"Emotet", "windows", "1.2.3.4", "CVE-2020-0601", "evil[.]com",
                                          "x", "Cobalt", "Strike", "APT28", "—", ",", "http://a.com/x"};
  std::mt19937 rng(4);
  for (int round = 0; round < 300; ++round) {
    std::string text;
    for (int i = 0, n = static_cast<int>(rng() % 25); i < n; ++i) text += words[rng() % words.size()] + (rng() % 3 ? " " : "");
    auto spans = tag_fallback(text, g);
    for (std::size_t k = 0; k < spans.size(); ++k) {
      EXPECT_LT(spans[k].start, spans[k].end);
      EXPECT_LE(spans[k].end, text.size());
      EXPECT_EQ(spans[k].text, text.substr(spans[k].start, spans[k].end - spans[k].start));
      if (k) {
        EXPECT_LE(spans[k - 1].end, spans[k].start);
      }
    }
    EXPECT_EQ(spans, tag_fallback(text, g));
  }
}

TEST(Gazetteer, ParseErrors) {
  EXPECT_THROW(Gazetteer::parse("[1]"), ConfigError);
  EXPECT_THROW(Gazetteer::parse(R"({"Person": ["x"]})"), ConfigError);
  EXPECT_THROW(Gazetteer::parse("{"), ConfigError);
}

class TagRemoteTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.server().Post("/v1/ner", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_ = nlohmann::json::parse(req.body);
      res.set_content(reply_, "application/json");
    });
    server_.start();
  }
  NerEndpoint ep() const { return {server_.url(), Millis(2000), 2}; }

  testing::FixtureServer server_;
  std::string reply_;
  nlohmann::json last_;
  int requests_ = 0;
};

TEST_F(TagRemoteTest, MisalignedSpanIsDropped) {
  reply_ = R"({"spans":[{"label":"Indicator","start":0,"end":9}]})";
  auto r = tag_remote(ep(), "198.51.100.7 seen");
  EXPECT_TRUE(r.spans.empty());
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(last_["text"], "198.51.100.7 seen");
}

TEST_F(TagRemoteTest, EmptyTextMakesNoRequest) {
  auto r = tag_remote(ep(), "");
  EXPECT_TRUE(r.spans.empty());
  EXPECT_EQ(requests_, 0);
}

TEST_F(TagRemoteTest, ExactSpanPassesThrough) {
  reply_ = R"({"spans":[{"label":"Indicator","start":0,"end":12}]})";
  auto r = tag_remote(ep(), "198.51.100.7 seen");
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0], (EntitySpan{EntityLabel::Indicator, 0, 12, "198.51.100.7"}));
  EXPECT_EQ(r.dropped, 0u);
}

TEST_F(TagRemoteTest, InvalidSpansCounted) {
  reply_ = R"({"spans":[
    {"label":"Person","start":0,"end":3},
    {"label":"Malware","start":5,"end":99},
    {"label":"Malware","start":4,"end":4},
    {"label":"Malware","start":0,"end":3,"text":"xyz"},
    {"label":"Malware","start":0,"end":3},
    {"label":"System","start":1,"end":7}
  ]})";
  auto r = tag_remote(ep(), "abc defgh");
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].text, "abc");
  EXPECT_EQ(r.dropped, 5u);
}

TEST_F(TagRemoteTest, MissingSpansIsProtocolError) {
  reply_ = R"({"entities":[]})";
  EXPECT_THROW(tag_remote(ep(), "x"), ProtocolError);
  reply_ = "not json";
  EXPECT_THROW(tag_remote(ep(), "x"), ProtocolError);
}

}  // namespace
}  // namespace tstem
