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


#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "support/fixture_server.hpp"
#include "tstem/error.hpp"
#include "tstem/sink.hpp"

namespace tstem {
namespace {

class SinkTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("tstem_sink_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  SinkConfig cfg() const {
    SinkConfig c;
    c.archive_dir = dir_;
    c.fsync = false;
    return c;
  }

  std::filesystem::path dir_;
};

Timestamp day(int d) { return parse_rfc3339("2023-04-0" + std::to_string(d) + "T12:00:00.000Z"); }

Document doc(int i) {
  return Document::create(Source::web(SourceKind::clear_web, Spider::ache), "http://a.com/" + std::to_string(i),
                          "text " + std::to_string(i), day(1));
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(BulkBody, TwoDocsFourLines) {
  auto body = format_bulk_body({{"a", {{"x", 1}}}, {"b", {{"y", 2}}}}, "tstem-iocs-2023.04.01");
  ASSERT_FALSE(body.empty());
  EXPECT_EQ(body.back(), '\n');
  auto lines = lines_of(body);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], R"({"index":{"_id":"a","_index":"tstem-iocs-2023.04.01"}})");
  EXPECT_EQ(lines[1], R"({"x":1})");
  for (const auto& l : lines) EXPECT_TRUE(nlohmann::json::accept(l)) << l;
}

TEST(BulkBody, NonAsciiIdStaysUtf8) {
  auto body = format_bulk_body({{"d\xC3\xA9j\xC3\xA0", {{"t", "\xE2\x9C\x93"}}}}, "i");
  EXPECT_NE(body.find("\"_id\":\"d\xC3\xA9j\xC3\xA0\""), std::string::npos);
  EXPECT_NE(body.find("\xE2\x9C\x93"), std::string::npos);
  EXPECT_EQ(body.find("\\u"), std::string::npos);
}

TEST(BulkBody, EmptyIsAnError) { EXPECT_THROW(format_bulk_body({}, "i"), ValidationError); }

TEST(IndexName, DateSuffix) {
  EXPECT_EQ(index_name("tstem-docs", day(3)), "tstem-docs-2023.04.03");
  EXPECT_EQ(index_name("tstem-docs", day(3), false), "tstem-docs");
}

TEST(MergeIndicator, UnionsAndKeepsEarliest) {
  auto a = Indicator::create("1.2.3.4", IndicatorType::ipv4, day(2)).with_source(Source::twitter());
  auto b = Indicator::create("1.2.3.4", IndicatorType::ipv4, day(1))
               .with_source(Source::web(SourceKind::dark_web, Spider::ahmia))
               .with_verification({"virustotal", Found::yes, day(3), std::chrono::hours(24)});
  auto m = merge_indicator(a, b);
  EXPECT_EQ(m.sources().size(), 2u);
  EXPECT_EQ(m.first_seen(), day(1));
  EXPECT_EQ(m.verification().at("virustotal").found, Found::yes);
  EXPECT_THROW(merge_indicator(a, Indicator::create("1.2.3.5", IndicatorType::ipv4)), ValidationError);
}

TEST_F(SinkTest, IndicatorRoundTrip) {
  auto ind = Indicator::create("http://193.38.55.43/", IndicatorType::url, day(1)).with_source(Source::twitter());
  {
    Sink s(cfg());
    auto ack = s.index(ind);
    EXPECT_FALSE(ack.duplicate);
    EXPECT_EQ(ack.id, ind.key());
  }
  std::ifstream f(dir_ / "indicators.ndjson");
  std::string line;
  ASSERT_TRUE(std::getline(f, line));
  auto back = indicator_from_json(nlohmann::json::parse(line));
  EXPECT_EQ(back, ind);
  EXPECT_EQ(canonical_dump(to_json(back)), canonical_dump(to_json(ind)));
  EXPECT_FALSE(std::getline(f, line));
}

TEST_F(SinkTest, DedupByKeyAndId) {
  Sink s(cfg());
  auto ind = Indicator::create("evil.com", IndicatorType::domain, day(1)).with_source(Source::twitter());
  EXPECT_FALSE(s.index(ind).duplicate);
  EXPECT_TRUE(s.index(ind).duplicate);
  EXPECT_FALSE(s.index(ind.with_source(Source::web(SourceKind::clear_web, Spider::ache))).duplicate);
  EXPECT_TRUE(s.index(Indicator::create("EVIL.com", IndicatorType::domain, day(2))).duplicate);
  EXPECT_FALSE(s.index(doc(1)).duplicate);
  EXPECT_TRUE(s.index(doc(1)).duplicate);
  auto st = s.stats();
  EXPECT_EQ(st.indicators, 1u);
  EXPECT_EQ(st.indicator_versions, 2u);
  EXPECT_EQ(st.documents, 1u);
  EXPECT_EQ(st.duplicates, 3u);
  EXPECT_EQ(s.indicator(ind.key())->sources().size(), 2u);
}

TEST_F(SinkTest, ReplayReconstructsAckedRecordsInOrder) {
  std::vector<std::string> acked;
  {
    Sink s(cfg());
    for (int i = 0; i < 20; ++i) {
      auto ack = s.index(doc(i % 15));
      if (!ack.duplicate) acked.push_back(ack.id);
    }
  }
  {
    std::ofstream f(dir_ / "documents.ndjson", std::ios::app);
    f << "{\"torn";
  }
  auto r = replay_archive(dir_);
  EXPECT_EQ(r.torn_lines, 1u);
  ASSERT_EQ(r.documents.size(), acked.size());
  for (std::size_t i = 0; i < acked.size(); ++i) EXPECT_EQ(r.documents[i].id(), acked[i]);

  Sink reopened(cfg());
  EXPECT_TRUE(reopened.index(doc(3)).duplicate);
  EXPECT_FALSE(reopened.index(doc(99)).duplicate);
  EXPECT_EQ(replay_archive(dir_).torn_lines, 0u);
  EXPECT_EQ(replay_archive(dir_).documents.size(), acked.size() + 1);
}

TEST_F(SinkTest, MetricsAppended) {
  Sink s(cfg());
  s.index_metrics({{"harvest_rate", 4.0}});
  s.index_metrics({{"harvest_rate", 3.0}});
  auto r = replay_archive(dir_);
  ASSERT_EQ(r.metrics.size(), 2u);
  EXPECT_EQ(r.metrics[1]["harvest_rate"], 3.0);
}

class SinkRemoteTest : public SinkTest {
 protected:
  void SetUp() override {
    SinkTest::SetUp();
    server_.server().Post("/_bulk", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      auto lines = lines_of(req.body);
      lines_ += lines.size();
      if (fail_) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"errors":false,"items":[]})", "application/json");
    });
    server_.start();
  }

  SinkConfig remote_cfg(std::size_t batch) const {
    auto c = cfg();
    c.remote_url = server_.url();
    c.batch_size = batch;
    c.flush_interval = Millis(60000);
    return c;
  }

  testing::FixtureServer server_;
  std::atomic<int> requests_{0};
  std::atomic<std::size_t> lines_{0};
  std::atomic<bool> fail_{false};
};

TEST_F(SinkRemoteTest, HundredRecordsBatchOfFiftyIsTwoRequests) {
  {
    Sink s(remote_cfg(50));
    for (int i = 0; i < 100; ++i) s.index(doc(i));
  }
  EXPECT_EQ(requests_.load(), 2);
  EXPECT_EQ(lines_.load(), 200u);
}

TEST_F(SinkRemoteTest, RemoteDownStillAcksLocallyAndQueueIsBounded) {
  fail_ = true;
  auto c = remote_cfg(10);
  c.max_pending = 25;
  Sink s(c);
  for (int i = 0; i < 40; ++i) EXPECT_FALSE(s.index(doc(i)).duplicate);
  EXPECT_THROW(s.flush_remote(), TransportError);
  // The background flusher makes exactly one attempt before backing off.
  while (s.stats().bulk_requests < 2) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  auto st = s.stats();
  EXPECT_EQ(st.documents, 40u);
  EXPECT_LE(st.remote_pending, 25u);
  EXPECT_EQ(st.remote_dropped, 15u);
  EXPECT_GE(st.bulk_failures, 1u);
  EXPECT_EQ(replay_archive(dir_).documents.size(), 40u);

  fail_ = false;
  while (s.stats().remote_pending > 0) s.flush_remote();
  EXPECT_EQ(s.stats().remote_indexed, 25u);
}

TEST_F(SinkTest, ConfigFromJson) {
  auto c = sink_config_from_json({{"archive_dir", "/tmp/x"}, {"batch_size", 7}, {"remote_url", ""}});
  EXPECT_EQ(c.batch_size, 7u);
  EXPECT_FALSE(c.remote_url);
  EXPECT_THROW(sink_config_from_json({{"batch_size", 7}}), ConfigError);
}

}  // namespace
}  // namespace tstem
