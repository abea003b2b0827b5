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
#include <chrono>
#include <thread>

#include <gtest/gtest.h>

#include "support/fixture_server.hpp"
#include "support/recording_transport.hpp"
#include "tstem/error.hpp"
#include "tstem/fetcher.hpp"
#include "tstem/html.hpp"

namespace tstem {
namespace {

using testing::RecordingTransport;

CrawlTask task(std::string url) { return CrawlTask{std::move(url), Spider::ahmia, 0, std::nullopt, Timestamp{}}; }

HttpResponse ok(std::string body, std::string type = "text/html") {
  HttpResponse r;
  r.status = 200;
  r.headers["content-type"] = std::move(type);
  r.body = std::move(body);
  return r;
}

HttpResponse redirect(std::string location, long status = 302) {
  HttpResponse r;
  r.status = status;
  r.headers["location"] = std::move(location);
  return r;
}

TEST(Fetcher, OnionWithoutProxyFailsBeforeAnyIo) {
  auto rec = std::make_shared<RecordingTransport>();
  ManualClock clock;
  Fetcher f(FetchConfig{}, rec, &clock);
  EXPECT_THROW(f.fetch(task("http://abcdefghijklmnop.onion/")), ConfigError);
  EXPECT_THROW(f.fetch_aux("http://abcdefghijklmnop.onion/robots.txt"), ConfigError);
  EXPECT_EQ(rec->count(), 0u);
}

TEST(Fetcher, OnionGoesThroughSocksProxy) {
  auto rec = std::make_shared<RecordingTransport>([](const HttpRequest&) { return ok("<p>x</p>"); });
  FetchConfig cfg;
  cfg.onion_proxy = "127.0.0.1:9050";
  cfg.http_proxy = "http://proxy.local:3128";
  ManualClock clock;
  Fetcher f(cfg, rec, &clock);
  f.fetch(task("http://abcdefghijklmnop.onion/"));
  f.fetch(task("http://clear.example/"));
  auto reqs = rec->requests();
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_EQ(reqs[0].proxy, "socks5h://127.0.0.1:9050");
  EXPECT_EQ(reqs[1].proxy, "http://proxy.local:3128");
}

TEST(Fetcher, ClearWebRedirectToOnionNeedsProxy) {
  auto rec = std::make_shared<RecordingTransport>(
      [](const HttpRequest&) { return redirect("http://abcdefghijklmnop.onion/x"); });
  ManualClock clock;
  Fetcher f(FetchConfig{}, rec, &clock);
  EXPECT_THROW(f.fetch(task("http://clear.example/")), ConfigError);
  ASSERT_EQ(rec->count(), 1u);
  EXPECT_EQ(rec->requests()[0].url, "http://clear.example/");
}

TEST(Fetcher, OnionToClearnetRedirectRejected) {
  auto rec = std::make_shared<RecordingTransport>([](const HttpRequest&) { return redirect("https://clear.example/"); });
  FetchConfig cfg;
  cfg.onion_proxy = "127.0.0.1:9050";
  ManualClock clock;
  Fetcher f(cfg, rec, &clock);
  EXPECT_THROW(f.fetch(task("http://abcdefghijklmnop.onion/")), PermanentError);
  EXPECT_EQ(rec->count(), 1u);
}

TEST(Fetcher, FollowsRelativeRedirectsUpToCap) {
  auto rec = std::make_shared<RecordingTransport>([](const HttpRequest& r) {
    if (r.url == "http://a.example/final") return ok("done");
    auto n = r.url.back() - '0';
    return redirect("/hop" + std::to_string(n + 1));
  });
  ManualClock clock;
  FetchConfig cfg;
  cfg.max_redirects = 5;
  Fetcher f(cfg, rec, &clock);
  EXPECT_THROW(f.fetch(task("http://a.example/hop0")), PermanentError);
  EXPECT_EQ(rec->count(), 6u);

  auto rec2 = std::make_shared<RecordingTransport>([](const HttpRequest& r) {
    if (r.url == "http://a.example/start") return redirect("../final#frag", 301);
    return ok("done", "text/plain");
  });
  Fetcher g(cfg, rec2, &clock);
  auto res = g.fetch(task("http://a.example/start"));
  EXPECT_EQ(res.final_url, "http://a.example/final");
  EXPECT_EQ(res.redirects, 1);
  EXPECT_EQ(res.body, "done");
  EXPECT_EQ(res.content_type, "text/plain");
}

TEST(Fetcher, ClientErrorIsPermanent) {
  auto rec = std::make_shared<RecordingTransport>([](const HttpRequest&) {
    HttpResponse r;
    r.status = 404;
    return r;
  });
  ManualClock clock;
  Fetcher f(FetchConfig{}, rec, &clock);
  try {
    f.fetch(task("http://a.example/"));
    FAIL();
  } catch (const PermanentError& e) {
    EXPECT_EQ(e.status(), 404);
  }
  EXPECT_EQ(rec->count(), 1u);
}

TEST(Fetcher, TransientFailuresRetriedWithBackoff) {
  std::atomic<int> calls{0};
  auto rec = std::make_shared<RecordingTransport>([&](const HttpRequest&) -> HttpResponse {
    if (++calls < 3) throw TransportError("connection reset", true);
    return ok("<p>fine</p>");
  });
  ManualClock clock;
  FetchConfig cfg;
  cfg.backoff = Millis(100);
  Fetcher f(cfg, rec, &clock);
  auto r = f.fetch(task("http://a.example/"));
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(clock.now(), Timestamp{} + Millis(300));  // 100 + 200
  EXPECT_EQ(r.elapsed, Millis(300));
}

TEST(Fetcher, ServerErrorsExhaustRetries) {
  auto rec = std::make_shared<RecordingTransport>([](const HttpRequest&) {
    HttpResponse r;
    r.status = 503;
    return r;
  });
  ManualClock clock;
  FetchConfig cfg;
  cfg.retries = 3;
  Fetcher f(cfg, rec, &clock);
  EXPECT_THROW(f.fetch(task("http://a.example/")), TransportError);
  EXPECT_EQ(rec->count(), 4u);
}

TEST(Fetcher, NonTransientTransportErrorNotRetried) {
  auto rec = std::make_shared<RecordingTransport>(
      [](const HttpRequest&) -> HttpResponse { throw TransportError("bad", false); });
  ManualClock clock;
  Fetcher f(FetchConfig{}, rec, &clock);
  EXPECT_THROW(f.fetch(task("http://a.example/")), TransportError);
  EXPECT_EQ(rec->count(), 1u);
}

TEST(Fetcher, ConfigValidation) {
  FetchConfig c;
  c.retries = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  auto j = nlohmann::json{{"onion_proxy", "127.0.0.1:9050"}, {"timeout_ms", 1000}, {"body_cap", 10}};
  auto parsed = fetch_config_from_json(j);
  EXPECT_EQ(parsed.onion_proxy, "127.0.0.1:9050");
  EXPECT_EQ(parsed.timeout, Millis(1000));
  EXPECT_EQ(parsed.body_cap, 10u);
  EXPECT_FALSE(fetch_config_from_json({{"onion_proxy", ""}}).onion_proxy);
  EXPECT_THROW(fetch_config_from_json({{"timeout_ms", "x"}}), ConfigError);
}

class FetcherServerTest : public ::testing::Test {
 protected:
  testing::FixtureServer server_;
  std::atomic<int> hits_{0};
};

TEST_F(FetcherServerTest, HtmlPageWithCappedBody) {
  std::string page = "<html><body><p>IP 1.2.3.4</p>" + std::string(100000, 'x') + "</body></html>";
  server_.server().Get("/page", [&](const httplib::Request&, httplib::Response& res) {
    ++hits_;
    res.set_content(page, "text/html; charset=utf-8");
  });
  server_.start();
  FetchConfig cfg;
  cfg.body_cap = 4096;
  Fetcher f(cfg);
  auto r = f.fetch(task(server_.url() + "/page"));
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.size(), 4096u);
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.body, page.substr(0, 4096));
  EXPECT_EQ(r.final_url, server_.url() + "/page");
  EXPECT_EQ(classify_content_type(r.content_type), ContentKind::html);
  EXPECT_GE(r.elapsed.count(), 0);
  EXPECT_NE(extract_text(r.body, r.content_type).text.find("IP 1.2.3.4"), std::string::npos);
}

TEST_F(FetcherServerTest, TimeoutIsTransientAfterExactlyNRetries) {
  server_.server().Get("/slow", [&](const httplib::Request&, httplib::Response& res) {
    ++hits_;
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("late", "text/plain");
  });
  server_.start();
  FetchConfig cfg;
  cfg.timeout = Millis(150);
  cfg.retries = 2;
  ManualClock clock;
  Fetcher f(cfg, nullptr, &clock);
  try {
    f.fetch(task(server_.url() + "/slow"));
    FAIL() << "expected a timeout";
  } catch (const TransportError& e) {
    EXPECT_TRUE(e.transient());
  }
  // Let the last handler register before counting.
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(hits_.load(), 3);
  EXPECT_EQ(clock.now(), Timestamp{} + Millis(500 + 1000));
}

}  // namespace
}  // namespace tstem
