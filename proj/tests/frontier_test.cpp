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


#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <mutex>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "tstem/error.hpp"
#include "tstem/frontier.hpp"

namespace tstem {
namespace {

using std::chrono::milliseconds;

SpiderProfile open_profile(std::vector<std::string> seeds, Millis delay = Millis(1000), int depth = 3) {
  auto p = spider_preset(Spider::ache);
  p.seeds = std::move(seeds);
  p.min_delay = delay;
  p.max_depth = depth;
  return p;
}

CrawlTask task(std::string url, int depth = 1, Spider s = Spider::ache) {
  return CrawlTask{std::move(url), s, depth, std::string("http://seed.example/"), Timestamp{}};
}

TEST(NormalizeUrl, Examples) {
  EXPECT_EQ(normalize_url("HTTP://Example.COM:80/a/../b#x"), "http://example.com/b");
  EXPECT_EQ(normalize_url("http://example.com/b"), "http://example.com/b");
  EXPECT_EQ(normalize_url("https://a.com:443"), "https://a.com/");
  EXPECT_EQ(normalize_url("http://a.com:8080/%7euser"), "http://a.com:8080/%7Euser");
  EXPECT_THROW(normalize_url("not a url"), ValidationError);
  EXPECT_THROW(normalize_url("ftp://a.com/"), ValidationError);
  EXPECT_THROW(normalize_url("http:/nohost"), ValidationError);
}

TEST(NormalizeUrl, IsIdempotent) {
  for (const char* u : {"HTTP://A.b/./x/../y?q#f", "https://[::1]:443/", "http://x.onion/a/b/../c"}) {
    auto once = normalize_url(u);
    EXPECT_EQ(normalize_url(once), once);
  }
}

TEST(Frontier, DuplicateRejected) {
  Frontier f({open_profile({"http://seed.example/"})});
  EXPECT_TRUE(f.enqueue(task("http://a.com/x")).accepted);
  auto r = f.enqueue(task("http://a.com/x"));
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.reason, RejectReason::duplicate);
}

TEST(Frontier, OnionOutOfScopeForClearWeb) {
  Frontier f({open_profile({"http://seed.example/"})});
  auto r = f.enqueue(task("http://abcdefghijklmnop.onion/"));
  EXPECT_EQ(r.reason, RejectReason::scope);
}

TEST(Frontier, DepthLimit) {
  Frontier f({open_profile({"http://seed.example/"}, Millis(0), 2)});
  EXPECT_TRUE(f.enqueue(task("http://a.com/2", 2)).accepted);
  EXPECT_EQ(f.enqueue(task("http://a.com/3", 3)).reason, RejectReason::depth);
}

TEST(Frontier, NonCanonicalAndUnknownSpider) {
  Frontier f({open_profile({"http://seed.example/"})});
  EXPECT_EQ(f.enqueue(task("HTTP://a.com/x")).reason, RejectReason::invalid);
  EXPECT_EQ(f.enqueue(task("http://a.com/x", 1, Spider::wiki1)).reason, RejectReason::unknown_spider);
  auto st = f.stats();
  EXPECT_EQ(st.rejected["invalid"], 1u);
  EXPECT_EQ(st.rejected["unknown_spider"], 1u);
}

TEST(Frontier, OnionOnlyProfile) {
  auto p = spider_preset(Spider::ahmia);
  p.seeds = {"http://abcdefghijklmnop.onion/"};
  Frontier f({p});
  EXPECT_TRUE(f.enqueue(task("http://zzzzzzzzzzzzzzzz.onion/x", 1, Spider::ahmia)).accepted);
  EXPECT_EQ(f.enqueue(task("http://clear.com/x", 1, Spider::ahmia)).reason, RejectReason::scope);
  EXPECT_EQ(p.source_kind(), SourceKind::dark_web);
}

TEST(Frontier, HostAllowlist) {
  auto p = spider_preset(Spider::sitemap);
  p.seeds = {"http://docs.example.org/"};
  p.allowed_hosts = {"docs.example.org", ".blog.example.org"};
  EXPECT_TRUE(p.in_scope("http://docs.example.org/a"));
  EXPECT_TRUE(p.in_scope("http://x.blog.example.org/a"));
  EXPECT_TRUE(p.in_scope("http://blog.example.org/a"));
  EXPECT_FALSE(p.in_scope("http://example.org/a"));
  p.allowed_hosts.clear();
  EXPECT_TRUE(p.in_scope("http://docs.example.org/b"));
  EXPECT_FALSE(p.in_scope("http://x.blog.example.org/a"));
}

TEST(Frontier, ProfileValidation) {
  auto p = spider_preset(Spider::ache);
  EXPECT_THROW(p.validate(), ConfigError);  // no seeds
  p.seeds = {"http://abcdefghijklmnop.onion/"};
  EXPECT_THROW(p.validate(), ConfigError);  // seed out of scope
  p.seeds = {"http://a.com/"};
  p.keywords = {"(unclosed"};
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Frontier, SameHostIsDeferredByMinDelay) {
  Frontier f({open_profile({"http://seed.example/"}, Millis(1000))});
  ASSERT_TRUE(f.enqueue(task("http://a.com/1")).accepted);
  ASSERT_TRUE(f.enqueue(task("http://a.com/2")).accepted);
  Timestamp t0{std::chrono::seconds(100)};
  auto first = f.next_ready(t0);
  ASSERT_TRUE(first);
  EXPECT_EQ(first->url, "http://a.com/1");
  EXPECT_FALSE(f.next_ready(t0 + milliseconds(500)));
  EXPECT_EQ(f.next_eligible(t0 + milliseconds(500)), t0 + milliseconds(1000));
  auto second = f.next_ready(t0 + milliseconds(1000));
  ASSERT_TRUE(second);
  EXPECT_EQ(second->url, "http://a.com/2");
}

TEST(Frontier, DifferentHostsDispatchImmediately) {
  Frontier f({open_profile({"http://seed.example/"}, Millis(1000))});
  f.enqueue(task("http://a.com/1"));
  f.enqueue(task("http://b.com/1"));
  Timestamp t0{std::chrono::seconds(5)};
  EXPECT_TRUE(f.next_ready(t0));
  EXPECT_TRUE(f.next_ready(t0));
  EXPECT_FALSE(f.next_ready(t0));
}

TEST(Frontier, EmptyReturnsNone) {
  Frontier f({open_profile({"http://seed.example/"})});
  EXPECT_FALSE(f.next_ready(Timestamp{}));
  EXPECT_FALSE(f.next_eligible(Timestamp{}));
  EXPECT_TRUE(f.empty());
}

TEST(Frontier, SeedsBeforeDiscoveredThenFifo) {
  Frontier f({open_profile({"http://s1.com/", "http://s2.com/"}, Millis(0))});
  f.enqueue(task("http://d1.com/"));
  f.enqueue(task("http://d2.com/"));
  f.seed(Timestamp{});
  std::vector<std::string> order;
  while (auto t = f.next_ready(Timestamp{})) order.push_back(t->url);
  EXPECT_EQ(order, (std::vector<std::string>{"http://s1.com/", "http://s2.com/", "http://d1.com/",
                                             "http://d2.com/"}));
}

// 1000 urls over 10 hosts under a simulated clock: nothing dispatched twice,
// per-host gaps respect the delay, and accepted = dispatched + pending.
TEST(Frontier, SimulatedCrawlProperties) {
  const Millis delay(250);
  std::mt19937 rng(17);
  Frontier f({open_profile({"http://seed.example/"}, delay, 5)});
  std::vector<std::string> urls;
  for (int i = 0; i < 1000; ++i) {
    urls.push_back("http://h" + std::to_string(i % 10) + ".test/p" + std::to_string(i));
  }
  std::set<std::string> dispatched;
  std::map<std::string, Timestamp> last;
  Timestamp now{std::chrono::seconds(1)};
  std::size_t next_url = 0;
  std::uint64_t accepted = 0;
  while (next_url < urls.size() || !f.empty()) {
    for (int k = static_cast<int>(rng() % 5); k > 0 && next_url < urls.size(); --k) {
      const auto& u = urls[next_url++];
      accepted += f.enqueue(task(u, 1)).accepted;
      if (rng() % 4 == 0) {
        EXPECT_FALSE(f.enqueue(task(u, 1)).accepted);
      }
    }
    while (auto t = f.next_ready(now)) {
      ASSERT_TRUE(dispatched.insert(t->url).second) << t->url;
      auto host = url_host(t->url);
      if (auto it = last.find(host); it != last.end()) {
        EXPECT_GE(now - it->second, delay);
      }
      last[host] = now;
    }
    auto st = f.stats();
    EXPECT_EQ(st.accepted, st.dispatched + st.pending);
    now += milliseconds(rng() % 200);
  }
  EXPECT_EQ(accepted, 1000u);
  EXPECT_EQ(dispatched.size(), 1000u);
}

TEST(Frontier, ConcurrentWorkersNeverShareAUrl) {
  Frontier f({open_profile({"http://seed.example/"}, Millis(0))});
  for (int i = 0; i < 400; ++i) f.enqueue(task("http://h" + std::to_string(i % 7) + ".test/" + std::to_string(i)));
  std::mutex mu;
  std::set<std::string> seen;
  std::size_t dupes = 0;
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&] {
      while (auto t = f.next_ready(Timestamp{})) {
        std::lock_guard lock(mu);
        if (!seen.insert(t->url).second) ++dupes;
      }
    });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(dupes, 0u);
  EXPECT_EQ(seen.size(), 400u);
}

TEST(Frontier, VisitedSnapshotRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "tstem_frontier_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "visited.txt";
  {
    Frontier f({open_profile({"http://seed.example/"})});
    f.enqueue(task("http://a.com/1"));
    f.enqueue(task("http://a.com/2"));
    f.save_visited(path);
  }
  Frontier g({open_profile({"http://seed.example/"})});
  EXPECT_EQ(g.load_visited(path), 2u);
  EXPECT_EQ(g.enqueue(task("http://a.com/1")).reason, RejectReason::duplicate);
  EXPECT_TRUE(g.enqueue(task("http://a.com/3")).accepted);
  std::filesystem::remove_all(dir);
}

TEST(LexicalPrefilter, KeywordFixture) {
  SpiderProfile p = open_profile({"http://seed.example/"});
  p.keywords = {"malware", "C2", "CVE-"};
  auto substring_oracle = [&](const std::string& text) {
    auto lower = [](std::string s) {
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
      return s;
    };
    return std::any_of(p.keywords.begin(), p.keywords.end(),
                       [&](const std::string& k) { return lower(text).find(lower(k)) != std::string::npos; });
  };
  EXPECT_TRUE(lexical_prefilter("new CVE-2023 dump", p));
  EXPECT_FALSE(lexical_prefilter("cooking recipes", p));
  std::mt19937 rng(8);
  const std::vector<std::string> words = {"cve", "-", "mal", "ware", "c", "2", "recipe", " ", "C2"};
  for (int i = 0; i < 2000; ++i) {
    std::string text;
    for (int k = static_cast<int>(rng() % 6); k > 0; --k) text += words[rng() % words.size()];
    EXPECT_EQ(lexical_prefilter(text, p), substring_oracle(text)) << text;
  }
  p.keywords.clear();
  EXPECT_TRUE(lexical_prefilter("cooking recipes", p));
}

TEST(LexicalPrefilter, RegexPatterns) {
  KeywordFilter kf({"CVE-\\d{4}-\\d+", "\\bAPT ?\\d+"});
  EXPECT_TRUE(kf.matches("see cve-2021-44228"));
  EXPECT_TRUE(kf.matches("APT 28 again"));
  EXPECT_FALSE(kf.matches("CVE-20 and RAPT28"));
}

TEST(ExtractLinks, ResolvesAgainstBase) {
  auto r = extract_links(R"(<a href="/x">)", "http://a.com");
  EXPECT_EQ(r.urls, std::vector<std::string>{"http://a.com/x"});
}

TEST(ExtractLinks, NoAnchors) { EXPECT_TRUE(extract_links("<p>hi</p>", "http://a.com/").urls.empty()); }

TEST(ExtractLinks, DedupMalformedAndIgnored) {
  auto r = extract_links(R"html(<a href="b">1</a><a href="./b#frag">2</a><a href="http://A.com:80/b">3</a>
      <a href="mailto:x@y.z">m</a><a href="javascript:void(0)">j</a><a href="http://bad host/">x</a>
      <a href="../c?q=1">c</a>)html",
                         "http://a.com/dir/page");
  EXPECT_EQ(r.urls, (std::vector<std::string>{"http://a.com/dir/b", "http://a.com/b", "http://a.com/c?q=1"}));
  EXPECT_EQ(r.ignored, 2u);
  EXPECT_EQ(r.malformed, 1u);
}

TEST(SeedFile, ParsesCommentsAndBlankLines) {
  auto seeds = parse_seed_file("# seeds\n\nHTTP://A.com/x  # trailing\n  https://b.org\n");
  EXPECT_EQ(seeds, (std::vector<std::string>{"http://a.com/x", "https://b.org/"}));
  try {
    parse_seed_file("http://ok.com/\nnot a url\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ProfileJson, OverridesPreset) {
  auto p = profile_from_json({{"name", "sitemap"},
                              {"seeds", {"HTTP://Docs.Example.org"}},
                              {"max_depth", 1},
                              {"min_delay_ms", 50},
                              {"keywords", {"ioc"}}});
  EXPECT_EQ(p.name, Spider::sitemap);
  EXPECT_EQ(p.scope, ScopeRule::host_allowlist);
  EXPECT_EQ(p.seeds, std::vector<std::string>{"http://docs.example.org/"});
  EXPECT_EQ(p.max_depth, 1);
  EXPECT_EQ(p.min_delay, Millis(50));
  EXPECT_NO_THROW(p.validate());
  EXPECT_THROW(profile_from_json({{"name", "nope"}}), ConfigError);
}

TEST(Robots, LongestMatchWins) {
  auto r = RobotsRules::parse(
      "User-agent: other\nDisallow: /\n\n"
      "User-agent: *\nDisallow: /private\nAllow: /private/public\nDisallow: /*.pdf$\n",
      "tstem/0.1");
  EXPECT_TRUE(r.allowed("/"));
  EXPECT_FALSE(r.allowed("/private/x"));
  EXPECT_TRUE(r.allowed("/private/public/y"));
  EXPECT_FALSE(r.allowed("/docs/a.pdf"));
  EXPECT_TRUE(r.allowed("/docs/a.pdf?x"));
}

TEST(Robots, SpecificAgentGroup) {
  auto r = RobotsRules::parse("User-agent: *\nDisallow: /\n\nUser-agent: tstem\nDisallow: /tmp\n", "tstem/0.1");
  EXPECT_TRUE(r.allowed("/a"));
  EXPECT_FALSE(r.allowed("/tmp/a"));
  EXPECT_TRUE(RobotsRules().allowed("/anything"));
}

}  // namespace
}  // namespace tstem
