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

// Seeded generators for extraction and classification fixtures.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tstem/model.hpp"

namespace tstem::synthetic {

// Words with no indicator shape.
inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> w = {
      "the",     "report",  "analysts", "observed", "campaign", "traffic", "during",
      "weekend", "team",    "shared",   "notes",    "about",    "network", "activity",
      "users",   "were",    "asked",    "to",       "update",   "their",   "systems",
      "quickly", "after",   "several",  "alerts",   "from",     "vendor",  "and",
      "partner", "feeds",   "showed",   "unusual",  "patterns", "in",      "logs",
      "review",  "pending", "with",     "more",     "details",  "soon",    "today"};
  return w;
}

struct PlantedSample {
  std::string text;        // as written in the document (may be defanged)
  std::string key;         // expected indicator_key
};

// Indicator pool drawn from published sample values plus a few more kinds.
inline const std::vector<PlantedSample>& indicator_pool() {
  static const std::vector<PlantedSample> p = {
      {"http://88[.]119[.]169[.]53/", "url:http://88.119.169.53/"},
      {"http://88[.]119[.]169[.]56/", "url:http://88.119.169.56/"},
      {"http://168.100.8.160/", "url:http://168.100.8.160/"},
      {"https://t.co/yYu1KoZvO1", "url:https://t.co/yYu1KoZvO1"},
      {"http://193.38.55.43/", "url:http://193.38.55.43/"},
      {"hxxps://nftuart[.]com/InvoiceTemplate.dotm", "url:https://nftuart.com/InvoiceTemplate.dotm"},
      {"wordpress-123380-0.cloudclusters.net", "domain:wordpress-123380-0.cloudclusters.net"},
      {"expiredaccessreviewnow[.]com", "domain:expiredaccessreviewnow.com"},
      {"cd09bf437f46210521ad5c21891414f236e29aa6869906820c7c9dc2b565d8be",
       "sha256:cd09bf437f46210521ad5c21891414f236e29aa6869906820c7c9dc2b565d8be"},
      {"C2b8c65B0fBC9723E7af0EC5DD30746e77Ab3b65", "sha1:c2b8c65b0fbc9723e7af0ec5dd30746e77ab3b65"},
      {"d282e137db2d55ae8fd3a299136f277e", "md5:d282e137db2d55ae8fd3a299136f277e"},
      {"192a8bf8a804e09670156b4bbb745387", "md5:192a8bf8a804e09670156b4bbb745387"},
      {"157.90.132.182", "ipv4:157.90.132.182"},
      {"193[.]38[.]55[.]44", "ipv4:193.38.55.44"},
      {"CVE-2021-44228", "cve:CVE-2021-44228"},
      {"ops[at]evil-mail[.]net", "email:ops@evil-mail.net"},
      {"2001:db8:85a3::8a2e:370:7334", "ipv6:2001:db8:85a3::8a2e:370:7334"},
  };
  return p;
}

struct PlantedPage {
  std::string text;
  std::vector<std::string> expected_keys;  // planted order
};

// `tokens` filler words with `k` distinct indicators planted at random
// positions, single-space separated.
inline PlantedPage planted_page(std::uint32_t seed, int tokens, int k) {
  std::mt19937 rng(seed);
  const auto& pool = indicator_pool();
  std::vector<std::size_t> pick(pool.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  std::shuffle(pick.begin(), pick.end(), rng);
  pick.resize(static_cast<std::size_t>(k));

  std::vector<std::string> words;
  const auto& fw = filler_words();
  for (int i = 0; i < tokens - k; ++i) words.push_back(fw[rng() % fw.size()]);
  std::vector<int> slots(static_cast<std::size_t>(tokens));
  for (int i = 0; i < tokens; ++i) slots[static_cast<std::size_t>(i)] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  std::vector<int> at(slots.begin(), slots.begin() + k);
  std::sort(at.begin(), at.end());

  PlantedPage page;
  std::size_t next_filler = 0, next_plant = 0;
  for (int i = 0; i < tokens; ++i) {
    if (i) page.text += ' ';
    if (next_plant < at.size() && at[next_plant] == i) {
      const auto& s = pool[pick[next_plant]];
      page.text += s.text;
      page.expected_keys.push_back(s.key);
      ++next_plant;
    } else {
      page.text += words[next_filler++];
    }
  }
  return page;
}

// Noisy document built from indicators, near misses, markup and punctuation,
// glued with random separators (including none). At most `max_bytes` long.
inline std::string random_document(std::uint32_t seed, std::size_t max_bytes) {
  static const std::vector<std::string> frags = {
      "http://157.90.132.182/", "hxxp://88[.]119[.]169[.]53/", "https://t.co/ynfw0e3dgC",
      "(http://a.com/x)", "[https://b.org/y]", "http://c.net/p?q=1&r=2.", "HTTP://EXAMPLE.COM/Path",
      "ftp://files.example.ru/a.zip", "http://", "https://x", "<a href=\"http://d.io/z\">",
      "d282e137db2d55ae8fd3a299136f277e", "D282E137DB2D55AE8FD3A299136F277E",
      "485b6e2bef303251789827d7829e3a3e0", "50dbafed23e6e75d3f6313bf5480810",
      "7593ec1357315431b04a17a55f01bd1295ca4b00ce8b910f8854a7e414e8f2cc",
      "ABCD1234CDEF5678ABCD1234CDEF5678ABCD1234", "setup.exe", "readme.md", "evil.com",
      "bafybeicrq42t3uoi53hf2hhntwq74hfapj5rutrp6ejlidohaghypibnyy.ipfs.dweb.link",
      "expiredaccessreviewnow[.]com", "x(dot)ru", "a..b.com", "-bad-.com", "1.2.3.4",
      "999.1.1.1", "01.2.3.4", "10.0.0.1:8080", "ip=8.8.8.8", "192.168[.]1[.]1", "fe80::1",
      "2001:db8::1", "::", "CVE-2019-0708", "cve-2020-1", "CVE-2023-123456", "a@b.com",
      "ops[at]evil[.]net", "@@", "x@", "user@localhost", "hxxps[:]//q[.]com/a", "é", "—",
      "foo", "bar", "malware", "C2", ".", ",", ":", ";", "(", ")", "[", "]", "'", "\"", "...",
      "-", "_", "+", "10.0.0.1.5", "a.b.c.d", "test.local", "www.google.com/search",
  };
  static const std::vector<std::string> seps = {" ", " ", " ", "\n", ", ", "; ", "\t", "", ":", "/"};
  std::mt19937 rng(seed);
  std::string doc;
  std::size_t target = 1 + rng() % max_bytes;
  while (true) {
    std::string piece = frags[rng() % frags.size()] + seps[rng() % seps.size()];
    if (doc.size() + piece.size() > target) break;
    doc += piece;
  }
  return doc;
}

inline const std::vector<std::string>& ioc_lexicon() {
  static const std::vector<std::string> w = {"malware", "ransomware", "botnet",  "phishing",
                                             "exploit", "backdoor",   "trojan",  "c2",
                                             "payload", "beacon"};
  return w;
}

inline const std::vector<std::string>& benign_lexicon() {
  static const std::vector<std::string> w = {"recipe", "football", "garden", "holiday",
                                             "movie",  "weather",  "coffee", "concert",
                                             "puppy",  "bicycle"};
  return w;
}

// Documents whose label is decided by which lexicon they draw from; shared
// filler words appear in both classes.
inline std::string lexicon_text(std::mt19937& rng, bool relevant, int words) {
  const auto& lex = relevant ? ioc_lexicon() : benign_lexicon();
  const auto& fw = filler_words();
  std::string s;
  for (int i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += (rng() % 3 != 0) ? lex[rng() % lex.size()] : fw[rng() % fw.size()];
  }
  // At least one lexicon word, always.
  s += ' ' + lex[rng() % lex.size()];
  return s;
}

struct LabeledDoc {
  std::string text;
  bool relevant;
};

inline std::vector<LabeledDoc> separable_corpus(std::uint32_t seed, int n) {
  std::mt19937 rng(seed);
  std::vector<LabeledDoc> out;
  for (int i = 0; i < n; ++i) {
    bool rel = i % 2 == 0;
    out.push_back({lexicon_text(rng, rel, 8 + static_cast<int>(rng() % 12)), rel});
  }
  return out;
}

}  // namespace tstem::synthetic
