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

// Brute-force reference implementations used only by tests. They share the
// validity rules (validate_indicator) with the library but none of its
// scanning, classification or rewriting code.

#pragma once

#include <algorithm>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tstem/extractor.hpp"
#include "tstem/model.hpp"

namespace tstem::oracle {

// Rewrites the leftmost match of any rule (first rule in list order wins
// at a position), then restarts from the beginning, until nothing matches.
inline std::string brute_refang(std::string s, const std::vector<DefangRule>& rules) {
  auto lower = [](std::string v) {
    for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return v;
  };
  std::vector<std::string> patterns;
  for (const auto& r : rules) patterns.push_back(lower(r.pattern));
  for (int guard = 0; guard < 100000; ++guard) {
    auto ls = lower(s);
    std::size_t best = std::string::npos;
    const DefangRule* best_rule = nullptr;
    for (std::size_t pos = 0; pos < ls.size() && best_rule == nullptr; ++pos) {
      for (std::size_t r = 0; r < rules.size(); ++r) {
        if (ls.compare(pos, patterns[r].size(), patterns[r]) == 0) {
          best = pos;
          best_rule = &rules[r];
          break;
        }
      }
    }
    if (best_rule == nullptr) return s;
    s.replace(best, best_rule->pattern.size(), best_rule->replacement);
  }
  return s;
}

inline std::vector<DefangRule> builtin_rules() { return DefangGrammar::builtin().rules(); }

// Kind of a token by trying every validity rule: hashes by hex length
// first, then the fixed precedence.
inline std::optional<IndicatorType> brute_classify(const std::string& t) {
  if (t.empty()) return std::nullopt;
  for (auto k : {IndicatorType::md5, IndicatorType::sha1, IndicatorType::sha256}) {
    if (validate_indicator(t, k).empty()) return k;
  }
  for (auto k : {IndicatorType::url, IndicatorType::email, IndicatorType::ipv4,
                 IndicatorType::ipv6, IndicatorType::cve, IndicatorType::domain}) {
    if (validate_indicator(t, k).empty()) return k;
  }
  return std::nullopt;
}

using KeySet = std::vector<std::string>;  // keys in first-occurrence order

inline std::string trim_token(const std::string& t) {
  static const std::string kTrim = ".-_+@";
  auto b = t.find_first_not_of(kTrim);
  if (b == std::string::npos) return {};
  auto e = t.find_last_not_of(kTrim);
  return t.substr(b, e - b + 1);
}

inline std::string trim_url(std::string u) {
  while (!u.empty()) {
    char c = u.back();
    if (std::string(".,;:!?").find(c) != std::string::npos) {
      u.pop_back();
      continue;
    }
    if (c == ')' || c == ']') {
      char open = c == ')' ? '(' : '[';
      if (std::count(u.begin(), u.end(), open) < std::count(u.begin(), u.end(), c)) {
        u.pop_back();
        continue;
      }
    }
    break;
  }
  return u;
}

// Candidates from whitespace/punctuation-delimited tokens plus url-shaped
// substrings, each validated; keys in first-occurrence order.
inline KeySet brute_extract(const std::string& text) {
  std::string s = brute_refang(text, builtin_rules());
  std::vector<std::pair<std::size_t, std::string>> found;  // (start, key)
  std::string masked = s;

  // Url-shaped substrings: every position where a scheme begins.
  auto is_stop = [](char ch) {
    auto c = static_cast<unsigned char>(ch);
    return c <= 0x20 || c >= 0x7f || std::string("\"'<>`\\^{}|").find(ch) != std::string::npos;
  };
  std::size_t skip_until = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i < skip_until) continue;
    if (i > 0 && std::isalnum(static_cast<unsigned char>(s[i - 1]))) continue;
    std::string head;
    for (std::size_t k = i; k < s.size() && k < i + 8; ++k) {
      head += static_cast<char>(std::tolower(static_cast<unsigned char>(s[k])));
    }
    if (head.rfind("http://", 0) != 0 && head.rfind("https://", 0) != 0 &&
        head.rfind("ftp://", 0) != 0) {
      continue;
    }
    std::size_t end = i;
    while (end < s.size() && !is_stop(s[end])) ++end;
    auto cand = trim_url(s.substr(i, end - i));
    if (validate_indicator(cand, IndicatorType::url).empty()) {
      found.emplace_back(i, indicator_key(cand, IndicatorType::url));
      for (std::size_t k = i; k < i + cand.size(); ++k) masked[k] = ' ';
      skip_until = i + cand.size();
    }
  }

  // Tokens.
  static const std::regex kToken(R"([A-Za-z0-9._@:+\-]+)");
  for (auto it = std::sregex_iterator(masked.begin(), masked.end(), kToken);
       it != std::sregex_iterator(); ++it) {
    std::string raw = it->str();
    auto base = static_cast<std::size_t>(it->position());
    std::string tok = trim_token(raw);
    if (tok.empty()) continue;
    auto tok_start = base + raw.find(tok);
    if (auto k = brute_classify(tok)) {
      found.emplace_back(tok_start, indicator_key(tok, *k));
      continue;
    }
    if (tok.find(':') == std::string::npos) continue;
    std::size_t p = 0;
    while (p <= tok.size()) {
      auto q = tok.find(':', p);
      if (q == std::string::npos) q = tok.size();
      auto piece_raw = tok.substr(p, q - p);
      auto piece = trim_token(piece_raw);
      if (!piece.empty()) {
        if (auto k = brute_classify(piece)) {
          found.emplace_back(tok_start + p + piece_raw.find(piece), indicator_key(piece, *k));
        }
      }
      p = q + 1;
    }
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  KeySet keys;
  std::set<std::string> seen;
  for (auto& [pos, key] : found) {
    if (seen.insert(key).second) keys.push_back(key);
  }
  return keys;
}

// Every whitespace-delimited substring of `text` (including multi-token
// ones), validated against every kind. Quadratic; for small pages only.
inline std::set<std::string> substring_extract(const std::string& text) {
  std::set<std::string> keys;
  auto is_ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_ws(text[i]) || (i > 0 && !is_ws(text[i - 1]))) continue;
    for (std::size_t j = i + 1; j <= text.size(); ++j) {
      if (j < text.size() && !is_ws(text[j])) continue;
      auto sub = text.substr(i, j - i);
      if (auto k = brute_classify(sub)) keys.insert(indicator_key(sub, *k));
    }
  }
  return keys;
}

}  // namespace tstem::oracle
