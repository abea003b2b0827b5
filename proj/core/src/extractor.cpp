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

#include "tstem/extractor.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "tstem/error.hpp"

namespace tstem {

// ---------------------------------------------------------------------------
// Defang grammar

DefangGrammar::DefangGrammar(std::vector<DefangRule> rules) : rules_(std::move(rules)) {
  for (const auto& r : rules_) {
    if (r.pattern.empty()) throw ConfigError("defang rule with empty pattern");
  }
}

const DefangGrammar& DefangGrammar::builtin() {
  // "hxxps" precedes "hxxp" so the longer form wins at a given position.
  static const DefangGrammar g({
      {"[.]", "."},
      {"(.)", "."},
      {"[dot]", "."},
      {"(dot)", "."},
      {"hxxps", "https"},
      {"hxxp", "http"},
      {"[:]", ":"},
      {"[at]", "@"},
      {"(at)", "@"},
  });
  return g;
}

DefangGrammar DefangGrammar::parse(std::string_view text) {
  std::vector<DefangRule> rules;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw ConfigError("defang grammar line " + std::to_string(line_no) +
                        ": expected 'pattern<TAB>replacement'");
    }
    rules.push_back({std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))});
  }
  return DefangGrammar(std::move(rules));
}

DefangGrammar DefangGrammar::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open defang grammar file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

namespace {

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool match_at(std::string_view s, std::size_t i, std::string_view pat) {
  if (i + pat.size() > s.size()) return false;
  for (std::size_t k = 0; k < pat.size(); ++k) {
    if (lower(s[i + k]) != lower(pat[k])) return false;
  }
  return true;
}

constexpr int kMaxRefangPasses = 16;

}  // namespace

std::pair<std::size_t, std::size_t> RefangedText::source_range(std::size_t a,
                                                               std::size_t b) const {
  if (a >= b) return {a < src_begin.size() ? src_begin[a] : 0, 0};
  return {src_begin[a], src_end[b - 1]};
}

RefangedText refang_mapped(std::string_view text, const DefangGrammar& g) {
  RefangedText cur;
  cur.text = std::string(text);
  cur.src_begin.resize(text.size());
  cur.src_end.resize(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.src_begin[i] = i;
    cur.src_end[i] = i + 1;
  }
  const auto& rules = g.rules();
  for (int pass = 0; pass < kMaxRefangPasses; ++pass) {
    RefangedText next;
    next.text.reserve(cur.text.size());
    next.src_begin.reserve(cur.text.size());
    next.src_end.reserve(cur.text.size());
    bool changed = false;
    std::size_t i = 0;
    while (i < cur.text.size()) {
      const DefangRule* hit = nullptr;
      for (const auto& r : rules) {
        if (match_at(cur.text, i, r.pattern)) {
          hit = &r;
          break;
        }
      }
      if (hit == nullptr) {
        next.text += cur.text[i];
        next.src_begin.push_back(cur.src_begin[i]);
        next.src_end.push_back(cur.src_end[i]);
        ++i;
        continue;
      }
      changed = true;
      auto b = cur.src_begin[i];
      auto e = cur.src_end[i + hit->pattern.size() - 1];
      for (char c : hit->replacement) {
        next.text += c;
        next.src_begin.push_back(b);
        next.src_end.push_back(e);
      }
      i += hit->pattern.size();
    }
    cur = std::move(next);
    if (!changed) break;
  }
  return cur;
}

std::string refang(std::string_view text, const DefangGrammar& g) {
  return refang_mapped(text, g).text;
}

// ---------------------------------------------------------------------------
// Token classification

namespace {

bool is_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Cheap shape checks before the full rule check; each returns false only
// when the token cannot possibly be of that kind.
bool looks_like_url(std::string_view t) { return t.find("://") != std::string_view::npos; }
bool looks_like_email(std::string_view t) { return t.find('@') != std::string_view::npos; }
bool looks_like_ipv4(std::string_view t) {
  return !t.empty() && is_digit(t.front()) && is_digit(t.back()) &&
         std::count(t.begin(), t.end(), '.') == 3 &&
         std::all_of(t.begin(), t.end(), [](char c) { return is_digit(c) || c == '.'; });
}
bool looks_like_ipv6(std::string_view t) {
  return std::count(t.begin(), t.end(), ':') >= 2 &&
         std::all_of(t.begin(), t.end(), [](char c) { return is_hex(c) || c == ':' || c == '.'; });
}
bool looks_like_cve(std::string_view t) {
  return t.size() >= 13 && (t[0] == 'c' || t[0] == 'C');
}
bool looks_like_domain(std::string_view t) {
  return t.find('.') != std::string_view::npos && t.find('@') == std::string_view::npos;
}

bool valid(std::string_view t, IndicatorType k) { return validate_indicator(t, k).empty(); }

}  // namespace

std::optional<IndicatorType> classify_token(std::string_view token) {
  if (token.empty()) return std::nullopt;
  if (std::all_of(token.begin(), token.end(), is_hex)) {
    switch (token.size()) {
      case 32: return IndicatorType::md5;
      case 40: return IndicatorType::sha1;
      case 64: return IndicatorType::sha256;
      default: break;
    }
  }
  struct Candidate {
    IndicatorType kind;
    bool (*shape)(std::string_view);
  };
  static constexpr Candidate kOrder[] = {
      {IndicatorType::url, looks_like_url},   {IndicatorType::email, looks_like_email},
      {IndicatorType::ipv4, looks_like_ipv4}, {IndicatorType::ipv6, looks_like_ipv6},
      {IndicatorType::cve, looks_like_cve},   {IndicatorType::domain, looks_like_domain},
  };
  std::optional<IndicatorType> first;
  for (const auto& c : kOrder) {
    if (!c.shape(token) || !valid(token, c.kind)) continue;
    if (!first) {
      first = c.kind;
    } else {
      spdlog::debug("token '{}' matches both {} and {}; keeping {}", token, to_string(*first),
                    to_string(c.kind), to_string(*first));
      break;
    }
  }
  return first;
}

// ---------------------------------------------------------------------------
// Scanning

namespace {

bool is_url_stop(unsigned char c) {
  if (c <= 0x20 || c >= 0x7f) return true;
  switch (c) {
    case '"': case '\'': case '<': case '>': case '`': case '\\':
    case '^': case '{': case '}': case '|':
      return true;
    default:
      return false;
  }
}

bool is_token_char(char c) {
  return is_alnum(c) || c == '.' || c == '_' || c == '@' || c == ':' || c == '+' || c == '-';
}

bool is_trim_char(char c) { return c == '.' || c == '-' || c == '_' || c == '+' || c == '@'; }

struct Region {
  std::size_t start;
  std::size_t end;
};

Region trim(std::string_view s, Region r) {
  while (r.start < r.end && is_trim_char(s[r.start])) ++r.start;
  while (r.end > r.start && is_trim_char(s[r.end - 1])) --r.end;
  return r;
}

// Trailing ".,;:!?" always go; ")" and "]" go when unbalanced.
std::size_t trim_url_end(std::string_view s, std::size_t start, std::size_t end) {
  while (end > start) {
    char c = s[end - 1];
    if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?') {
      --end;
      continue;
    }
    if (c == ')' || c == ']') {
      char open = c == ')' ? '(' : '[';
      auto body = s.substr(start, end - start);
      if (std::count(body.begin(), body.end(), open) < std::count(body.begin(), body.end(), c)) {
        --end;
        continue;
      }
    }
    break;
  }
  return end;
}

const char* const kSchemes[] = {"http://", "https://", "ftp://"};

struct Hit {
  std::size_t start;  // in refanged text
  std::size_t end;
  IndicatorType kind;
};

void scan(std::string_view s, std::vector<Hit>& out) {
  std::vector<bool> masked(s.size(), false);

  // Step 1: url regions, located via "://".
  std::size_t from = 0;
  while (true) {
    auto sep = s.find("://", from);
    if (sep == std::string_view::npos) break;
    from = sep + 3;
    for (const char* scheme : kSchemes) {
      std::string_view sch(scheme);
      auto name_len = sch.size() - 3;
      if (sep < name_len) continue;
      auto start = sep - name_len;
      if (!match_at(s, start, sch)) continue;
      if (start > 0 && is_alnum(s[start - 1])) continue;
      auto end = start + sch.size();
      while (end < s.size() && !is_url_stop(static_cast<unsigned char>(s[end]))) ++end;
      end = trim_url_end(s, start, end);
      auto cand = s.substr(start, end - start);
      if (valid(cand, IndicatorType::url)) {
        out.push_back({start, end, IndicatorType::url});
        std::fill(masked.begin() + static_cast<long>(start), masked.begin() + static_cast<long>(end),
                  true);
        from = end;
      }
      break;
    }
  }

  // Step 2: tokens outside url regions.
  std::size_t i = 0;
  while (i < s.size()) {
    if (masked[i] || !is_token_char(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !masked[j] && is_token_char(s[j])) ++j;
    Region whole = trim(s, {i, j});
    if (whole.start < whole.end) {
      auto tok = s.substr(whole.start, whole.end - whole.start);
      if (auto kind = classify_token(tok)) {
        out.push_back({whole.start, whole.end, *kind});
      } else if (tok.find(':') != std::string_view::npos) {
        std::size_t p = whole.start;
        while (p <= whole.end) {
          auto colon = s.find(':', p);
          std::size_t q = (colon == std::string_view::npos || colon > whole.end) ? whole.end : colon;
          Region piece = trim(s, {p, q});
          if (piece.start < piece.end) {
            auto ptok = s.substr(piece.start, piece.end - piece.start);
            if (auto pk = classify_token(ptok)) out.push_back({piece.start, piece.end, *pk});
          }
          p = q + 1;
        }
      }
    }
    i = j;
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Hit& a, const Hit& b) { return a.start < b.start; });
}

}  // namespace

std::vector<IndicatorMatch> extract_matches(std::string_view text, const DefangGrammar& g,
                                            Timestamp seen) {
  std::vector<IndicatorMatch> result;
  if (text.empty()) return result;
  auto refanged = refang_mapped(text, g);
  std::vector<Hit> found;
  scan(refanged.text, found);

  std::unordered_set<std::string> keys;
  for (const auto& f : found) {
    auto value = std::string_view(refanged.text).substr(f.start, f.end - f.start);
    auto [os, oe] = refanged.source_range(f.start, f.end);
    auto original = std::string(text.substr(os, oe - os));
    auto ind = Indicator::create(value, f.kind, seen, original);
    if (!keys.insert(ind.key()).second) continue;
    result.push_back({std::move(ind), os, oe});
  }
  return result;
}

std::vector<Indicator> extract_indicators(std::string_view text, const DefangGrammar& g,
                                          Timestamp seen) {
  auto matches = extract_matches(text, g, seen);
  std::vector<Indicator> out;
  out.reserve(matches.size());
  for (auto& m : matches) out.push_back(std::move(m.indicator));
  return out;
}

MergeResult merge_with_ner(const std::vector<Indicator>& rule_out,
                           const std::vector<EntitySpan>& spans, std::string_view text,
                           const DefangGrammar& g, Timestamp seen) {
  MergeResult result;
  std::unordered_set<std::string> keys;
  for (const auto& ind : rule_out) {
    if (keys.insert(ind.key()).second) result.indicators.push_back(ind);
  }
  for (const auto& span : spans) {
    if (span.label != EntityLabel::Indicator) {
      result.context.push_back(span);
      continue;
    }
    std::string_view raw = span.text;
    if (span.end <= text.size() && span.start < span.end) {
      raw = text.substr(span.start, span.end - span.start);
    }
    auto value = refang(raw, g);
    auto r = trim(value, {0, value.size()});
    auto token = std::string_view(value).substr(r.start, r.end - r.start);
    auto kind = classify_token(token);
    if (!kind) {
      ++result.dropped;
      continue;
    }
    auto ind = Indicator::create(token, *kind, seen, std::string(raw));
    if (keys.insert(ind.key()).second) result.indicators.push_back(std::move(ind));
  }
  return result;
}

}  // namespace tstem
