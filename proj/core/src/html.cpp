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

#include "tstem/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <utility>

#include "tstem/uri.hpp"

namespace tstem {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

constexpr std::array<std::pair<std::string_view, std::uint32_t>, 22> kNamed = {{
    {"amp", '&'},      {"lt", '<'},        {"gt", '>'},        {"quot", '"'},
    {"apos", '\''},    {"nbsp", 0xA0},     {"copy", 0xA9},     {"reg", 0xAE},
    {"trade", 0x2122}, {"hellip", 0x2026}, {"mdash", 0x2014},  {"ndash", 0x2013},
    {"lsquo", 0x2018}, {"rsquo", 0x2019},  {"ldquo", 0x201C},  {"rdquo", 0x201D},
    {"laquo", 0xAB},   {"raquo", 0xBB},    {"middot", 0xB7},   {"bull", 0x2022},
    {"shy", 0xAD},     {"zwnj", 0x200C},
}};

// Decodes one reference at s[0] == '&'. Returns bytes consumed, 0 if none.
std::size_t decode_one(std::string_view s, std::string& out) {
  auto semi = s.find(';', 1);
  if (semi == std::string_view::npos || semi > 12) return 0;
  auto body = s.substr(1, semi - 1);
  if (body.empty()) return 0;
  if (body[0] == '#') {
    auto digits = body.substr(1);
    int base = 10;
    if (!digits.empty() && (digits[0] == 'x' || digits[0] == 'X')) {
      base = 16;
      digits.remove_prefix(1);
    }
    if (digits.empty() || digits.size() > 7) return 0;
    std::uint32_t cp = 0;
    for (char c : digits) {
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (base == 16 && c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (base == 16 && c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else return 0;
      cp = cp * static_cast<std::uint32_t>(base) + static_cast<std::uint32_t>(v);
    }
    append_utf8(out, cp);
    return semi + 1;
  }
  for (const auto& [name, cp] : kNamed) {
    if (body == name) {
      append_utf8(out, cp);
      return semi + 1;
    }
  }
  return 0;
}

struct Tag {
  std::string name;  // lowercased
  bool closing = false;
  std::vector<std::pair<std::string, std::string>> attrs;  // names lowercased, values raw
};

bool is_raw_text(std::string_view name) {
  return name == "script" || name == "style" || name == "noscript" || name == "template" ||
         name == "textarea" || name == "title";
}

bool is_inline(std::string_view name) {
  static constexpr std::array<std::string_view, 25> kInline = {
      "a",    "abbr", "b",    "bdi",  "bdo", "cite",  "code", "data",   "dfn",
      "em",   "font", "i",    "kbd",  "mark", "q",    "s",    "samp",   "small",
      "span", "strong", "sub", "sup", "time", "u",    "wbr"};
  return std::find(kInline.begin(), kInline.end(), name) != kInline.end();
}

// Position of the first case-insensitive "</name" at or after `from`.
std::size_t find_close(std::string_view s, std::size_t from, std::string_view name) {
  for (std::size_t p = s.find("</", from); p != std::string_view::npos; p = s.find("</", p + 1)) {
    if (p + 2 + name.size() > s.size()) return std::string_view::npos;
    bool eq = true;
    for (std::size_t k = 0; k < name.size() && eq; ++k) {
      eq = std::tolower(static_cast<unsigned char>(s[p + 2 + k])) == name[k];
    }
    if (!eq) continue;
    auto after = p + 2 + name.size();
    if (after == s.size() || is_space(s[after]) || s[after] == '>' || s[after] == '/') return p;
  }
  return std::string_view::npos;
}

// Parses the tag starting at s[i] == '<' whose name starts at `j`. Returns
// the position after '>' (or s.size() if unterminated).
std::size_t parse_tag(std::string_view s, std::size_t j, Tag& tag) {
  std::size_t n = s.size();
  std::size_t k = j;
  while (k < n && !is_space(s[k]) && s[k] != '/' && s[k] != '>') ++k;
  tag.name = ascii_lower(s.substr(j, k - j));
  while (k < n) {
    while (k < n && (is_space(s[k]) || s[k] == '/')) ++k;
    if (k >= n) break;
    if (s[k] == '>') return k + 1;
    std::size_t a = k;
    while (k < n && !is_space(s[k]) && s[k] != '=' && s[k] != '>' && s[k] != '/') ++k;
    if (k == a) ++k;  // a lone '=' with no name
    std::string name = ascii_lower(s.substr(a, k - a));
    while (k < n && is_space(s[k])) ++k;
    std::string value;
    if (k < n && s[k] == '=') {
      ++k;
      while (k < n && is_space(s[k])) ++k;
      if (k < n && (s[k] == '"' || s[k] == '\'')) {
        char q = s[k++];
        auto e = s.find(q, k);
        if (e == std::string_view::npos) e = n;
        value = std::string(s.substr(k, e - k));
        k = std::min(n, e + 1);
      } else {
        std::size_t v = k;
        while (k < n && !is_space(s[k]) && s[k] != '>') ++k;
        value = std::string(s.substr(v, k - v));
      }
    }
    tag.attrs.emplace_back(std::move(name), std::move(value));
  }
  return n;
}

// Walks the document, reporting text runs and tags. Raw-text element
// contents are reported to neither callback.
template <class OnText, class OnTag>
void scan(std::string_view s, OnText&& on_text, OnTag&& on_tag) {
  std::size_t n = s.size();
  std::size_t i = 0;
  std::size_t text_start = 0;
  auto flush = [&](std::size_t end) {
    if (end > text_start) on_text(s.substr(text_start, end - text_start));
  };
  while (i < n) {
    if (s[i] != '<' || i + 1 >= n) {
      ++i;
      continue;
    }
    char c = s[i + 1];
    if (s.substr(i, 4) == "<!--") {
      flush(i);
      auto e = s.find("-->", i + 4);
      i = e == std::string_view::npos ? n : e + 3;
      text_start = i;
      continue;
    }
    if (c == '!' || c == '?') {
      flush(i);
      auto e = s.find('>', i + 2);
      i = e == std::string_view::npos ? n : e + 1;
      text_start = i;
      continue;
    }
    bool closing = c == '/';
    std::size_t j = i + 1 + (closing ? 1 : 0);
    if (j >= n || !is_alpha(s[j])) {
      ++i;
      continue;
    }
    flush(i);
    Tag tag;
    tag.closing = closing;
    i = parse_tag(s, j, tag);
    if (!closing && is_raw_text(tag.name)) {
      auto e = find_close(s, i, tag.name);
      i = e == std::string_view::npos ? n : e;
    }
    text_start = i;
    on_tag(tag);
  }
  flush(n);
}

// Appends `s` with whitespace runs (including U+00A0) collapsed to a
// single space; `pending` carries an unflushed space across calls.
void append_collapsed(std::string& out, std::string_view s, bool& pending) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    bool space = is_space(s[i]);
    if (!space && s[i] == '\xC2' && i + 1 < s.size() && s[i + 1] == '\xA0') {
      space = true;
      ++i;
    }
    if (space) {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out += ' ';
    pending = false;
    out += s[i];
  }
}

// Drops a trailing incomplete UTF-8 sequence left by a byte cap.
std::string_view trim_partial_utf8(std::string_view s) {
  std::size_t k = 0;
  while (k < 4 && k < s.size() && (static_cast<unsigned char>(s[s.size() - 1 - k]) & 0xC0) == 0x80) ++k;
  if (k == s.size()) return s;
  auto lead = static_cast<unsigned char>(s[s.size() - 1 - k]);
  std::size_t need = lead >= 0xF0 ? 4 : lead >= 0xE0 ? 3 : lead >= 0xC0 ? 2 : 1;
  if (lead < 0x80) need = 1;
  if (need > k + 1) return s.substr(0, s.size() - 1 - k);
  return s;
}

}  // namespace

ContentKind classify_content_type(std::string_view content_type, std::string_view body) {
  auto media = ascii_lower(trim(content_type.substr(0, content_type.find(';'))));
  if (media == "text/html" || media == "application/xhtml+xml") return ContentKind::html;
  if (media == "text/plain") return ContentKind::plain;
  if (!media.empty()) return ContentKind::unsupported;
  auto b = trim(body);
  return !b.empty() && b.front() == '<' ? ContentKind::html : ContentKind::plain;
}

std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '&') {
      if (auto used = decode_one(s.substr(i), out)) {
        i += used;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

TextExtraction extract_text(std::string_view body, std::string_view content_type, std::size_t cap) {
  TextExtraction r;
  auto kind = classify_content_type(content_type, body.substr(0, 512));
  if (kind == ContentKind::unsupported) {
    r.skipped = true;
    return r;
  }
  if (cap > 0 && body.size() > cap) {
    body = trim_partial_utf8(body.substr(0, cap));
    r.truncated = true;
  }
  if (kind == ContentKind::plain) {
    r.text = std::string(body);
    return r;
  }
  bool pending = false;
  scan(
      body, [&](std::string_view run) { append_collapsed(r.text, decode_entities(run), pending); },
      [&](const Tag& t) {
        if (!is_inline(t.name)) pending = true;
      });
  return r;
}

std::vector<std::string> anchor_hrefs(std::string_view html) {
  std::vector<std::string> out;
  scan(
      html, [](std::string_view) {},
      [&](const Tag& t) {
        if (t.closing || (t.name != "a" && t.name != "area")) return;
        for (const auto& [name, value] : t.attrs) {
          if (name == "href") {
            out.emplace_back(trim(decode_entities(value)));
            break;
          }
        }
      });
  return out;
}

}  // namespace tstem
