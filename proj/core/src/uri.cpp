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

#include "tstem/uri.hpp"

#include <algorithm>
#include <cctype>

namespace tstem {
namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_hex(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}
bool is_unreserved(char c) {
  return is_alpha(c) || is_digit(c) || c == '-' || c == '.' || c == '_' || c == '~';
}
bool is_sub_delim(char c) {
  switch (c) {
    case '!': case '$': case '&': case '\'': case '(': case ')':
    case '*': case '+': case ',': case ';': case '=':
      return true;
    default:
      return false;
  }
}

// Checks every char is allowed by `extra` or is unreserved / sub-delim /
// a well-formed percent escape.
template <typename Extra>
bool valid_chars(std::string_view s, Extra extra) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '%') {
      if (i + 2 >= s.size()) return false;
      if (!is_hex(s[i + 1]) || !is_hex(s[i + 2])) return false;
      i += 2;
      continue;
    }
    if (is_unreserved(c) || is_sub_delim(c) || extra(c)) continue;
    return false;
  }
  return true;
}

bool valid_scheme(std::string_view s) {
  if (s.empty() || !is_alpha(s[0])) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return is_alpha(c) || is_digit(c) || c == '+' || c == '-' || c == '.';
  });
}

bool valid_ip_literal(std::string_view h) {
  // "[" ( IPv6address / IPvFuture ) "]"; the inner form is checked loosely
  // here and strictly by the indicator validator where it matters.
  if (h.size() < 4 || h.front() != '[' || h.back() != ']') return false;
  auto inner = h.substr(1, h.size() - 2);
  return std::all_of(inner.begin(), inner.end(),
                     [](char c) { return is_hex(c) || c == ':' || c == '.' || c == 'v' || c == 'V'; });
}

}  // namespace

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string Uri::authority() const {
  std::string out;
  if (has_userinfo) {
    out += userinfo;
    out += '@';
  }
  out += host;
  if (!port.empty()) {
    out += ':';
    out += port;
  }
  return out;
}

std::string Uri::to_string() const {
  std::string out;
  if (!scheme.empty()) {
    out += scheme;
    out += ':';
  }
  if (has_authority) {
    out += "//";
    out += authority();
  }
  out += path;
  if (query) {
    out += '?';
    out += *query;
  }
  if (fragment) {
    out += '#';
    out += *fragment;
  }
  return out;
}

std::optional<Uri> parse_uri_reference(std::string_view s) {
  Uri u;
  std::string_view rest = s;

  // fragment
  if (auto hash = rest.find('#'); hash != std::string_view::npos) {
    auto frag = rest.substr(hash + 1);
    if (!valid_chars(frag, [](char c) { return c == ':' || c == '@' || c == '/' || c == '?'; })) {
      return std::nullopt;
    }
    u.fragment = std::string(frag);
    rest = rest.substr(0, hash);
  }
  if (auto q = rest.find('?'); q != std::string_view::npos) {
    auto query = rest.substr(q + 1);
    if (!valid_chars(query, [](char c) { return c == ':' || c == '@' || c == '/' || c == '?'; })) {
      return std::nullopt;
    }
    u.query = std::string(query);
    rest = rest.substr(0, q);
  }

  // scheme: only if the first ':' precedes any '/'
  auto colon = rest.find(':');
  auto slash = rest.find('/');
  if (colon != std::string_view::npos && (slash == std::string_view::npos || colon < slash)) {
    auto scheme = rest.substr(0, colon);
    if (valid_scheme(scheme)) {
      u.scheme = std::string(scheme);
      rest = rest.substr(colon + 1);
    } else {
      // A relative-path reference may not contain ':' in its first segment.
      return std::nullopt;
    }
  }

  if (rest.substr(0, 2) == "//") {
    u.has_authority = true;
    rest = rest.substr(2);
    auto end = rest.find('/');
    auto auth = rest.substr(0, end);
    rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);

    if (auto at = auth.rfind('@'); at != std::string_view::npos) {
      auto ui = auth.substr(0, at);
      if (!valid_chars(ui, [](char c) { return c == ':'; })) return std::nullopt;
      u.userinfo = std::string(ui);
      u.has_userinfo = true;
      auth = auth.substr(at + 1);
    }
    std::string_view host = auth;
    std::string_view port;
    if (!auth.empty() && auth.front() == '[') {
      auto close = auth.find(']');
      if (close == std::string_view::npos) return std::nullopt;
      host = auth.substr(0, close + 1);
      auto after = auth.substr(close + 1);
      if (!after.empty()) {
        if (after.front() != ':') return std::nullopt;
        port = after.substr(1);
      }
      if (!valid_ip_literal(host)) return std::nullopt;
    } else {
      if (auto pc = auth.rfind(':'); pc != std::string_view::npos) {
        host = auth.substr(0, pc);
        port = auth.substr(pc + 1);
      }
      if (!valid_chars(host, [](char) { return false; })) return std::nullopt;
    }
    if (!std::all_of(port.begin(), port.end(), is_digit)) return std::nullopt;
    u.host = std::string(host);
    u.port = std::string(port);
  }

  if (!valid_chars(rest, [](char c) { return c == ':' || c == '@' || c == '/'; })) {
    return std::nullopt;
  }
  u.path = std::string(rest);
  if (u.has_authority && !u.path.empty() && u.path.front() != '/') return std::nullopt;
  if (!u.has_authority && u.path.substr(0, 2) == "//") return std::nullopt;
  return u;
}

std::optional<Uri> parse_uri(std::string_view s) {
  auto u = parse_uri_reference(s);
  if (!u || u->scheme.empty()) return std::nullopt;
  return u;
}

std::string remove_dot_segments(std::string_view path) {
  std::string in(path);
  std::string out;
  while (!in.empty()) {
    if (in.rfind("../", 0) == 0) {
      in.erase(0, 3);
    } else if (in.rfind("./", 0) == 0) {
      in.erase(0, 2);
    } else if (in.rfind("/./", 0) == 0) {
      in.replace(0, 3, "/");
    } else if (in == "/.") {
      in = "/";
    } else if (in.rfind("/../", 0) == 0 || in == "/..") {
      if (in == "/..") {
        in = "/";
      } else {
        in.replace(0, 4, "/");
      }
      auto last = out.rfind('/');
      out.erase(last == std::string::npos ? 0 : last);
    } else if (in == "." || in == "..") {
      in.clear();
    } else {
      std::size_t start = in.front() == '/' ? 1 : 0;
      auto next = in.find('/', start);
      auto seg_len = next == std::string::npos ? in.size() : next;
      out.append(in, 0, seg_len);
      in.erase(0, seg_len);
    }
  }
  return out;
}

namespace {

std::string merge_paths(const Uri& base, const std::string& ref_path) {
  if (base.has_authority && base.path.empty()) return "/" + ref_path;
  auto last = base.path.rfind('/');
  if (last == std::string::npos) return ref_path;
  return base.path.substr(0, last + 1) + ref_path;
}

}  // namespace

Uri resolve_reference(const Uri& base, const Uri& ref) {
  Uri t;
  if (!ref.scheme.empty()) {
    t = ref;
    t.path = remove_dot_segments(ref.path);
    return t;
  }
  if (ref.has_authority) {
    t = ref;
    t.scheme = base.scheme;
    t.path = remove_dot_segments(ref.path);
    return t;
  }
  t.scheme = base.scheme;
  t.has_authority = base.has_authority;
  t.userinfo = base.userinfo;
  t.has_userinfo = base.has_userinfo;
  t.host = base.host;
  t.port = base.port;
  if (ref.path.empty()) {
    t.path = base.path;
    t.query = ref.query ? ref.query : base.query;
  } else {
    if (ref.path.front() == '/') {
      t.path = remove_dot_segments(ref.path);
    } else {
      t.path = remove_dot_segments(merge_paths(base, ref.path));
    }
    t.query = ref.query;
  }
  t.fragment = ref.fragment;
  return t;
}

std::string_view default_port(std::string_view scheme) {
  if (scheme == "http") return "80";
  if (scheme == "https") return "443";
  if (scheme == "ftp") return "21";
  return {};
}

namespace {

void upper_escapes(std::string& s) {
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    if (s[i] == '%') {
      s[i + 1] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[i + 1])));
      s[i + 2] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[i + 2])));
      i += 2;
    }
  }
}

}  // namespace

Uri normalize(Uri u) {
  u.scheme = ascii_lower(u.scheme);
  u.host = ascii_lower(u.host);
  upper_escapes(u.host);
  upper_escapes(u.path);
  if (u.query) upper_escapes(*u.query);
  if (!u.port.empty() && u.port == default_port(u.scheme)) u.port.clear();
  u.path = remove_dot_segments(u.path);
  if (u.has_authority && u.path.empty()) u.path = "/";
  u.fragment.reset();
  return u;
}

}  // namespace tstem
