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

#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace tstem {

// Generic URI reference (RFC 3986 section 3). Components are kept as they
// appear in the input; nothing is decoded.
struct Uri {
  std::string scheme;  // empty for relative references
  bool has_authority = false;
  std::string userinfo;
  bool has_userinfo = false;
  std::string host;  // IP literals keep their brackets
  std::string port;
  std::string path;
  std::optional<std::string> query;
  std::optional<std::string> fragment;

  bool is_absolute() const { return !scheme.empty(); }
  std::string authority() const;
  std::string to_string() const;
};

// Parses a URI reference. Returns nullopt if any component violates the
// RFC 3986 grammar (including stray spaces or malformed percent escapes).
std::optional<Uri> parse_uri_reference(std::string_view s);

// Like parse_uri_reference but requires a scheme.
std::optional<Uri> parse_uri(std::string_view s);

// RFC 3986 section 5.2.4.
std::string remove_dot_segments(std::string_view path);

// RFC 3986 section 5.2.2 (strict). `base` must be absolute.
Uri resolve_reference(const Uri& base, const Uri& ref);

// Syntax-based normalization used for crawl dedup: lowercase scheme and
// host, uppercase percent-escape hex, drop the scheme's default port,
// resolve dot segments, "/" for an empty path under an authority, and
// drop the fragment.
Uri normalize(Uri u);

// Default port for http, https, ftp; empty for anything else.
std::string_view default_port(std::string_view scheme);

// Lowercases ASCII letters only.
std::string ascii_lower(std::string_view s);

}  // namespace tstem
