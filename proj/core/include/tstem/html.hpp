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

// Lenient HTML scanning: visible text and anchor targets. Not a conforming
// HTML5 parser; it only needs to be total and to keep markup out of text.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tstem {

enum class ContentKind { html, plain, unsupported };

// Classifies a Content-Type header value. text/html and
// application/xhtml+xml are html; text/plain is plain. An empty value is
// sniffed from the body: html when the first non-space byte is '<'.
ContentKind classify_content_type(std::string_view content_type, std::string_view body = {});

// Decodes character references: the common named ones, &#N; and &#xH;.
// Unknown or malformed references are left as written.
std::string decode_entities(std::string_view s);

struct TextExtraction {
  std::string text;
  bool truncated = false;  // input was longer than the cap
  bool skipped = false;    // unsupported content type; text is empty
};

// Visible text of an HTML or plain-text body. Tags are dropped, the
// contents of script/style/noscript/template are dropped, entities are
// decoded and whitespace runs collapse to one space. Only the first `cap`
// bytes of `body` are read when cap > 0.
TextExtraction extract_text(std::string_view body, std::string_view content_type,
                            std::size_t cap = 0);

// href values of <a> and <area> elements in document order, entities
// decoded and surrounding whitespace trimmed. Empty values are kept.
std::vector<std::string> anchor_hrefs(std::string_view html);

}  // namespace tstem
