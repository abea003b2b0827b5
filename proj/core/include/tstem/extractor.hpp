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

// Rule-based indicator extraction.
//
// Extraction runs in three steps over the refanged text:
//
//   1. URL regions. A region starts at "http://", "https://" or "ftp://"
//      (any case) that is not preceded by a letter or digit, and runs to the
//      first char in `kUrlStop` (whitespace, controls, non-ASCII, quotes,
//      angle brackets, backtick, backslash, ^ { } |). Trailing ".,;:!?" and
//      unbalanced ")" / "]" are trimmed. A region that validates as a url is
//      emitted and masked out of step 2.
//   2. Tokens. Outside url regions, a token is a maximal run of
//      [A-Za-z0-9._@:+-], trimmed of leading ".-_+@" and trailing ".-_+@".
//      The token is classified whole; if that fails and it contains ':',
//      each ':'-separated piece is trimmed and classified instead.
//   3. Results are ordered by start offset and deduplicated by
//      indicator_key, keeping the first occurrence.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tstem/model.hpp"

namespace tstem {

struct DefangRule {
  std::string pattern;  // matched case-insensitively, literally
  std::string replacement;
};

// Ordered literal rewrite rules that undo defanging.
class DefangGrammar {
 public:
  explicit DefangGrammar(std::vector<DefangRule> rules);

  // "[.]" "(.)" "[dot]" "(dot)" "hxxp" "hxxps" "[:]" "[at]" "(at)".
  static const DefangGrammar& builtin();

  // One rule per line: pattern, a TAB, replacement. Blank lines and lines
  // starting with '#' are ignored. Throws ConfigError on malformed lines.
  static DefangGrammar parse(std::string_view text);
  static DefangGrammar load(const std::filesystem::path& path);

  const std::vector<DefangRule>& rules() const { return rules_; }

 private:
  std::vector<DefangRule> rules_;
};

// Refanged text plus, for every output byte, the half-open range of input
// bytes it came from.
struct RefangedText {
  std::string text;
  std::vector<std::size_t> src_begin;
  std::vector<std::size_t> src_end;

  // Maps an output range [a, b) back to input offsets.
  std::pair<std::size_t, std::size_t> source_range(std::size_t a, std::size_t b) const;
};

// Applies the grammar left to right, repeating whole passes until nothing
// changes, so the result is a fixed point.
std::string refang(std::string_view text, const DefangGrammar& g = DefangGrammar::builtin());
RefangedText refang_mapped(std::string_view text,
                           const DefangGrammar& g = DefangGrammar::builtin());

// Kind of a refanged token, or nullopt. Hex strings resolve by length;
// other kinds by precedence url > email > ipv4 > ipv6 > cve > domain.
std::optional<IndicatorType> classify_token(std::string_view token);

struct IndicatorMatch {
  Indicator indicator;
  std::size_t start = 0;  // offsets into the original (possibly defanged) text
  std::size_t end = 0;
};

std::vector<IndicatorMatch> extract_matches(std::string_view text,
                                            const DefangGrammar& g = DefangGrammar::builtin(),
                                            Timestamp seen = {});

std::vector<Indicator> extract_indicators(std::string_view text,
                                          const DefangGrammar& g = DefangGrammar::builtin(),
                                          Timestamp seen = {});

struct MergeResult {
  std::vector<Indicator> indicators;
  std::vector<EntitySpan> context;  // non-Indicator spans, for the document
  std::size_t dropped = 0;          // Indicator spans that failed validation
};

// Union of rule output and Indicator-labeled spans. Rule output is kept
// verbatim and first; spans add only new keys.
MergeResult merge_with_ner(const std::vector<Indicator>& rule_out,
                           const std::vector<EntitySpan>& spans, std::string_view text,
                           const DefangGrammar& g = DefangGrammar::builtin(),
                           Timestamp seen = {});

}  // namespace tstem
