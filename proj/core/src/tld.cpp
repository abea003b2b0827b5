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
#include <iterator>
#include <string_view>

#include "tstem/model.hpp"

namespace tstem {
namespace {

// Curated top-level labels. Delegated TLDs that collide with common file
// extensions (zip, mov, sh, py, pl, rs, md, so, cc, in, am, la, ai, id)
// are left out on purpose so "setup.py" or "dump.zip" never read as hostnames.
// Must stay sorted.
constexpr std::string_view kTlds[] = {
    "ae", "af", "ag", "agency", "al", "app", "ar", "at",
    "au", "az", "ba", "bd", "be", "best", "bg", "bid",
    "biz", "blog", "br", "by", "ca", "cf", "ch", "city",
    "cl", "click", "cloud", "club", "cn", "co", "com", "cyou",
    "cz", "de", "design", "dev", "dk", "dz", "ec", "edu",
    "ee", "eg", "es", "eu", "fi", "fr", "fun", "ga",
    "ge", "gg", "gov", "gq", "gr", "hk", "host", "hr",
    "hu", "icu", "ie", "il", "info", "int", "io", "iq",
    "ir", "is", "it", "jp", "ke", "kg", "kr", "kz",
    "life", "link", "live", "lk", "lt", "lu", "lv", "ly",
    "ma", "me", "mil", "ml", "mn", "mobi", "mx", "my",
    "name", "net", "ng", "nl", "no", "nu", "nz", "one",
    "onion", "online", "org", "pe", "ph", "pk", "press", "pro",
    "pt", "pw", "qa", "re", "ro", "ru", "sa", "se",
    "sg", "shop", "si", "site", "sk", "space", "store", "su",
    "support", "tech", "th", "tj", "tk", "tn", "to", "today",
    "top", "tr", "tv", "tw", "ua", "uk", "us", "uz",
    "vip", "vn", "website", "work", "ws", "xyz", "za",
};

static_assert(std::is_sorted(std::begin(kTlds), std::end(kTlds)));

}  // namespace

bool is_allowed_tld(std::string_view label) {
  return std::binary_search(std::begin(kTlds), std::end(kTlds), label);
}

}  // namespace tstem
