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

// The tstem command line. Kept as a library so tests can drive it with
// their own streams.

#pragma once

#include <iosfwd>

namespace tstem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;  // operational failure
inline constexpr int kExitUsage = 2;

// Data goes to `out`, diagnostics to `err`. `in` backs "--in -".
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace tstem::cli
