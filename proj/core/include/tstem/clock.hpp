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

#include <atomic>
#include <chrono>
#include <string>
#include <string_view>

namespace tstem {

using Timestamp = std::chrono::system_clock::time_point;
using Millis = std::chrono::milliseconds;

// Time source. Components that make time-based decisions (politeness,
// cache ttl, rate limits) take a Clock so tests can drive them.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
  virtual void sleep_for(Millis d) = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
  void sleep_for(Millis d) override;

  static SystemClock& instance();
};

// Deterministic clock; sleep_for advances time instantly.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start = Timestamp{}) : now_(start.time_since_epoch().count()) {}

  Timestamp now() const override {
    return Timestamp{Timestamp::duration{now_.load()}};
  }
  void sleep_for(Millis d) override { advance(d); }
  void advance(Timestamp::duration d) { now_ += d.count(); }
  void set(Timestamp t) { now_ = t.time_since_epoch().count(); }

 private:
  std::atomic<Timestamp::duration::rep> now_;
};

// RFC 3339 UTC with millisecond precision, e.g. "2023-04-01T12:00:00.000Z".
std::string format_rfc3339(Timestamp t);

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff...](Z|+HH:MM|-HH:MM)". Throws
// ValidationError on anything else.
Timestamp parse_rfc3339(std::string_view s);

}  // namespace tstem
