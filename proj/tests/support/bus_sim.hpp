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


// Randomized crash/restart simulation for the log bus. A "crash" drops the
// bus and its consumer without committing, optionally leaving a torn record
// at the end of the log, and reopens from disk.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tstem/bus.hpp"

namespace tstem::testing {

struct BusSimResult {
  bool ok = true;
  std::string detail;
  std::size_t published = 0;
  std::size_t processed = 0;
  std::size_t crashes = 0;
  std::size_t torn_tails = 0;
};

inline BusSimResult run_bus_crash_simulation(std::uint64_t seed, const std::filesystem::path& dir) {
  BusSimResult res;
  auto fail = [&](std::string why) {
    if (res.ok) {
      res.ok = false;
      res.detail = std::move(why);
    }
  };
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(seed);
  const std::size_t total = 20 + rng() % 61;
  const std::string topic = "sim.topic";
  std::vector<std::string> published;
  std::map<std::string, std::size_t> processed;
  auto rand_payload = [&](std::size_t i) {
    std::string p = "{\"seed\":" + std::to_string(seed) + ",\"i\":" + std::to_string(i) + ",\"pad\":\"";
    p.append(rng() % 64, 'x');
    return p + "\"}";
  };

  for (int life = 0; life < 500 && res.ok; ++life) {
    BusOptions opts{dir, (rng() % 4 == 0) ? Durability::sync : Durability::buffered};
    LogBus bus(opts);
    if (published.empty()) {
      if (bus.head(topic)) fail("fresh topic is not empty");
    } else if (bus.head(topic) != published.size() - 1) {
      fail("head after restart is " + std::to_string(bus.head(topic).value_or(~0ull)) + ", expected " +
           std::to_string(published.size() - 1));
    }
    auto consumer = bus.consumer("sim-group", topic);

    bool crash = false;
    for (int step = 0; step < 8 && !crash && res.ok; ++step) {
      for (auto k = rng() % 4; k > 0 && published.size() < total; --k) {
        auto p = rand_payload(published.size());
        auto off = bus.publish(topic, p);
        if (off != published.size()) fail("offset gap: got " + std::to_string(off));
        published.push_back(p);
      }
      auto position = bus.position("sim-group");
      auto batch = consumer->poll(1 + rng() % 6);
      std::uint64_t expect = position;
      for (const auto& r : batch) {
        if (r.offset != expect) fail("non-FIFO delivery at offset " + std::to_string(r.offset));
        if (r.offset >= published.size() || r.payload != published[r.offset]) fail("payload mismatch");
        ++expect;
      }
      // Process a prefix of the batch; the crash point is random.
      std::size_t done = batch.empty() ? 0 : rng() % (batch.size() + 1);
      for (std::size_t i = 0; i < done; ++i) ++processed[batch[i].payload];
      if (rng() % 5 == 0) {
        crash = true;  // between processing and commit
      } else if (done > 0) {
        consumer->commit(batch[done - 1].offset);
      }
    }
    consumer.reset();
    if (crash) {
      ++res.crashes;
      bus.close();
    }
    bool all_done = published.size() == total && bus.position("sim-group") == total;
    if (all_done) break;
    if (crash && rng() % 2 == 0) {
      // Torn write: a record header promising more bytes than follow.
      ++res.torn_tails;
      std::ofstream f(dir / "topics" / (topic + ".log"), std::ios::app | std::ios::binary);
      std::string junk(4 + rng() % 30, '\x07');
      junk[0] = '\x40';
      f.write(junk.data(), static_cast<std::streamsize>(junk.size()));
    }
  }

  res.published = published.size();
  for (const auto& [p, n] : processed) res.processed += n;
  if (published.size() != total) fail("simulation did not publish everything");
  for (const auto& p : published) {
    if (processed.find(p) == processed.end()) {
      fail("payload never processed: " + p);
      break;
    }
  }
  LogBus final_bus(BusOptions{dir});
  auto reader = final_bus.consumer("audit", topic);
  auto all = reader->poll(total + 10);
  if (all.size() != published.size()) fail("log holds " + std::to_string(all.size()) + " records");
  for (std::size_t i = 0; i < all.size() && i < published.size(); ++i) {
    if (all[i].offset != i || all[i].payload != published[i]) {
      fail("log content differs at offset " + std::to_string(i));
      break;
    }
  }
  return res;
}

}  // namespace tstem::testing
