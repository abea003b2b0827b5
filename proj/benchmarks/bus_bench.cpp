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

#include <filesystem>
#include <string>
#include <unistd.h>

#include <benchmark/benchmark.h>

#include "tstem/bus.hpp"

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const char* name) {
  auto d = fs::temp_directory_path() / (std::string("tstem_bench_") + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

void BM_Publish(benchmark::State& state) {
  auto dir = fresh_dir("publish");
  {
    tstem::BusOptions o;
    o.dir = dir;
    o.durability = state.range(1) ? tstem::Durability::sync : tstem::Durability::buffered;
    tstem::LogBus bus(o);
    std::string payload(static_cast<std::size_t>(state.range(0)), 'x');
    for (auto _ : state) bus.publish("bench", payload);
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * payload.size()));
  }
  fs::remove_all(dir);
}
BENCHMARK(BM_Publish)->Args({256, 0})->Args({4096, 0})->Args({256, 1});

void BM_PollCommit(benchmark::State& state) {
  auto dir = fresh_dir("poll");
  {
    tstem::BusOptions o;
    o.dir = dir;
    o.durability = tstem::Durability::buffered;
    o.max_backlog = 0;
    tstem::LogBus bus(o);
    bus.subscribe("g", "bench");
    const auto batch = static_cast<std::size_t>(state.range(0));
    std::string payload(256, 'y');
    for (auto _ : state) {
      state.PauseTiming();
      for (std::size_t i = 0; i < batch; ++i) bus.publish("bench", payload);
      state.ResumeTiming();
      auto recs = bus.poll("g", batch);
      bus.commit("g", recs.back().offset);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
  }
  fs::remove_all(dir);
}
BENCHMARK(BM_PollCommit)->Arg(1)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
