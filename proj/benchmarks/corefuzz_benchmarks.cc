// Copyright 2026 The corefuzz Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Microbenchmarks of the hot paths: decode, interpreter runs, the player on
// both backends, the fuzz loop, distillation and one checker batch.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "benchmark/benchmark.h"
#include "corefuzz/backend.h"
#include "corefuzz/checker.h"
#include "corefuzz/fuzz_engine.h"
#include "corefuzz/generator.h"
#include "corefuzz/interpreter.h"
#include "corefuzz/isa.h"
#include "corefuzz/maker.h"
#include "corefuzz/native_backend.h"
#include "corefuzz/player.h"
#include "corefuzz/rng.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {
namespace {

const std::vector<Instr>& AllEncodings() {
  static const auto* all = [] {
    auto* v = new std::vector<Instr>;
    for (const IsaEntry& e : IsaModel()) {
      for (Instr& i : EnumerateEntry(e)) v->push_back(std::move(i));
    }
    return v;
  }();
  return *all;
}

// Random generator programs made on the interpreter.
const std::vector<Snapshot>& MadeSnapshots() {
  static const auto* snaps = [] {
    auto* v = new std::vector<Snapshot>;
    InterpBackend interp;
    for (uint64_t i = 0; v->size() < 200; ++i) {
      MakeRecord r = MakeOne(GenRandomProgram(MixSeed(0xbe, i), 12), {&interp});
      if (r.kept) v->push_back(*std::move(r.kept));
    }
    return v;
  }();
  return *snaps;
}

void BM_DecodeOne(benchmark::State& state) {
  const std::vector<Instr>& all = AllEncodings();
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(DecodeOne(all[i].raw));
    if (++i == all.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DecodeOne);

void BM_Encode(benchmark::State& state) {
  const std::vector<Instr>& all = AllEncodings();
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Encode(all[i]));
    if (++i == all.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Encode);

void BM_InterpRun(benchmark::State& state) {
  const bool coverage = state.range(0) != 0;
  const std::vector<Snapshot>& snaps = MadeSnapshots();
  size_t i = 0;
  uint64_t instrs = 0;
  for (auto _ : state) {
    InterpResult r = InterpRun(snaps[i], ExecLimits{}, coverage);
    instrs += r.instr_count;
    if (++i == snaps.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
  state.counters["instrs/s"] = benchmark::Counter(static_cast<double>(instrs),
                                                  benchmark::Counter::kIsRate);
}
BENCHMARK(BM_InterpRun)->Arg(0)->Arg(1)->ArgName("coverage");

void BM_RunProxy(benchmark::State& state) {
  const Proxy proxy = static_cast<Proxy>(state.range(0));
  std::vector<std::vector<uint8_t>> inputs;
  for (uint64_t i = 0; i < 256; ++i) inputs.push_back(GenRandomProgram(i, 12));
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(RunProxy(proxy, inputs[i]));
    if (++i == inputs.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RunProxy)
    ->Arg(static_cast<int>(Proxy::kDecoder))
    ->Arg(static_cast<int>(Proxy::kInterpreter))
    ->ArgName("proxy");

void BM_PlayInterp(benchmark::State& state) {
  const std::vector<Snapshot>& snaps = MadeSnapshots();
  InterpBackend interp;
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Play(interp, snaps[i]));
    if (++i == snaps.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PlayInterp);

void BM_PlayNative(benchmark::State& state) {
  if (!NativeSupported()) {
    state.SkipWithError("host is not x86_64 Linux");
    return;
  }
  absl::StatusOr<std::unique_ptr<NativeBackend>> native = MakeNativeBackend(0);
  if (!native.ok()) {
    state.SkipWithError(std::string(native.status().message()).c_str());
    return;
  }
  const std::vector<Snapshot>& snaps = MadeSnapshots();
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Play(**native, snaps[i]));
    if (++i == snaps.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PlayNative)->Unit(benchmark::kMicrosecond);

void BM_MakeSnapshot(benchmark::State& state) {
  InterpBackend interp;
  uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(MakeOne(GenRandomProgram(MixSeed(7, i++), 12), {&interp}));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MakeSnapshot)->Unit(benchmark::kMicrosecond);

void BM_FuzzLoop(benchmark::State& state) {
  FuzzConfig config;
  config.budget = static_cast<uint64_t>(state.range(0));
  config.proxy = Proxy::kInterpreter;
  for (auto _ : state) {
    benchmark::DoNotOptimize(FuzzLoop(config));
    ++config.rng_seed;
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FuzzLoop)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Distill(benchmark::State& state) {
  Rng rng(1);
  std::vector<CorpusEntry> corpus;
  for (int64_t i = 0; i < state.range(0); ++i) {
    CoverageSet coverage;
    for (int k = 0; k < 16; ++k) coverage.push_back(static_cast<uint32_t>(rng.Uniform(4096)));
    NormalizeCoverage(coverage);
    corpus.push_back(MakeEntry({static_cast<uint8_t>(i), static_cast<uint8_t>(i >> 8)},
                               std::move(coverage), 1 + rng.Uniform(100), Origin::kImported));
  }
  for (auto _ : state) benchmark::DoNotOptimize(Distill(corpus));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Distill)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_BuildExecutionList(benchmark::State& state) {
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(BuildExecutionList(50, 1000, rng));
}
BENCHMARK(BM_BuildExecutionList);

// One window over the 200-snapshot corpus: four batches of 1000 executions.
void BM_CheckWindow(benchmark::State& state) {
  MachineSpec spec;
  spec.machine_id = "bench";
  absl::StatusOr<std::unique_ptr<MachineInstance>> machine = MachineInstance::Create(spec);
  CheckConfig config;
  config.window_cores = 8;
  for (auto _ : state) {
    MemoryCorpus corpus(MadeSnapshots());
    benchmark::DoNotOptimize(RunCheck(**machine, corpus, config));
    ++config.rng_seed;
  }
  state.SetItemsProcessed(state.iterations() * 4000);
}
BENCHMARK(BM_CheckWindow)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace corefuzz

BENCHMARK_MAIN();
