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

// Coverage-guided mutation fuzzing of a software proxy for the CPU, plus
// dictionary construction and corpus distillation.

#ifndef COREFUZZ_FUZZ_ENGINE_H_
#define COREFUZZ_FUZZ_ENGINE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corefuzz/interpreter.h"
#include "corefuzz/rng.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

enum class Proxy : uint8_t {
  kDecoder,      // decode-path features only
  kInterpreter,  // full interpreter coverage
};

std::string_view ProxyName(Proxy p);
// Accepts "decoder"/"interp" and the upper-case enum names.
std::optional<Proxy> ParseProxy(std::string_view name);

// Per-execution instruction cap for the interpreter proxy.
inline constexpr uint64_t kDefaultProxyInstrs = 2000;

struct FuzzConfig {
  uint64_t rng_seed = 0;
  size_t max_len = 128;
  // Mutation iterations after the seeds are evaluated.
  uint64_t budget = 10000;
  std::vector<std::vector<uint8_t>> dictionary;
  // Defaults to {{0x90}} when empty.
  std::vector<std::vector<uint8_t>> seed_corpus;
  Proxy proxy = Proxy::kInterpreter;
  uint64_t proxy_max_instrs = kDefaultProxyInstrs;
};

absl::Status ValidateFuzzConfig(const FuzzConfig& config);

struct CorpusEntry {
  std::vector<uint8_t> bytes;
  CoverageSet coverage;
  // Proxy instruction count.
  uint64_t exec_cost = 0;
  Origin origin = Origin::kImported;
  // Retained by Distill regardless of coverage.
  bool quarantined = false;
  // RawId(bytes) for raw inputs; the snapshot id for snapshots.
  std::string id;

  bool operator==(const CorpusEntry&) const = default;
};

// First 20 hex characters of SHA-256 over `bytes`.
std::string RawId(std::span<const uint8_t> bytes);

CorpusEntry MakeEntry(std::vector<uint8_t> bytes, CoverageSet coverage, uint64_t exec_cost,
                      Origin origin);

// Corpus entry for a made snapshot: interpreter coverage of the snapshot as
// recorded, its id, origin and quarantine tag. `bytes` is the code page up to
// the last non-zero byte.
CorpusEntry EntryFromSnapshot(const Snapshot& s, uint64_t max_instrs = kDefaultProxyInstrs);

struct ProxyResult {
  CoverageSet coverage;
  uint64_t exec_cost = 0;
  bool timed_out = false;
};

// Decoder proxy: instruction, operand-form and decode-error features of a
// sequential decode. Interpreter proxy: the input at kCodeAddress followed
// by INT3 with zeroed registers, run with coverage.
ProxyResult RunProxy(Proxy proxy, std::span<const uint8_t> bytes,
                     uint64_t max_instrs = kDefaultProxyInstrs);

// Operand-form feature of a decoded instruction (decoder proxy only).
uint32_t OperandFormFeature(const Instr& instr);

enum class MutationKind : uint8_t {
  kBitFlip,
  kByteReplace,
  kByteInsert,
  kByteDelete,
  kDuplicateRange,
  kDictionaryInsert,
  kCrossover,
};

inline constexpr int kNumMutationKinds = 7;

std::string_view MutationKindName(MutationKind k);

struct MutationContext {
  size_t max_len = 128;
  const std::vector<std::vector<uint8_t>>* dictionary = nullptr;
  // Crossover partners.
  const std::vector<CorpusEntry>* corpus = nullptr;
};

// Applies one mutator chosen uniformly among those applicable (dictionary
// insert needs a non-empty dictionary, crossover a non-empty corpus). The
// result length is clamped to [1, max_len].
std::vector<uint8_t> Mutate(std::span<const uint8_t> bytes, Rng& rng,
                            const MutationContext& context, MutationKind* applied = nullptr);

struct LoopLogRecord {
  uint64_t iteration = 0;
  // "seed" or a mutator name.
  std::string action;
  bool admitted = false;
  size_t new_features = 0;
  // Entry id when admitted.
  std::string id;
};

struct FuzzResult {
  std::vector<CorpusEntry> corpus;
  std::vector<LoopLogRecord> log;
  // Size of the coverage union after the seeds and after every iteration.
  std::vector<size_t> union_sizes;
  // Proxy executions performed, seeds included.
  uint64_t executions = 0;
};

// Seeds first, then `budget` iterations of pick/mutate/run/admit-if-new.
// Deterministic in the config.
FuzzResult FuzzLoop(const FuzzConfig& config);

std::string LoopLogToNdjson(const std::vector<LoopLogRecord>& log);

// Deduplicated single-instruction encodings decoded from `samples`, in
// byte-lexicographic order. INT3 is never included.
std::vector<std::vector<uint8_t>> BuildDictionary(
    const std::vector<std::vector<uint8_t>>& samples);

// One hex-encoded entry per line; blank lines and '#' comments are ignored.
absl::StatusOr<std::vector<std::vector<uint8_t>>> ParseDictionary(std::string_view text);
std::string DictionaryToText(const std::vector<std::vector<uint8_t>>& dictionary);

// Sorted union of the entries' coverage.
CoverageSet UnionCoverage(const std::vector<CorpusEntry>& corpus);

// Greedy set cover: quarantined entries first (input order), then entries
// by most new features, ties by smaller exec_cost, then smaller id, until
// the union equals the input union.
std::vector<CorpusEntry> Distill(const std::vector<CorpusEntry>& corpus);

// The best `n` of `corpus` by the same greedy rule, ignoring quarantine.
std::vector<CorpusEntry> GreedyBestN(const std::vector<CorpusEntry>& corpus, size_t n);

// Writes "<id>.raw" files plus "loop_log.ndjson" (when `log` is given).
absl::Status WriteRawCorpus(const std::string& dir, const std::vector<CorpusEntry>& corpus,
                            const std::vector<LoopLogRecord>* log = nullptr);

// Reads every "*.raw" file in `dir`, sorted by file name.
absl::StatusOr<std::vector<std::vector<uint8_t>>> ReadRawCorpus(const std::string& dir);

}  // namespace corefuzz

#endif  // COREFUZZ_FUZZ_ENGINE_H_
