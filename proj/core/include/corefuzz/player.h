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

// Replays a snapshot on a backend and classifies the result against the
// snapshot's expected end states.

#ifndef COREFUZZ_PLAYER_H_
#define COREFUZZ_PLAYER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "corefuzz/backend.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

struct PlayerConfig {
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  uint64_t flags_mask = kDefaultFlagsMask;
  bool checksum_all = false;
};

enum class Verdict : uint8_t { kMatch, kMismatch, kTimeout, kHarnessAnomaly };

std::string_view VerdictName(Verdict v);
std::optional<Verdict> ParseVerdict(std::string_view name);

// Declared in precedence order: the first differing category wins.
enum class MismatchCategory : uint8_t {
  kRegister,
  kFlags,
  kEndPc,
  kMemory,
  kSignalUnexpected,
  kSignalMissing,
};

std::string_view MismatchCategoryName(MismatchCategory c);

struct MismatchDetail {
  MismatchCategory category = MismatchCategory::kRegister;
  // REGISTER: first differing register and expected ^ actual.
  std::string reg;
  uint64_t xor_value = 0;
  // FLAGS: masked rflags.
  uint64_t expected_flags = 0;
  uint64_t actual_flags = 0;
  // END_PC.
  uint64_t expected_rip = 0;
  uint64_t actual_rip = 0;
  // MEMORY: start of the first mapping whose checksum differs.
  uint64_t mapping_start = 0;
  // SIGNAL_*.
  SignalRecord expected_signal;
  SignalRecord actual_signal;

  bool operator==(const MismatchDetail&) const = default;
};

struct Outcome {
  Verdict verdict = Verdict::kMatch;
  std::optional<std::string> matched_platform;
  std::optional<MismatchDetail> mismatch;
  int core_id = 0;
  std::string snapshot_id;
  // Simulated on interpreter backends, measured wall time on native.
  double cpu_time_ms = 0;
  uint64_t instr_count = 0;
  // Why a TIMEOUT or HARNESS_ANOMALY happened.
  std::string error;
};

// The observed end state: canonical registers and checksums of the
// mappings the plan checksummed.
EndState ActualEndState(const PlanResult& result);

// True when `actual` equals `expected` with rflags compared under `mask`.
// Only the checksums present in `expected` are compared.
bool EndStatesMatch(const EndState& expected, const EndState& actual, uint64_t flags_mask);

// Classifies a difference; nullopt when the states match.
std::optional<MismatchDetail> ClassifyMismatch(const EndState& expected, const EndState& actual,
                                               uint64_t flags_mask);

// Canonical grouping key, e.g. "REGISTER:rax:bits=1" or "FLAGS:sticky=ZF".
std::string TriageSignature(const MismatchDetail& d);

// Plays `s` on `backend`. A harness anomaly is retried once after
// recycling the harness.
Outcome Play(Backend& backend, const Snapshot& s, const PlayerConfig& config = {});

// Single-line JSON rendering of an outcome.
std::string OutcomeToJson(const Outcome& o);

}  // namespace corefuzz

#endif  // COREFUZZ_PLAYER_H_
