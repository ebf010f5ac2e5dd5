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

// The reference interpreter for the instruction subset, with coverage
// instrumentation and hook points for fault injection.

#ifndef COREFUZZ_INTERPRETER_H_
#define COREFUZZ_INTERPRETER_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "absl/status/statusor.h"
#include "corefuzz/address_space.h"
#include "corefuzz/isa.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

// Sorted, duplicate-free coverage feature ids.
using CoverageSet = std::vector<uint32_t>;

// Feature classes (top byte of a feature id).
inline constexpr uint32_t kFeatureInstr = 0x01000000;
inline constexpr uint32_t kFeatureBranch = 0x02000000;
inline constexpr uint32_t kFeatureEdge = 0x03000000;
inline constexpr uint32_t kFeatureDecodeError = 0x04000000;
inline constexpr uint32_t kFeatureOperandForm = 0x05000000;

inline uint32_t InstrFeature(const Instr& i) {
  return kFeatureInstr | static_cast<uint32_t>(i.opcode) * 256 | CoveragePrefixBits(i);
}

// Sorts and deduplicates in place.
void NormalizeCoverage(CoverageSet& c);

// Simulated CPU cost of one executed instruction (or REP iteration).
inline constexpr uint64_t kSimulatedNsPerInstr = 1000;

inline uint64_t SimulatedCpuMs(uint64_t instr_count) {
  return instr_count * kSimulatedNsPerInstr / 1000000;
}

struct ExecLimits {
  uint64_t max_instrs = 10'000'000;
  uint64_t cpu_time_limit_ms = 3000;

  // The effective instruction budget under the simulated clock.
  uint64_t InstrBudget() const;
};

struct MemoryImage {
  uint64_t start = 0;
  std::vector<uint8_t> bytes;

  bool operator==(const MemoryImage&) const = default;
};

// What a backend observed when a snapshot stopped.
struct RawEndState {
  RegisterState registers;
  std::vector<MemoryImage> writable_memory;
  SignalRecord signal;
  uint64_t instr_count = 0;

  bool operator==(const RawEndState&) const = default;
};

// Side effects a defective core may drop.
enum class SideEffect : uint8_t { kFlags, kStackPointer, kStringPointers };

std::string_view SideEffectName(SideEffect e);
std::optional<SideEffect> ParseSideEffect(std::string_view name);

// Hook points used to model defective cores. The defaults are the identity.
class ExecHooks {
 public:
  virtual ~ExecHooks() = default;

  virtual void BeginInstruction(const Instr& instr) {}
  virtual void EndInstruction(const Instr& instr) {}
  // Final value about to be written to the destination of `instr`; `src` is
  // the source operand value (the input itself for unary operations).
  virtual uint64_t AdjustResult(const Instr& instr, uint64_t result, uint64_t src) {
    return result;
  }
  // Called after an instruction has written flags.
  virtual uint64_t AdjustFlags(const Instr& instr, uint64_t rflags) { return rflags; }
  // For UD2: a byte count to skip past the start of the UD2 instead of
  // raising SIGILL.
  virtual std::optional<uint64_t> OnIllegal(const Instr& instr) { return std::nullopt; }
  // Number of iterations a REP-prefixed string op performs for `rcx`.
  virtual uint64_t RepIterations(const Instr& instr, uint64_t rcx) { return rcx; }
  virtual bool SkipSideEffect(const Instr& instr, SideEffect effect) { return false; }
};

struct ExecResult {
  bool timed_out = false;
  RegisterState registers;
  SignalRecord signal;
  uint64_t instr_count = 0;
};

// Runs from `init` until INT3, a fault, or `instr_budget` instructions.
// `hooks` and `coverage` may be null.
ExecResult Execute(AddressSpace& mem, const RegisterState& init, uint64_t instr_budget,
                   ExecHooks* hooks, CoverageSet* coverage);

struct InterpResult {
  // DeadlineExceeded on TIMEOUT.
  absl::StatusOr<RawEndState> end_state;
  CoverageSet coverage;
  uint64_t instr_count = 0;
};

InterpResult InterpRun(const Snapshot& snapshot, const ExecLimits& limits,
                       bool collect_coverage, ExecHooks* hooks = nullptr);

// Writable memory images of `mem`, in address order.
std::vector<MemoryImage> WritableImages(const AddressSpace& mem);

}  // namespace corefuzz

#endif  // COREFUZZ_INTERPRETER_H_
