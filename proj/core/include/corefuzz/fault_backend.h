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

// Simulated defective cores: fault profiles and the interpreter wrapper that
// applies them.

#ifndef COREFUZZ_FAULT_BACKEND_H_
#define COREFUZZ_FAULT_BACKEND_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corefuzz/backend.h"
#include "corefuzz/interpreter.h"
#include "corefuzz/isa.h"

namespace corefuzz {

// Flips `bit_index` of the result. With `trigger_clear_bit`, only when that
// bit of the source operand is clear.
struct BitFlipResult {
  std::vector<Opcode> opcodes;
  int bit_index = 0;
  std::optional<int> trigger_clear_bit;
};

// UD2 raises nothing; execution resumes `skip_len` bytes past its start.
struct IllegalOvershoot {
  uint64_t skip_len = 2;
};

// `flag` reads as set after every flag-writing instruction.
struct StickyFlag {
  uint64_t flag = kFlagZF;
};

// REP string ops with rcx >= min_count run rcx - 1 iterations.
struct RepUndershoot {
  uint64_t min_count = 2;
};

// Executing an arm opcode breaks the core for the next `duration`
// instructions, during which victim results have bit 0 flipped.
struct HiddenStateMiscompute {
  std::vector<Opcode> arm_opcodes;
  std::vector<Opcode> victim_opcodes;
  uint64_t duration = 1;
};

struct SkipSideEffectFault {
  std::vector<Opcode> opcodes;
  SideEffect effect = SideEffect::kFlags;
};

using FaultEffect = std::variant<BitFlipResult, IllegalOvershoot, StickyFlag, RepUndershoot,
                                 HiddenStateMiscompute, SkipSideEffectFault>;

struct FaultProfile {
  std::string name;
  std::set<int> active_cores;
  double activation_probability = 1.0;
  FaultEffect effect;
};

std::string_view EffectName(const FaultEffect& e);

// Opcodes an effect alters; used for conflict detection.
std::set<Opcode> TargetOpcodes(const FaultEffect& e);

// Accepts an exact opcode name ("ADD_RM_R") or a mnemonic ("ADD").
absl::StatusOr<std::vector<Opcode>> ResolveOpcodes(std::string_view name);

absl::Status ValidateProfile(const FaultProfile& p);
// Validates every profile and rejects pairs that target a common opcode on a
// common core.
absl::Status ValidateProfiles(const std::vector<FaultProfile>& profiles);

// JSON: a single profile object, an array of them, or {"profiles": [...]}.
absl::StatusOr<std::vector<FaultProfile>> ParseFaultProfiles(std::string_view json_text);
absl::StatusOr<std::vector<FaultProfile>> LoadFaultProfiles(const std::string& path);
std::string FaultProfilesToJson(const std::vector<FaultProfile>& profiles);

// Interpreter hooks implementing the profiles for one core. Hidden state
// survives across executions until Reset().
class FaultHooks : public ExecHooks {
 public:
  FaultHooks(std::vector<FaultProfile> profiles, uint64_t seed, int core_id);

  // Draws activations for the next execution.
  void BeginExecution();
  void Reset();

  uint64_t executions() const { return exec_counter_; }
  // Profiles active in the current execution.
  const std::vector<bool>& active() const { return active_; }

  void EndInstruction(const Instr& instr) override;
  uint64_t AdjustResult(const Instr& instr, uint64_t result, uint64_t src) override;
  uint64_t AdjustFlags(const Instr& instr, uint64_t rflags) override;
  std::optional<uint64_t> OnIllegal(const Instr& instr) override;
  uint64_t RepIterations(const Instr& instr, uint64_t rcx) override;
  bool SkipSideEffect(const Instr& instr, SideEffect effect) override;

 private:
  std::vector<FaultProfile> profiles_;
  uint64_t seed_;
  int core_id_;
  uint64_t exec_counter_ = 0;
  std::vector<bool> active_;
  std::vector<uint64_t> broken_remaining_;  // per profile, hidden state
};

class FaultBackend : public InterpBackend {
 public:
  // Profiles must be valid; see MakeFaultBackend.
  FaultBackend(std::vector<FaultProfile> profiles, uint64_t seed, int core_id,
               std::string platform_id = std::string(kInterpPlatform),
               uint64_t flags_mask = kDefaultFlagsMask);

  void Reset() override { hooks_->Reset(); }
  const FaultHooks& hooks() const { return *hooks_; }

 private:
  FaultBackend(std::unique_ptr<FaultHooks> hooks, int core_id, std::string platform_id,
               uint64_t flags_mask);

  std::unique_ptr<FaultHooks> hooks_;
};

// Wraps the interpreter bound to `core_id`; InvalidArgument on bad or
// conflicting profiles.
absl::StatusOr<std::unique_ptr<FaultBackend>> MakeFaultBackend(
    const std::vector<FaultProfile>& profiles, uint64_t seed, int core_id,
    std::string platform_id = std::string(kInterpPlatform));

}  // namespace corefuzz

#endif  // COREFUZZ_FAULT_BACKEND_H_
