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

// The execution-backend contract and the clean interpreter backend.

#ifndef COREFUZZ_BACKEND_H_
#define COREFUZZ_BACKEND_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "corefuzz/address_space.h"
#include "corefuzz/commands.h"
#include "corefuzz/harness_protocol.h"
#include "corefuzz/interpreter.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

enum class BackendKind : uint8_t { kInterp, kInterpFaulted, kNative };

std::string_view BackendKindName(BackendKind kind);

inline constexpr std::string_view kInterpPlatform = "interp-v1";

// Half-open address range [start, end).
struct AddressRange {
  uint64_t start = 0;
  uint64_t end = 0;

  bool Overlaps(uint64_t s, uint64_t e) const { return s < end && start < e; }
  bool Contains(uint64_t addr) const { return addr >= start && addr < end; }
};

struct BackendDescriptor {
  BackendKind kind = BackendKind::kInterp;
  std::string platform_id{kInterpPlatform};
  int core_id = 0;
  // rflags bits that are architecturally meaningful on this platform.
  uint64_t flags_mask = kDefaultFlagsMask;
  // Address ranges snapshots must not map.
  std::vector<AddressRange> reserved;
};

// Executes driver commands one at a time: the harness side of the protocol.
class CommandExecutor {
 public:
  virtual ~CommandExecutor() = default;

  // Unavailable when the harness died or broke protocol.
  virtual absl::StatusOr<Response> Send(const Command& command) = 0;
  // Instructions retired by the last EXEC, when the executor can count them.
  virtual uint64_t last_instr_count() const { return 0; }
};

struct PlanResult {
  RawEndState raw;
  std::vector<MemoryChecksum> checksums;
};

// Sends `plan` and assembles the outcome. DeadlineExceeded on TIMEOUT,
// Unavailable on a harness anomaly, FailedPrecondition when the harness
// rejects a setup command (e.g. a mapping collision).
absl::StatusOr<PlanResult> RunPlan(CommandExecutor& executor, const std::vector<Command>& plan);

struct RunOptions {
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  bool checksum_all = false;
};

class Backend {
 public:
  explicit Backend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {}
  virtual ~Backend() = default;

  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const BackendDescriptor& descriptor() const { return descriptor_; }
  int core_id() const { return descriptor_.core_id; }
  const std::string& platform_id() const { return descriptor_.platform_id; }

  // Plays `s` through the command plan (with read-back of writable memory).
  absl::StatusOr<PlanResult> Run(const Snapshot& s, const RunOptions& options = {});

  // Raw execution contract shared by all backends.
  absl::StatusOr<RawEndState> Execute(const Snapshot& s, const ExecLimits& limits = {});

  // Replaces a dead harness; a no-op for in-process backends.
  virtual void Recycle() {}
  // Clears any state carried between executions.
  virtual void Reset() {}

 protected:
  virtual CommandExecutor& executor() = 0;
  // Upper bound on retired instructions, when the backend can enforce one.
  virtual void SetInstrCap(uint64_t max_instrs) {}

  BackendDescriptor descriptor_;
};

// The in-process interpreter behind the command abstraction.
class InterpExecutor : public CommandExecutor {
 public:
  explicit InterpExecutor(ExecHooks* hooks = nullptr) : hooks_(hooks) {}

  absl::StatusOr<Response> Send(const Command& command) override;
  uint64_t last_instr_count() const override { return last_instr_count_; }

  void set_instr_cap(uint64_t cap) { instr_cap_ = cap; }
  // Invoked at the start of every EXEC.
  void set_on_exec(std::function<void()> f) { on_exec_ = std::move(f); }

 private:
  AddressSpace mem_;
  ExecHooks* hooks_;
  uint64_t instr_cap_ = ExecLimits{}.max_instrs;
  uint64_t last_instr_count_ = 0;
  std::function<void()> on_exec_;
};

class InterpBackend : public Backend {
 public:
  explicit InterpBackend(int core_id = 0, std::string platform_id = std::string(kInterpPlatform),
                         uint64_t flags_mask = kDefaultFlagsMask);

 protected:
  InterpBackend(BackendDescriptor descriptor, ExecHooks* hooks);

  CommandExecutor& executor() override { return executor_; }
  void SetInstrCap(uint64_t max_instrs) override { executor_.set_instr_cap(max_instrs); }

  InterpExecutor executor_;
};

}  // namespace corefuzz

#endif  // COREFUZZ_BACKEND_H_
