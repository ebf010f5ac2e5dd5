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

#include "corefuzz/backend.h"

#include "absl/strings/str_cat.h"

namespace corefuzz {

std::string_view BackendKindName(BackendKind kind) {
  switch (kind) {
    case BackendKind::kInterp: return "INTERP";
    case BackendKind::kInterpFaulted: return "INTERP_FAULTED";
    case BackendKind::kNative: return "NATIVE";
  }
  return "?";
}

namespace {

absl::StatusOr<PlanResult> RunPlanUnchecked(CommandExecutor& executor,
                                            const std::vector<Command>& plan) {
  PlanResult result;
  bool executed = false;
  for (const Command& c : plan) {
    absl::StatusOr<Response> r = executor.Send(c);
    if (!r.ok()) return r.status();
    if (const auto* err = std::get_if<ErrResponse>(&*r)) {
      if (err->code == HarnessError::kTimeout) {
        return absl::DeadlineExceededError("snapshot exceeded its CPU time limit");
      }
      if (err->code == HarnessError::kUnexpectedSignal) {
        return absl::UnavailableError("harness stopped on a signal outside the modeled set");
      }
      return absl::FailedPreconditionError(
          absl::StrCat("harness rejected ", std::string(CommandName(c)), " (error ",
                       static_cast<int>(err->code), ")"));
    }
    const bool ok = std::visit(
        [&](const auto& cmd) -> bool {
          using T = std::decay_t<decltype(cmd)>;
          if constexpr (std::is_same_v<T, ExecCommand>) {
            executed = true;
            result.raw.instr_count = executor.last_instr_count();
            if (const auto* regs = std::get_if<RegsResponse>(&*r)) {
              result.raw.registers = regs->registers;
              result.raw.signal = SignalRecord{Signal::kTrap, 0};
              return true;
            }
            if (const auto* fault = std::get_if<FaultResponse>(&*r)) {
              result.raw.registers = fault->registers;
              result.raw.signal = fault->signal;
              return true;
            }
            return false;
          } else if constexpr (std::is_same_v<T, ChecksumCommand>) {
            const auto* sum = std::get_if<SumResponse>(&*r);
            if (sum == nullptr) return false;
            result.checksums.push_back(MemoryChecksum{cmd.start, cmd.num_bytes, sum->checksum});
            return true;
          } else if constexpr (std::is_same_v<T, ReadCommand>) {
            const auto* data = std::get_if<DataResponse>(&*r);
            if (data == nullptr || data->bytes.size() != cmd.num_bytes) return false;
            result.raw.writable_memory.push_back(MemoryImage{cmd.start, data->bytes});
            return true;
          } else {
            return std::holds_alternative<OkResponse>(*r);
          }
        },
        c);
    if (!ok) {
      return absl::UnavailableError(
          absl::StrCat("unexpected response to ", std::string(CommandName(c))));
    }
  }
  if (!executed) return absl::InvalidArgumentError("plan has no EXEC command");
  return result;
}

}  // namespace

absl::StatusOr<PlanResult> RunPlan(CommandExecutor& executor, const std::vector<Command>& plan) {
  absl::StatusOr<PlanResult> r = RunPlanUnchecked(executor, plan);
  // An aborted plan leaves mappings behind; tear them down so the harness
  // can take the next snapshot. A dead harness is recycled by the caller.
  if (!r.ok() && r.status().code() != absl::StatusCode::kUnavailable) {
    (void)executor.Send(ExitCommand{});
  }
  return r;
}

absl::StatusOr<PlanResult> Backend::Run(const Snapshot& s, const RunOptions& options) {
  PlanOptions plan_options;
  plan_options.cpu_time_limit_ms = options.cpu_time_limit_ms;
  plan_options.checksum_all = options.checksum_all;
  plan_options.read_back = true;
  for (const MemoryMapping& m : s.mappings) {
    for (const AddressRange& r : descriptor_.reserved) {
      if (r.Overlaps(m.start, m.end())) {
        return absl::FailedPreconditionError(
            absl::StrCat("mapping ", HexU64(m.start), " collides with a reserved range"));
      }
    }
  }
  return RunPlan(executor(), PlanCommands(s, plan_options));
}

absl::StatusOr<RawEndState> Backend::Execute(const Snapshot& s, const ExecLimits& limits) {
  SetInstrCap(limits.max_instrs);
  absl::StatusOr<PlanResult> r = Run(s, RunOptions{limits.cpu_time_limit_ms, false});
  if (!r.ok()) return r.status();
  return std::move(r->raw);
}

absl::StatusOr<Response> InterpExecutor::Send(const Command& command) {
  auto status_to_err = [](const absl::Status& st) -> Response {
    return ErrResponse{st.code() == absl::StatusCode::kAlreadyExists ? HarnessError::kMapFailed
                                                                     : HarnessError::kBadAddress};
  };
  if (const auto* m = std::get_if<MapCommand>(&command)) {
    if (absl::Status st = mem_.Map(m->start, m->num_bytes); !st.ok()) return status_to_err(st);
    return OkResponse{};
  }
  if (const auto* w = std::get_if<WriteCommand>(&command)) {
    if (absl::Status st = mem_.Write(w->start, w->bytes); !st.ok()) return status_to_err(st);
    return OkResponse{};
  }
  if (const auto* p = std::get_if<ProtectCommand>(&command)) {
    if (absl::Status st = mem_.Protect(p->start, p->num_bytes, p->perms); !st.ok()) {
      return status_to_err(st);
    }
    return OkResponse{};
  }
  if (const auto* e = std::get_if<ExecCommand>(&command)) {
    if (on_exec_) on_exec_();
    const ExecLimits limits{instr_cap_, e->cpu_time_limit_ms};
    ExecResult r = Execute(mem_, e->registers, limits.InstrBudget(), hooks_, nullptr);
    last_instr_count_ = r.instr_count;
    if (r.timed_out) return ErrResponse{HarnessError::kTimeout};
    if (r.signal.signal == Signal::kTrap) return RegsResponse{r.registers};
    return FaultResponse{r.signal, r.registers};
  }
  if (const auto* c = std::get_if<ChecksumCommand>(&command)) {
    absl::StatusOr<std::vector<uint8_t>> bytes = mem_.Read(c->start, c->num_bytes);
    if (!bytes.ok()) return ErrResponse{HarnessError::kBadAddress};
    return SumResponse{ChecksumMemory(*bytes)};
  }
  if (const auto* r = std::get_if<ReadCommand>(&command)) {
    absl::StatusOr<std::vector<uint8_t>> bytes = mem_.Read(r->start, r->num_bytes);
    if (!bytes.ok()) return ErrResponse{HarnessError::kBadAddress};
    return DataResponse{std::move(*bytes)};
  }
  // EXIT: drop the address space so the next plan starts clean.
  mem_.Clear();
  return OkResponse{};
}

InterpBackend::InterpBackend(int core_id, std::string platform_id, uint64_t flags_mask)
    : InterpBackend(BackendDescriptor{BackendKind::kInterp, std::move(platform_id), core_id,
                                      flags_mask, {}},
                    nullptr) {}

InterpBackend::InterpBackend(BackendDescriptor descriptor, ExecHooks* hooks)
    : Backend(std::move(descriptor)), executor_(hooks) {}

}  // namespace corefuzz
