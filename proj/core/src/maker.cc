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

#include "corefuzz/maker.h"

#include "absl/strings/str_cat.h"
#include "corefuzz/address_space.h"

namespace corefuzz {

namespace {

constexpr std::string_view kReasonNames[] = {
    "INVALID_INPUT",      "TIMEOUT",         "PAGE_BUDGET", "MAPPING_COLLISION",
    "NONDETERMINISTIC", "HARNESS_ANOMALY", "MULTI_STATE",
};

MakeResult Reject(RejectionReason reason, std::string detail) {
  MakeResult r;
  r.rejection = MakeRejection{reason, std::move(detail)};
  return r;
}

// Faults at these addresses are kept as the end state instead of mapped.
bool TerminalFaultAddress(uint64_t addr) {
  return addr < kMinUserAddress || addr >= kUserAddressLimit || !IsCanonical(addr);
}

absl::StatusOr<PlanResult> RunWithRetry(Backend& backend, const Snapshot& s,
                                        const MakerConfig& config) {
  backend.Reset();
  const RunOptions options{config.cpu_time_limit_ms, false};
  absl::StatusOr<PlanResult> r = backend.Run(s, options);
  if (r.status().code() == absl::StatusCode::kUnavailable) {
    backend.Recycle();
    r = backend.Run(s, options);
  }
  return r;
}

EndState ToEndState(const PlanResult& r, const BackendDescriptor& d) {
  EndState e;
  e.registers = r.raw.registers;
  e.registers.rflags = CanonicalFlags(r.raw.registers.rflags & d.flags_mask);
  e.mem_checksums = r.checksums;
  e.signal = r.raw.signal;
  e.platforms = {d.platform_id};
  return e;
}

}  // namespace

std::string_view RejectionReasonName(RejectionReason r) {
  return kReasonNames[static_cast<int>(r)];
}

MakeResult MakeSnapshot(std::span<const uint8_t> code, Backend& backend,
                        const MakerConfig& config) {
  if (code.empty() || code.size() >= kPageSize) {
    return Reject(RejectionReason::kInvalidInput,
                  absl::StrCat("code length ", code.size(), " outside 1..4095"));
  }
  Snapshot s;
  MemoryMapping text{kCodeAddress, kPageSize, kPermR | kPermX, std::vector<uint8_t>(kPageSize, 0)};
  std::copy(code.begin(), code.end(), text.data.begin());
  text.data[code.size()] = 0xCC;
  s.mappings.push_back(std::move(text));
  s.registers.rip = kCodeAddress;
  s.metadata.origin = config.origin;

  for (int extra = 0;; ++extra) {
    absl::StatusOr<PlanResult> r = RunWithRetry(backend, s, config);
    if (r.status().code() == absl::StatusCode::kDeadlineExceeded) {
      return Reject(RejectionReason::kTimeout, std::string(r.status().message()));
    }
    if (r.status().code() == absl::StatusCode::kFailedPrecondition) {
      return Reject(RejectionReason::kMappingCollision, std::string(r.status().message()));
    }
    if (!r.ok()) return Reject(RejectionReason::kHarnessAnomaly, std::string(r.status().message()));

    const SignalRecord& sig = r->raw.signal;
    if (sig.signal == Signal::kSegv && !TerminalFaultAddress(sig.fault_address)) {
      const uint64_t page = sig.fault_address & ~(kPageSize - 1);
      if (s.FindMapping(sig.fault_address) != nullptr) {
        return Reject(RejectionReason::kMappingCollision,
                      absl::StrCat("fault at ", HexU64(sig.fault_address),
                                   " inside an existing mapping"));
      }
      for (const AddressRange& range : backend.descriptor().reserved) {
        if (range.Overlaps(page, page + kPageSize)) {
          return Reject(RejectionReason::kMappingCollision,
                        absl::StrCat("page ", HexU64(page), " is reserved by the backend"));
        }
      }
      if (extra >= config.max_extra_pages) {
        return Reject(RejectionReason::kPageBudget,
                      absl::StrCat("needs more than ", config.max_extra_pages, " extra pages"));
      }
      s.mappings.push_back(
          MemoryMapping{page, kPageSize, kPermR | kPermW, std::vector<uint8_t>(kPageSize, 0)});
      Canonicalize(s);
      continue;
    }
    s.end_states = {ToEndState(*r, backend.descriptor())};
    Canonicalize(s);
    if (absl::Status st = AssignId(s); !st.ok()) {
      return Reject(RejectionReason::kInvalidInput, std::string(st.message()));
    }
    MakeResult out;
    out.snapshot = std::move(s);
    return out;
  }
}

bool VerifyDeterminism(const Snapshot& s, Backend& backend, int replays,
                       const MakerConfig& config) {
  std::optional<RawEndState> first;
  for (int i = 0; i < replays; ++i) {
    absl::StatusOr<PlanResult> r = backend.Run(s, RunOptions{config.cpu_time_limit_ms, false});
    if (!r.ok()) return false;
    if (!first) {
      first = r->raw;
    } else if (!(r->raw == *first)) {
      return false;
    }
  }
  return true;
}

absl::StatusOr<EndState> ObserveEndState(const Snapshot& s, Backend& backend,
                                         const MakerConfig& config) {
  absl::StatusOr<PlanResult> r = RunWithRetry(backend, s, config);
  if (!r.ok()) return r.status();
  return ToEndState(*r, backend.descriptor());
}

absl::StatusOr<RecordedSnapshot> RecordEndStates(const Snapshot& s,
                                                 const std::vector<Backend*>& backends,
                                                 const MakerConfig& config) {
  RecordedSnapshot out;
  out.snapshot = s;
  out.snapshot.end_states.clear();
  for (Backend* b : backends) {
    absl::StatusOr<EndState> e = ObserveEndState(s, *b, config);
    if (!e.ok()) {
      return absl::Status(e.status().code(),
                          absl::StrCat(b->platform_id(), ": ", std::string(e.status().message())));
    }
    absl::StatusOr<Snapshot> merged = MergeEndState(out.snapshot, *e);
    if (!merged.ok()) return merged.status();
    out.snapshot = *std::move(merged);
  }
  Canonicalize(out.snapshot);
  if (absl::Status st = AssignId(out.snapshot); !st.ok()) return st;
  out.report.snapshot_id = out.snapshot.id;
  for (const EndState& e : out.snapshot.end_states) {
    out.report.platforms_per_state.push_back(e.platforms);
  }
  return out;
}

FilterResult FilterMultistate(const std::vector<RecordedSnapshot>& corpus) {
  FilterResult out;
  for (const RecordedSnapshot& r : corpus) {
    if (r.report.multi_state()) {
      out.discarded.push_back(DiscardedSnapshot{
          r.snapshot, absl::StrCat(r.report.platforms_per_state.size(), " end states")});
    } else {
      out.kept.push_back(r.snapshot);
    }
  }
  return out;
}

MakeRecord MakeOne(std::span<const uint8_t> code, const std::vector<Backend*>& backends,
                   const MakerConfig& config) {
  MakeRecord rec;
  if (backends.empty()) {
    rec.rejection = MakeRejection{RejectionReason::kInvalidInput, "no backends"};
    return rec;
  }
  MakeResult made = MakeSnapshot(code, *backends.front(), config);
  if (!made.ok()) {
    rec.rejection = made.rejection;
    return rec;
  }
  for (Backend* b : backends) {
    if (!VerifyDeterminism(*made.snapshot, *b, config.determinism_replays, config)) {
      rec.rejection = MakeRejection{RejectionReason::kNondeterministic,
                                    absl::StrCat("replays differ on ", b->platform_id())};
      return rec;
    }
  }
  absl::StatusOr<RecordedSnapshot> recorded = RecordEndStates(*made.snapshot, backends, config);
  if (!recorded.ok()) {
    const RejectionReason reason =
        recorded.status().code() == absl::StatusCode::kDeadlineExceeded
            ? RejectionReason::kTimeout
            : recorded.status().code() == absl::StatusCode::kFailedPrecondition
                  ? RejectionReason::kMappingCollision
                  : RejectionReason::kHarnessAnomaly;
    rec.rejection = MakeRejection{reason, std::string(recorded.status().message())};
    return rec;
  }
  FilterResult filtered = FilterMultistate({*recorded});
  if (!filtered.kept.empty()) {
    rec.kept = std::move(filtered.kept.front());
  } else {
    rec.discarded = std::move(filtered.discarded.front());
    rec.rejection = MakeRejection{RejectionReason::kMultiState, rec.discarded->reason};
  }
  return rec;
}

}  // namespace corefuzz
