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

// Turns raw instruction bytes into replayable snapshots.

#ifndef COREFUZZ_MAKER_H_
#define COREFUZZ_MAKER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "corefuzz/backend.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

struct MakerConfig {
  int max_extra_pages = 5;
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  int determinism_replays = 8;
  Origin origin = Origin::kImported;
};

enum class RejectionReason : uint8_t {
  kInvalidInput,
  kTimeout,
  kPageBudget,
  kMappingCollision,
  kNondeterministic,
  kHarnessAnomaly,
  kMultiState,
};

std::string_view RejectionReasonName(RejectionReason r);

struct MakeRejection {
  RejectionReason reason = RejectionReason::kInvalidInput;
  std::string detail;
};

struct MakeResult {
  std::optional<Snapshot> snapshot;
  std::optional<MakeRejection> rejection;

  bool ok() const { return snapshot.has_value(); }
};

// Places `code` at kCodeAddress followed by INT3 and runs the fixing loop on
// `backend`, faulting in up to `max_extra_pages` rw pages. The result
// carries one provisional end state recorded on `backend`.
MakeResult MakeSnapshot(std::span<const uint8_t> code, Backend& backend,
                        const MakerConfig& config = {});

// True iff `replays` executions produce bit-identical raw end states.
bool VerifyDeterminism(const Snapshot& s, Backend& backend, int replays = 8,
                       const MakerConfig& config = {});

// Platforms per distinct end state.
struct MultiStateReport {
  std::string snapshot_id;
  std::vector<std::vector<std::string>> platforms_per_state;

  bool multi_state() const { return platforms_per_state.size() > 1; }
};

struct RecordedSnapshot {
  Snapshot snapshot;
  MultiStateReport report;
};

// Replaces the end states of `s` with those observed on each backend (rflags
// masked per backend before merging). DeadlineExceeded on TIMEOUT.
absl::StatusOr<RecordedSnapshot> RecordEndStates(const Snapshot& s,
                                                 const std::vector<Backend*>& backends,
                                                 const MakerConfig& config = {});

// The end state `backend` observes for `s`, with rflags under its mask.
absl::StatusOr<EndState> ObserveEndState(const Snapshot& s, Backend& backend,
                                         const MakerConfig& config = {});

struct DiscardedSnapshot {
  Snapshot snapshot;
  std::string reason;  // e.g. "2 end states"
};

struct FilterResult {
  std::vector<Snapshot> kept;
  std::vector<DiscardedSnapshot> discarded;
};

FilterResult FilterMultistate(const std::vector<RecordedSnapshot>& corpus);

// Full pipeline for one input: make on backends[0], verify determinism on
// every backend, record end states everywhere, drop multi-state results.
struct MakeRecord {
  std::optional<Snapshot> kept;
  std::optional<DiscardedSnapshot> discarded;
  std::optional<MakeRejection> rejection;
};

MakeRecord MakeOne(std::span<const uint8_t> code, const std::vector<Backend*>& backends,
                   const MakerConfig& config = {});

}  // namespace corefuzz

#endif  // COREFUZZ_MAKER_H_
