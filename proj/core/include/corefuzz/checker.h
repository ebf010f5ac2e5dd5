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

// Runs a corpus across the cores of simulated or real machines: batching,
// sliding-window scheduling, defect records, quarantine and fleet reports.

#ifndef COREFUZZ_CHECKER_H_
#define COREFUZZ_CHECKER_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corefuzz/backend.h"
#include "corefuzz/fault_backend.h"
#include "corefuzz/player.h"
#include "corefuzz/rng.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

struct CheckConfig {
  int batch_size = 50;
  int list_length = 1000;
  int window_cores = 4;
  // Simulated CPU-time budget of one check window.
  double window_ms = 120000;
  uint64_t rng_seed = 0;
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  uint64_t flags_mask = kDefaultFlagsMask;
  int determinism_replays = 8;
  // Check windows per machine and trial; 0 means just enough windows to
  // visit every core once.
  int max_invocations = 0;

  bool operator==(const CheckConfig&) const = default;
};

absl::Status ValidateCheckConfig(const CheckConfig& config);

// Strict JSON: unknown keys and out-of-range values are rejected. Missing
// keys take the defaults above; flags_mask is written like "CF|ZF|SF|OF".
absl::StatusOr<CheckConfig> ParseCheckConfig(std::string_view json_text);
std::string CheckConfigToJson(const CheckConfig& config);

enum class MachineKind : uint8_t { kInterp, kNative };

struct MachineSpec {
  std::string machine_id;
  int num_cores = 8;
  MachineKind kind = MachineKind::kInterp;
  std::string platform_id = std::string(kInterpPlatform);
  std::vector<FaultProfile> profiles;
  // Seeds fault activation draws.
  uint64_t fault_seed = 0;
};

absl::Status ValidateMachine(const MachineSpec& m);

// Fleet file: {"machines": [...]} or a bare array of machine objects with
// keys machine_id, num_cores, backend ("interp"|"native"), platform,
// fault_seed and profiles.
absl::StatusOr<std::vector<MachineSpec>> ParseFleet(std::string_view json_text);
std::string FleetToJson(const std::vector<MachineSpec>& fleet);

// The backends of one machine, kept for the duration of a trial so hidden
// fault state and activation counters carry across windows.
class MachineInstance {
 public:
  // `trial` reseeds fault activation.
  static absl::StatusOr<std::unique_ptr<MachineInstance>> Create(const MachineSpec& spec,
                                                                 uint64_t trial = 0);

  const MachineSpec& spec() const { return spec_; }
  Backend& core(int i) { return *cores_[i]; }

 private:
  MachineSpec spec_;
  std::vector<std::unique_ptr<Backend>> cores_;
};

// Snapshot storage with instrumented loads.
class CorpusSource {
 public:
  virtual ~CorpusSource() = default;
  virtual size_t size() const = 0;
  virtual absl::StatusOr<Snapshot> Load(size_t index) = 0;

  uint64_t loads() const { return loads_; }

 protected:
  uint64_t loads_ = 0;
};

class MemoryCorpus : public CorpusSource {
 public:
  explicit MemoryCorpus(std::vector<Snapshot> snapshots) : snapshots_(std::move(snapshots)) {}

  size_t size() const override { return snapshots_.size(); }
  absl::StatusOr<Snapshot> Load(size_t index) override;

 private:
  std::vector<Snapshot> snapshots_;
};

// Reads snapshot files on demand.
class DirectoryCorpus : public CorpusSource {
 public:
  static absl::StatusOr<std::unique_ptr<DirectoryCorpus>> Open(const std::string& dir);

  size_t size() const override { return files_.size(); }
  absl::StatusOr<Snapshot> Load(size_t index) override;

 private:
  std::vector<std::string> files_;
};

// Cores [(k*w) mod n, ...) of size min(w, n) for invocation k.
std::vector<int> SlidingWindowSchedule(int num_cores, int window_cores, uint64_t invocation);

// Windows needed before every core has been visited: n / gcd(w, n).
int WindowsToCoverAll(int num_cores, int window_cores);

// Splits a seeded permutation of [0, corpus_size) into batches of
// `batch_size` (the last one may be smaller).
std::vector<std::vector<size_t>> DrawBatches(size_t corpus_size, int batch_size, Rng& rng);

// `list_length` indices into a batch of `batch_len`, uniform with
// replacement.
std::vector<size_t> BuildExecutionList(size_t batch_len, int list_length, Rng& rng);

// One batch of `ids` drawn without replacement, then the execution list over
// it as (snapshot id, list position) pairs.
std::vector<std::pair<std::string, size_t>> BuildExecutionList(
    const std::vector<std::string>& ids, const CheckConfig& config, Rng& rng);

struct CheckOutcome {
  Outcome outcome;
  std::string machine_id;
  uint64_t seed = 0;
  uint64_t trial = 0;
  uint64_t invocation = 0;
  size_t batch = 0;
  size_t position = 0;
};

std::string CheckOutcomeToJson(const CheckOutcome& o);

struct BatchStats {
  uint64_t loads = 0;
  uint64_t executions = 0;
  // Executions per core of the window, in window order.
  std::vector<uint64_t> per_core;
  // Longest per-core CPU time; cores run in parallel.
  double elapsed_ms = 0;
};

struct CheckSummary {
  std::vector<int> cores;
  std::vector<BatchStats> batches;
  uint64_t executions = 0;
  std::map<Verdict, uint64_t> verdicts;
  double elapsed_ms = 0;
  // Summed CPU time over all executions.
  double cpu_time_ms = 0;
  bool corpus_exhausted = false;
};

struct CheckResult {
  std::vector<CheckOutcome> outcomes;
  CheckSummary summary;
};

struct RunCheckOptions {
  uint64_t invocation = 0;
  uint64_t trial = 0;
  // Worker threads across the window's cores.
  int jobs = 1;
  // Ends the window after the first batch with a MISMATCH.
  bool stop_at_first_mismatch = false;
};

// One check window: the window's cores each run a round-robin share of
// every batch's execution list until the window budget is spent or the
// corpus is exhausted.
absl::StatusOr<CheckResult> RunCheck(MachineInstance& machine, CorpusSource& corpus,
                                     const CheckConfig& config,
                                     const RunCheckOptions& options = {});

struct DefectRecord {
  std::string machine_id;
  int core_id = 0;
  std::string snapshot_id;
  std::string signature;
  double first_seen_cpu_time_ms = 0;
  uint64_t occurrences = 0;
  // Independent runs (trials) that reproduced the defect.
  std::set<uint64_t> reproduced_runs;
};

// Groups MISMATCH outcomes by (machine, core, snapshot, signature).
std::vector<DefectRecord> CollectDefects(const std::vector<CheckOutcome>& outcomes);

// Tags every snapshot named in `defects` as quarantined (reassigning ids).
std::vector<Snapshot> QuarantineUpdate(const std::vector<Snapshot>& corpus,
                                       const std::vector<DefectRecord>& defects);

struct TtfStats {
  size_t count = 0;
  double min = 0;
  double median = 0;
  double max = 0;
  double mean = 0;
};

TtfStats ComputeTtfStats(std::vector<double> samples);

struct MachineReport {
  std::string machine_id;
  uint64_t trials = 0;
  uint64_t trials_detected = 0;
  // Per trial: simulated CPU time up to and including the first MISMATCH.
  std::vector<std::optional<double>> time_to_failure_ms;
  std::map<int, uint64_t> core_mismatches;
  std::map<std::string, uint64_t> signatures;

  bool detected() const { return trials_detected > 0; }
};

struct FleetReport {
  std::vector<MachineReport> machines;
  std::vector<DefectRecord> defects;
  std::map<std::string, uint64_t> signature_histogram;
  TtfStats time_to_failure;
  // Among detected machines, the fraction whose mismatching cores are
  // exactly one sibling pair {2i, 2i+1}; nullopt with no detections.
  std::optional<double> sibling_pair_fraction;
  uint64_t executions = 0;
  uint64_t mismatches = 0;
};

struct FleetOptions {
  uint64_t trials = 1;
  int jobs = 1;
  // Ends a trial's windows after the first detecting window.
  bool stop_at_detection = false;
  // Receives every outcome in execution order.
  std::function<void(const CheckOutcome&)> sink;
};

absl::StatusOr<FleetReport> FleetSimulate(const std::vector<MachineSpec>& machines,
                                          CorpusSource& corpus, const CheckConfig& config,
                                          const FleetOptions& options = {});

std::string FleetReportToJson(const FleetReport& report);

// Signature histogram and per-machine, per-core mismatch map of an outcome
// log, as JSON.
absl::StatusOr<std::string> TriageLog(std::string_view ndjson);

}  // namespace corefuzz

#endif  // COREFUZZ_CHECKER_H_
