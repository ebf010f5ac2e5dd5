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

#include "corefuzz/checker.h"

#include <algorithm>
#include <numeric>
#include <thread>

#include "absl/strings/str_cat.h"
#include "corefuzz/commands.h"
#include "corefuzz/corpus_io.h"
#include "corefuzz/native_backend.h"
#include "nlohmann/json.hpp"

namespace corefuzz {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Stable 64-bit hash of a string, for seed derivation.
uint64_t StringSeed(std::string_view s) {
  return ChecksumMemory(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

absl::Status CheckKeys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view what) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      return absl::InvalidArgumentError(absl::StrCat(std::string(what), ": unknown key \"", key, "\""));
    }
  }
  return absl::OkStatus();
}

template <typename T>
absl::Status ReadInt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return absl::OkStatus();
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    return absl::InvalidArgumentError(absl::StrCat(key, " must be an integer"));
  }
  if (v.is_number_unsigned()) {
    out = static_cast<T>(v.get<uint64_t>());
  } else {
    const int64_t x = v.get<int64_t>();
    if (std::is_unsigned_v<T> && x < 0) {
      return absl::InvalidArgumentError(absl::StrCat(key, " must be non-negative"));
    }
    out = static_cast<T>(x);
  }
  return absl::OkStatus();
}

// Integers, or "0x..." strings for values beyond what JSON numbers carry.
absl::Status ReadU64(const json& j, const char* key, uint64_t& out) {
  if (j.contains(key) && j.at(key).is_string()) {
    absl::StatusOr<uint64_t> v = ParseHexU64(j.at(key).get<std::string>());
    if (!v.ok()) return absl::InvalidArgumentError(absl::StrCat(key, ": bad hex value"));
    out = *v;
    return absl::OkStatus();
  }
  return ReadInt(j, key, out);
}

// Distinct mismatch signature of an outcome, or "".
std::string SignatureOf(const Outcome& o) {
  return o.mismatch ? TriageSignature(*o.mismatch) : std::string();
}

}  // namespace

absl::Status ValidateCheckConfig(const CheckConfig& c) {
  if (c.batch_size < 1) return absl::InvalidArgumentError("batch_size must be >= 1");
  if (c.list_length < c.batch_size) {
    return absl::InvalidArgumentError("list_length must be >= batch_size");
  }
  if (c.window_cores < 1) return absl::InvalidArgumentError("window_cores must be >= 1");
  if (!(c.window_ms > 0)) return absl::InvalidArgumentError("window_ms must be > 0");
  if (c.cpu_time_limit_ms < 1) return absl::InvalidArgumentError("cpu_time_limit_ms must be >= 1");
  if (c.determinism_replays < 1) {
    return absl::InvalidArgumentError("determinism_replays must be >= 1");
  }
  if (c.max_invocations < 0) return absl::InvalidArgumentError("max_invocations must be >= 0");
  return absl::OkStatus();
}

absl::StatusOr<CheckConfig> ParseCheckConfig(std::string_view json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return absl::InvalidArgumentError("config: expected a JSON object");
  }
  if (absl::Status st = CheckKeys(j,
                                  {"batch_size", "list_length", "window_cores", "window_ms",
                                   "rng_seed", "cpu_time_limit_ms", "flags_mask",
                                   "determinism_replays", "max_invocations"},
                                  "config");
      !st.ok()) {
    return st;
  }
  CheckConfig c;
  for (absl::Status st : {ReadInt(j, "batch_size", c.batch_size),
                          ReadInt(j, "list_length", c.list_length),
                          ReadInt(j, "window_cores", c.window_cores),
                          ReadU64(j, "rng_seed", c.rng_seed),
                          ReadInt(j, "cpu_time_limit_ms", c.cpu_time_limit_ms),
                          ReadInt(j, "determinism_replays", c.determinism_replays),
                          ReadInt(j, "max_invocations", c.max_invocations)}) {
    if (!st.ok()) return st;
  }
  if (j.contains("window_ms")) {
    if (!j["window_ms"].is_number()) return absl::InvalidArgumentError("window_ms must be a number");
    c.window_ms = j["window_ms"].get<double>();
  }
  if (j.contains("flags_mask")) {
    if (!j["flags_mask"].is_string()) {
      return absl::InvalidArgumentError("flags_mask must be a string like \"CF|ZF\"");
    }
    absl::StatusOr<uint64_t> mask = ParseFlags(j["flags_mask"].get<std::string>());
    if (!mask.ok()) return absl::InvalidArgumentError("flags_mask: unknown flag name");
    c.flags_mask = *mask;
  }
  if (absl::Status st = ValidateCheckConfig(c); !st.ok()) return st;
  return c;
}

std::string CheckConfigToJson(const CheckConfig& c) {
  ordered_json j;
  j["batch_size"] = c.batch_size;
  j["list_length"] = c.list_length;
  j["window_cores"] = c.window_cores;
  j["window_ms"] = c.window_ms;
  j["rng_seed"] = c.rng_seed;
  j["cpu_time_limit_ms"] = c.cpu_time_limit_ms;
  j["flags_mask"] = FlagsToString(c.flags_mask);
  j["determinism_replays"] = c.determinism_replays;
  j["max_invocations"] = c.max_invocations;
  return j.dump(2);
}

absl::Status ValidateMachine(const MachineSpec& m) {
  if (m.machine_id.empty()) return absl::InvalidArgumentError("machine_id is empty");
  if (m.num_cores < 1) {
    return absl::InvalidArgumentError(absl::StrCat(m.machine_id, ": num_cores must be >= 1"));
  }
  if (m.kind == MachineKind::kNative && !m.profiles.empty()) {
    return absl::InvalidArgumentError(
        absl::StrCat(m.machine_id, ": fault profiles need an interpreter machine"));
  }
  for (const FaultProfile& p : m.profiles) {
    for (int core : p.active_cores) {
      if (core < 0 || core >= m.num_cores) {
        return absl::InvalidArgumentError(absl::StrCat(m.machine_id, ": profile ", p.name,
                                                       " names core ", core, " outside [0, ",
                                                       m.num_cores, ")"));
      }
    }
  }
  if (absl::Status st = ValidateProfiles(m.profiles); !st.ok()) {
    return absl::InvalidArgumentError(
        absl::StrCat(m.machine_id, ": ", std::string(st.message())));
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<MachineSpec>> ParseFleet(std::string_view json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) return absl::InvalidArgumentError("fleet: malformed JSON");
  if (j.is_object()) {
    if (absl::Status st = CheckKeys(j, {"machines"}, "fleet"); !st.ok()) return st;
    if (!j.contains("machines")) return absl::InvalidArgumentError("fleet: missing \"machines\"");
    j = j["machines"];
  }
  if (!j.is_array() || j.empty()) {
    return absl::InvalidArgumentError("fleet: expected a non-empty list of machines");
  }
  std::vector<MachineSpec> out;
  std::set<std::string> ids;
  for (const json& m : j) {
    if (!m.is_object()) return absl::InvalidArgumentError("fleet: machine must be an object");
    if (absl::Status st = CheckKeys(
            m, {"machine_id", "num_cores", "backend", "platform", "fault_seed", "profiles"},
            "machine");
        !st.ok()) {
      return st;
    }
    MachineSpec spec;
    if (!m.contains("machine_id") || !m["machine_id"].is_string()) {
      return absl::InvalidArgumentError("machine: machine_id must be a string");
    }
    spec.machine_id = m["machine_id"].get<std::string>();
    if (absl::Status st = ReadInt(m, "num_cores", spec.num_cores); !st.ok()) return st;
    if (absl::Status st = ReadU64(m, "fault_seed", spec.fault_seed); !st.ok()) return st;
    if (m.contains("backend")) {
      const std::string b = m["backend"].is_string() ? m["backend"].get<std::string>() : "";
      if (b == "interp") {
        spec.kind = MachineKind::kInterp;
      } else if (b == "native") {
        spec.kind = MachineKind::kNative;
        spec.platform_id.clear();
      } else {
        return absl::InvalidArgumentError(
            absl::StrCat(spec.machine_id, ": backend must be \"interp\" or \"native\""));
      }
    }
    if (m.contains("platform")) {
      if (!m["platform"].is_string()) {
        return absl::InvalidArgumentError("machine: platform must be a string");
      }
      spec.platform_id = m["platform"].get<std::string>();
    }
    if (m.contains("profiles")) {
      absl::StatusOr<std::vector<FaultProfile>> p = ParseFaultProfiles(m["profiles"].dump());
      if (!p.ok()) {
        return absl::InvalidArgumentError(
            absl::StrCat(spec.machine_id, ": ", std::string(p.status().message())));
      }
      spec.profiles = *std::move(p);
    }
    if (!ids.insert(spec.machine_id).second) {
      return absl::InvalidArgumentError(absl::StrCat("duplicate machine_id ", spec.machine_id));
    }
    if (absl::Status st = ValidateMachine(spec); !st.ok()) return st;
    out.push_back(std::move(spec));
  }
  return out;
}

std::string FleetToJson(const std::vector<MachineSpec>& fleet) {
  ordered_json machines = ordered_json::array();
  for (const MachineSpec& m : fleet) {
    ordered_json j;
    j["machine_id"] = m.machine_id;
    j["num_cores"] = m.num_cores;
    j["backend"] = m.kind == MachineKind::kNative ? "native" : "interp";
    if (!m.platform_id.empty()) j["platform"] = m.platform_id;
    j["fault_seed"] = m.fault_seed;
    j["profiles"] = ordered_json::parse(FaultProfilesToJson(m.profiles));
    machines.push_back(std::move(j));
  }
  ordered_json out;
  out["machines"] = std::move(machines);
  return out.dump(2);
}

absl::StatusOr<std::unique_ptr<MachineInstance>> MachineInstance::Create(const MachineSpec& spec,
                                                                         uint64_t trial) {
  if (absl::Status st = ValidateMachine(spec); !st.ok()) return st;
  auto m = std::unique_ptr<MachineInstance>(new MachineInstance());
  m->spec_ = spec;
  for (int core = 0; core < spec.num_cores; ++core) {
    if (spec.kind == MachineKind::kNative) {
      absl::StatusOr<std::unique_ptr<NativeBackend>> b = MakeNativeBackend(core);
      if (!b.ok()) return b.status();
      m->cores_.push_back(*std::move(b));
    } else if (spec.profiles.empty()) {
      m->cores_.push_back(std::make_unique<InterpBackend>(core, spec.platform_id));
    } else {
      const uint64_t seed = MixSeed(spec.fault_seed, trial, StringSeed(spec.machine_id));
      m->cores_.push_back(
          std::make_unique<FaultBackend>(spec.profiles, seed, core, spec.platform_id));
    }
  }
  return m;
}

absl::StatusOr<Snapshot> MemoryCorpus::Load(size_t index) {
  if (index >= snapshots_.size()) return absl::OutOfRangeError("corpus index");
  ++loads_;
  return snapshots_[index];
}

absl::StatusOr<std::unique_ptr<DirectoryCorpus>> DirectoryCorpus::Open(const std::string& dir) {
  absl::StatusOr<std::vector<std::string>> files = ListFiles(dir, kSnapshotExtension);
  if (!files.ok()) return files.status();
  auto c = std::unique_ptr<DirectoryCorpus>(new DirectoryCorpus());
  c->files_ = *std::move(files);
  return c;
}

absl::StatusOr<Snapshot> DirectoryCorpus::Load(size_t index) {
  if (index >= files_.size()) return absl::OutOfRangeError("corpus index");
  ++loads_;
  return ReadSnapshotFile(files_[index]);
}

std::vector<int> SlidingWindowSchedule(int num_cores, int window_cores, uint64_t invocation) {
  const int w = std::clamp(window_cores, 1, num_cores);
  std::vector<int> out;
  const uint64_t first = (invocation % static_cast<uint64_t>(num_cores)) *
                         static_cast<uint64_t>(w) % static_cast<uint64_t>(num_cores);
  for (int i = 0; i < w; ++i) out.push_back(static_cast<int>((first + i) % num_cores));
  return out;
}

int WindowsToCoverAll(int num_cores, int window_cores) {
  const int w = std::clamp(window_cores, 1, num_cores);
  return num_cores / std::gcd(w, num_cores);
}

std::vector<std::vector<size_t>> DrawBatches(size_t corpus_size, int batch_size, Rng& rng) {
  std::vector<size_t> perm(corpus_size);
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates with the portable generator.
  for (size_t i = corpus_size; i > 1; --i) std::swap(perm[i - 1], perm[rng.Uniform(i)]);
  std::vector<std::vector<size_t>> out;
  const size_t b = static_cast<size_t>(std::max(batch_size, 1));
  for (size_t i = 0; i < corpus_size; i += b) {
    out.emplace_back(perm.begin() + i, perm.begin() + std::min(corpus_size, i + b));
  }
  return out;
}

std::vector<size_t> BuildExecutionList(size_t batch_len, int list_length, Rng& rng) {
  std::vector<size_t> out;
  if (batch_len == 0) return out;
  out.reserve(list_length);
  for (int i = 0; i < list_length; ++i) out.push_back(rng.Uniform(batch_len));
  return out;
}

std::vector<std::pair<std::string, size_t>> BuildExecutionList(
    const std::vector<std::string>& ids, const CheckConfig& config, Rng& rng) {
  std::vector<std::pair<std::string, size_t>> out;
  if (ids.empty()) return out;
  const std::vector<size_t> batch = DrawBatches(ids.size(), config.batch_size, rng).front();
  const std::vector<size_t> list = BuildExecutionList(batch.size(), config.list_length, rng);
  for (size_t pos = 0; pos < list.size(); ++pos) out.emplace_back(ids[batch[list[pos]]], pos);
  return out;
}

std::string CheckOutcomeToJson(const CheckOutcome& o) {
  ordered_json j;
  j["machine_id"] = o.machine_id;
  j["core_id"] = o.outcome.core_id;
  j["snapshot_id"] = o.outcome.snapshot_id;
  j["verdict"] = std::string(VerdictName(o.outcome.verdict));
  const std::string sig = SignatureOf(o.outcome);
  j["signature"] = sig.empty() ? ordered_json(nullptr) : ordered_json(sig);
  j["cpu_time_ms"] = o.outcome.cpu_time_ms;
  j["seed"] = o.seed;
  j["trial"] = o.trial;
  j["invocation"] = o.invocation;
  j["batch"] = o.batch;
  j["position"] = o.position;
  if (!o.outcome.error.empty()) j["error"] = o.outcome.error;
  return j.dump();
}

absl::StatusOr<CheckResult> RunCheck(MachineInstance& machine, CorpusSource& corpus,
                                     const CheckConfig& config, const RunCheckOptions& options) {
  if (absl::Status st = ValidateCheckConfig(config); !st.ok()) return st;
  const MachineSpec& spec = machine.spec();
  CheckResult result;
  CheckSummary& summary = result.summary;
  summary.cores = SlidingWindowSchedule(spec.num_cores, config.window_cores, options.invocation);
  const size_t w = summary.cores.size();
  const uint64_t seed =
      MixSeed(config.rng_seed, MixSeed(options.trial, options.invocation), StringSeed(spec.machine_id));
  Rng rng(seed);
  const PlayerConfig player{config.cpu_time_limit_ms, config.flags_mask, false};

  const std::vector<std::vector<size_t>> batches = DrawBatches(corpus.size(), config.batch_size, rng);
  size_t next_batch = 0;
  while (next_batch < batches.size() && summary.elapsed_ms < config.window_ms) {
    const std::vector<size_t>& members = batches[next_batch];
    BatchStats stats;
    stats.per_core.assign(w, 0);
    // Each batch member is read from storage exactly once.
    const uint64_t loads_before = corpus.loads();
    std::vector<Snapshot> loaded;
    loaded.reserve(members.size());
    for (size_t index : members) {
      absl::StatusOr<Snapshot> s = corpus.Load(index);
      if (!s.ok()) return s.status();
      loaded.push_back(*std::move(s));
    }
    stats.loads = corpus.loads() - loads_before;
    const std::vector<size_t> list = BuildExecutionList(loaded.size(), config.list_length, rng);

    // Round-robin queues; each core's player works through its own queue.
    std::vector<Outcome> outcomes(list.size());
    std::vector<double> core_ms(w, 0);
    auto run_core = [&](size_t slot) {
      Backend& backend = machine.core(summary.cores[slot]);
      for (size_t pos = slot; pos < list.size(); pos += w) {
        outcomes[pos] = Play(backend, loaded[list[pos]], player);
        core_ms[slot] += outcomes[pos].cpu_time_ms;
      }
    };
    const int jobs = std::clamp(options.jobs, 1, static_cast<int>(w));
    if (jobs == 1) {
      for (size_t slot = 0; slot < w; ++slot) run_core(slot);
    } else {
      std::vector<std::thread> workers;
      for (int t = 0; t < jobs; ++t) {
        workers.emplace_back([&, t] {
          for (size_t slot = t; slot < w; slot += jobs) run_core(slot);
        });
      }
      for (std::thread& t : workers) t.join();
    }

    bool mismatch = false;
    for (size_t pos = 0; pos < list.size(); ++pos) {
      CheckOutcome o;
      o.outcome = std::move(outcomes[pos]);
      o.machine_id = spec.machine_id;
      o.seed = seed;
      o.trial = options.trial;
      o.invocation = options.invocation;
      o.batch = next_batch;
      o.position = pos;
      ++stats.per_core[pos % w];
      ++summary.verdicts[o.outcome.verdict];
      summary.cpu_time_ms += o.outcome.cpu_time_ms;
      mismatch |= o.outcome.verdict == Verdict::kMismatch;
      result.outcomes.push_back(std::move(o));
    }
    stats.executions = list.size();
    stats.elapsed_ms = *std::max_element(core_ms.begin(), core_ms.end());
    summary.elapsed_ms += stats.elapsed_ms;
    summary.executions += stats.executions;
    summary.batches.push_back(std::move(stats));
    ++next_batch;
    if (mismatch && options.stop_at_first_mismatch) break;
  }
  summary.corpus_exhausted = next_batch >= batches.size();
  return result;
}

std::vector<DefectRecord> CollectDefects(const std::vector<CheckOutcome>& outcomes) {
  std::vector<DefectRecord> out;
  std::map<std::tuple<std::string, int, std::string, std::string>, size_t> index;
  double clock = 0;
  for (const CheckOutcome& o : outcomes) {
    clock += o.outcome.cpu_time_ms;
    if (o.outcome.verdict != Verdict::kMismatch) continue;
    const std::string sig = SignatureOf(o.outcome);
    auto key = std::make_tuple(o.machine_id, o.outcome.core_id, o.outcome.snapshot_id, sig);
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) {
      DefectRecord d;
      d.machine_id = o.machine_id;
      d.core_id = o.outcome.core_id;
      d.snapshot_id = o.outcome.snapshot_id;
      d.signature = sig;
      d.first_seen_cpu_time_ms = clock;
      out.push_back(std::move(d));
    }
    DefectRecord& d = out[it->second];
    ++d.occurrences;
    d.reproduced_runs.insert(o.trial);
  }
  return out;
}

std::vector<Snapshot> QuarantineUpdate(const std::vector<Snapshot>& corpus,
                                       const std::vector<DefectRecord>& defects) {
  std::set<std::string> hit;
  for (const DefectRecord& d : defects) hit.insert(d.snapshot_id);
  std::vector<Snapshot> out = corpus;
  for (Snapshot& s : out) {
    if (!hit.count(s.id) || s.metadata.HasTag(kQuarantineTag)) continue;
    s.metadata.tags.push_back(std::string(kQuarantineTag));
    Canonicalize(s);
    (void)AssignId(s);
  }
  return out;
}

TtfStats ComputeTtfStats(std::vector<double> samples) {
  TtfStats t;
  t.count = samples.size();
  if (samples.empty()) return t;
  std::sort(samples.begin(), samples.end());
  t.min = samples.front();
  t.max = samples.back();
  const size_t n = samples.size();
  t.median = n % 2 ? samples[n / 2] : (samples[n / 2 - 1] + samples[n / 2]) / 2;
  t.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  return t;
}

absl::StatusOr<FleetReport> FleetSimulate(const std::vector<MachineSpec>& machines,
                                          CorpusSource& corpus, const CheckConfig& config,
                                          const FleetOptions& options) {
  if (machines.empty()) return absl::InvalidArgumentError("fleet has no machines");
  if (absl::Status st = ValidateCheckConfig(config); !st.ok()) return st;
  FleetReport report;
  std::vector<CheckOutcome> mismatches;
  std::vector<double> ttf_samples;
  size_t detected_machines = 0;
  size_t single_pair_machines = 0;
  for (const MachineSpec& spec : machines) {
    MachineReport mr;
    mr.machine_id = spec.machine_id;
    const int windows = config.max_invocations > 0
                            ? config.max_invocations
                            : WindowsToCoverAll(spec.num_cores, config.window_cores);
    for (uint64_t trial = 0; trial < options.trials; ++trial) {
      absl::StatusOr<std::unique_ptr<MachineInstance>> machine =
          MachineInstance::Create(spec, trial);
      if (!machine.ok()) return machine.status();
      double clock = 0;
      std::optional<double> ttf;
      for (int k = 0; k < windows; ++k) {
        RunCheckOptions run;
        run.invocation = static_cast<uint64_t>(k);
        run.trial = trial;
        run.jobs = options.jobs;
        run.stop_at_first_mismatch = options.stop_at_detection;
        absl::StatusOr<CheckResult> r = RunCheck(**machine, corpus, config, run);
        if (!r.ok()) return r.status();
        for (CheckOutcome& o : r->outcomes) {
          clock += o.outcome.cpu_time_ms;
          ++report.executions;
          if (o.outcome.verdict == Verdict::kMismatch) {
            if (!ttf) ttf = clock;
            ++report.mismatches;
            ++mr.core_mismatches[o.outcome.core_id];
            const std::string sig = SignatureOf(o.outcome);
            ++mr.signatures[sig];
            ++report.signature_histogram[sig];
            mismatches.push_back(o);
          }
          if (options.sink) options.sink(o);
        }
        if (ttf && options.stop_at_detection) break;
      }
      ++mr.trials;
      mr.time_to_failure_ms.push_back(ttf);
      if (ttf) {
        ++mr.trials_detected;
        ttf_samples.push_back(*ttf);
      }
    }
    if (mr.detected()) {
      ++detected_machines;
      if (mr.core_mismatches.size() == 2) {
        const int a = mr.core_mismatches.begin()->first;
        const int b = std::next(mr.core_mismatches.begin())->first;
        if (a % 2 == 0 && b == a + 1) ++single_pair_machines;
      }
    }
    report.machines.push_back(std::move(mr));
  }
  report.defects = CollectDefects(mismatches);
  report.time_to_failure = ComputeTtfStats(std::move(ttf_samples));
  if (detected_machines > 0) {
    report.sibling_pair_fraction =
        static_cast<double>(single_pair_machines) / static_cast<double>(detected_machines);
  }
  return report;
}

std::string FleetReportToJson(const FleetReport& report) {
  ordered_json j;
  j["executions"] = report.executions;
  j["mismatches"] = report.mismatches;
  ordered_json machines = ordered_json::array();
  for (const MachineReport& m : report.machines) {
    ordered_json mj;
    mj["machine_id"] = m.machine_id;
    mj["detected"] = m.detected();
    mj["trials"] = m.trials;
    mj["trials_detected"] = m.trials_detected;
    ordered_json ttf = ordered_json::array();
    for (const auto& t : m.time_to_failure_ms) ttf.push_back(t ? ordered_json(*t) : ordered_json(nullptr));
    mj["time_to_failure_ms"] = std::move(ttf);
    ordered_json cores = ordered_json::object();
    for (const auto& [core, n] : m.core_mismatches) cores[std::to_string(core)] = n;
    mj["core_mismatches"] = std::move(cores);
    mj["signatures"] = m.signatures;
    machines.push_back(std::move(mj));
  }
  j["machines"] = std::move(machines);
  ordered_json defects = ordered_json::array();
  for (const DefectRecord& d : report.defects) {
    ordered_json dj;
    dj["machine_id"] = d.machine_id;
    dj["core_id"] = d.core_id;
    dj["snapshot_id"] = d.snapshot_id;
    dj["signature"] = d.signature;
    dj["first_seen_cpu_time_ms"] = d.first_seen_cpu_time_ms;
    dj["occurrences"] = d.occurrences;
    dj["reproduced_runs"] = std::vector<uint64_t>(d.reproduced_runs.begin(),
                                                  d.reproduced_runs.end());
    defects.push_back(std::move(dj));
  }
  j["defects"] = std::move(defects);
  j["signature_histogram"] = report.signature_histogram;
  const TtfStats& t = report.time_to_failure;
  j["time_to_failure"] = {{"count", t.count}, {"min", t.min}, {"median", t.median},
                          {"max", t.max},     {"mean", t.mean}};
  j["sibling_pair_fraction"] =
      report.sibling_pair_fraction ? ordered_json(*report.sibling_pair_fraction) : ordered_json(nullptr);
  return j.dump(2);
}

absl::StatusOr<std::string> TriageLog(std::string_view ndjson) {
  std::map<std::string, uint64_t> histogram;
  std::map<std::string, std::map<std::string, uint64_t>> cores;
  uint64_t outcomes = 0;
  uint64_t mismatches = 0;
  size_t line_no = 0;
  size_t start = 0;
  while (start < ndjson.size()) {
    size_t end = ndjson.find('\n', start);
    if (end == std::string_view::npos) end = ndjson.size();
    const std::string_view line = ndjson.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("verdict")) {
      return absl::InvalidArgumentError(absl::StrCat("log line ", line_no, ": not an outcome"));
    }
    ++outcomes;
    if (j["verdict"] != "MISMATCH") continue;
    ++mismatches;
    const std::string sig = j.value("signature", json()).is_string()
                                ? j["signature"].get<std::string>()
                                : std::string();
    ++histogram[sig];
    const std::string machine = j.value("machine_id", std::string());
    ++cores[machine][std::to_string(j.value("core_id", -1))];
  }
  ordered_json out;
  out["outcomes"] = outcomes;
  out["mismatches"] = mismatches;
  out["signatures"] = histogram;
  out["cores"] = cores;
  return out.dump(2);
}

}  // namespace corefuzz
