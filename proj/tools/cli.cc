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

#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "corefuzz/checker.h"
#include "corefuzz/commands.h"
#include "corefuzz/corpus_io.h"
#include "corefuzz/fault_backend.h"
#include "corefuzz/fuzz_engine.h"
#include "corefuzz/generator.h"
#include "corefuzz/isa.h"
#include "corefuzz/maker.h"
#include "corefuzz/native_backend.h"
#include "corefuzz/player.h"
#include "nlohmann/json.hpp"

namespace corefuzz::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Records the origin of a raw corpus directory for the maker.
constexpr char kManifestFile[] = "manifest.json";
constexpr char kMakingReportFile[] = "making_report.ndjson";
constexpr char kDiscardedDir[] = "discarded";

std::string ErrorKind(const absl::Status& st) {
  switch (st.code()) {
    case absl::StatusCode::kNotFound:
      return "missing file";
    case absl::StatusCode::kInvalidArgument:
      return "invalid input";
    default:
      return "error";
  }
}

int Fail(std::ostream& err, const absl::Status& st) {
  err << "corefuzz: " << ErrorKind(st) << ": " << st.message() << "\n";
  return kExitUsage;
}

absl::Status Prefixed(std::string_view what, const absl::Status& st) {
  return absl::Status(st.code(), absl::StrCat(std::string(what), ": ", std::string(st.message())));
}

absl::Status WriteManifest(const std::string& dir, Origin origin) {
  ordered_json j;
  j["origin"] = std::string(OriginName(origin));
  return WriteFile((fs::path(dir) / kManifestFile).string(), j.dump() + "\n");
}

// Origin recorded by fuzz/gen, if any.
absl::StatusOr<std::optional<Origin>> ReadManifest(const std::string& dir) {
  const std::string path = (fs::path(dir) / kManifestFile).string();
  if (!fs::exists(path)) return std::optional<Origin>();
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  nlohmann::json j = nlohmann::json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("origin") || !j["origin"].is_string()) {
    return absl::InvalidArgumentError(absl::StrCat(path, ": malformed manifest"));
  }
  std::optional<Origin> origin = ParseOrigin(j["origin"].get<std::string>());
  if (!origin) return absl::InvalidArgumentError(absl::StrCat(path, ": unknown origin"));
  return origin;
}

std::string SnapshotPath(const fs::path& dir, const std::string& id) {
  return (dir / (id + std::string(kSnapshotExtension))).string();
}

// Output directories must not already hold corpus files, so a directory
// always reflects exactly one run.
absl::Status EnsureFreshOutput(const std::string& dir) {
  std::error_code ec;
  if (!fs::exists(dir, ec)) return absl::OkStatus();
  if (!fs::is_directory(dir, ec)) {
    return absl::InvalidArgumentError(absl::StrCat(dir, " exists and is not a directory"));
  }
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string ext = entry.path().extension().string();
    if (ext == ".raw" || ext == kSnapshotExtension) {
      return absl::InvalidArgumentError(
          absl::StrCat("output directory ", dir, " already contains corpus files"));
    }
  }
  return absl::OkStatus();
}

struct RawInput {
  std::string name;
  std::vector<uint8_t> bytes;
};

absl::StatusOr<std::vector<RawInput>> ReadRawInputs(const std::string& dir) {
  absl::StatusOr<std::vector<std::string>> files = ListFiles(dir, ".raw");
  if (!files.ok()) return files.status();
  std::vector<RawInput> out;
  for (const std::string& f : *files) {
    absl::StatusOr<std::string> data = ReadFile(f);
    if (!data.ok()) return data.status();
    out.push_back(RawInput{fs::path(f).filename().string(),
                           std::vector<uint8_t>(data->begin(), data->end())});
  }
  return out;
}

absl::StatusOr<std::vector<std::unique_ptr<Backend>>> CreateBackends(
    const std::vector<BackendSpec>& specs) {
  std::vector<std::unique_ptr<Backend>> out;
  for (const BackendSpec& spec : specs) {
    absl::StatusOr<std::unique_ptr<Backend>> b = CreateBackend(spec);
    if (!b.ok()) return b.status();
    out.push_back(*std::move(b));
  }
  return out;
}

std::vector<Backend*> Pointers(const std::vector<std::unique_ptr<Backend>>& backends) {
  std::vector<Backend*> out;
  for (const auto& b : backends) out.push_back(b.get());
  return out;
}

// ---- fuzz -----------------------------------------------------------------

struct FuzzArgs {
  std::string proxy;
  uint64_t seed = 0;
  uint64_t budget = 0;
  std::string out;
  std::string dict;
  std::string seeds;
  size_t max_len = 128;
};

int RunFuzz(const FuzzArgs& a, std::ostream& out, std::ostream& err) {
  FuzzConfig config;
  config.proxy = *ParseProxy(a.proxy);
  config.rng_seed = a.seed;
  config.budget = a.budget;
  config.max_len = a.max_len;
  if (!a.dict.empty()) {
    absl::StatusOr<std::string> text = ReadFile(a.dict);
    if (!text.ok()) return Fail(err, text.status());
    absl::StatusOr<std::vector<std::vector<uint8_t>>> dict = ParseDictionary(*text);
    if (!dict.ok()) return Fail(err, Prefixed(a.dict, dict.status()));
    config.dictionary = *std::move(dict);
  }
  if (!a.seeds.empty()) {
    absl::StatusOr<std::vector<std::vector<uint8_t>>> seeds = ReadRawCorpus(a.seeds);
    if (!seeds.ok()) return Fail(err, seeds.status());
    config.seed_corpus = *std::move(seeds);
  }
  if (absl::Status st = ValidateFuzzConfig(config); !st.ok()) return Fail(err, st);
  if (absl::Status st = EnsureFreshOutput(a.out); !st.ok()) return Fail(err, st);
  FuzzResult r = FuzzLoop(config);
  if (absl::Status st = WriteRawCorpus(a.out, r.corpus, &r.log); !st.ok()) return Fail(err, st);
  const Origin origin =
      config.proxy == Proxy::kDecoder ? Origin::kFuzzProxyDecoder : Origin::kFuzzProxyInterp;
  if (absl::Status st = WriteManifest(a.out, origin); !st.ok()) return Fail(err, st);
  ordered_json j;
  j["proxy"] = std::string(ProxyName(config.proxy));
  j["corpus"] = r.corpus.size();
  j["features"] = r.union_sizes.empty() ? 0 : r.union_sizes.back();
  j["executions"] = r.executions;
  out << j.dump() << "\n";
  err << "fuzz: " << r.corpus.size() << " entries, " << j["features"] << " features, "
      << r.executions << " executions -> " << a.out << "\n";
  return kExitOk;
}

// ---- gen ------------------------------------------------------------------

struct GenArgs {
  uint64_t seed = 0;
  uint64_t count = 0;
  int max_instrs = 0;
  std::string out;
  std::string dict_out;
};

int RunGen(const GenArgs& a, std::ostream& out, std::ostream& err) {
  if (absl::Status st = EnsureFreshOutput(a.out); !st.ok()) return Fail(err, st);
  std::vector<CorpusEntry> entries;
  std::vector<std::vector<uint8_t>> programs;
  std::set<std::string> ids;
  for (uint64_t i = 0; i < a.count; ++i) {
    std::vector<uint8_t> p = GenRandomProgram(MixSeed(a.seed, i), a.max_instrs);
    programs.push_back(p);
    CorpusEntry e = MakeEntry(std::move(p), {}, 0, Origin::kRandomGen);
    if (ids.insert(e.id).second) entries.push_back(std::move(e));
  }
  if (absl::Status st = WriteRawCorpus(a.out, entries); !st.ok()) return Fail(err, st);
  if (absl::Status st = WriteManifest(a.out, Origin::kRandomGen); !st.ok()) return Fail(err, st);
  if (!a.dict_out.empty()) {
    if (absl::Status st = WriteFile(a.dict_out, DictionaryToText(BuildDictionary(programs)));
        !st.ok()) {
      return Fail(err, st);
    }
  }
  ordered_json j;
  j["programs"] = a.count;
  j["unique"] = entries.size();
  out << j.dump() << "\n";
  err << "gen: " << entries.size() << " unique programs -> " << a.out << "\n";
  return kExitOk;
}

// ---- make -----------------------------------------------------------------

struct MakeArgs {
  std::string in;
  std::string out;
  std::string backends = "interp";
  std::string origin;
  int max_extra_pages = 5;
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  int determinism_replays = 8;
  int jobs = 1;
};

int RunMake(const MakeArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<BackendSpec> specs;
  for (absl::string_view part : absl::StrSplit(a.backends, ',', absl::SkipWhitespace())) {
    absl::StatusOr<BackendSpec> spec = ParseBackendSpec(std::string(part));
    if (!spec.ok()) return Fail(err, spec.status());
    specs.push_back(*spec);
  }
  if (specs.empty()) return Fail(err, absl::InvalidArgumentError("--backends is empty"));
  MakerConfig config;
  config.max_extra_pages = a.max_extra_pages;
  config.cpu_time_limit_ms = a.cpu_time_limit_ms;
  config.determinism_replays = a.determinism_replays;
  absl::StatusOr<std::optional<Origin>> manifest = ReadManifest(a.in);
  if (!manifest.ok()) return Fail(err, manifest.status());
  if (!a.origin.empty()) {
    std::optional<Origin> o = ParseOrigin(a.origin);
    if (!o) return Fail(err, absl::InvalidArgumentError(absl::StrCat("unknown origin ", a.origin)));
    config.origin = *o;
  } else if (*manifest) {
    config.origin = **manifest;
  }
  absl::StatusOr<std::vector<RawInput>> inputs = ReadRawInputs(a.in);
  if (!inputs.ok()) return Fail(err, inputs.status());
  if (absl::Status st = EnsureFreshOutput(a.out); !st.ok()) return Fail(err, st);

  // Each worker owns a full set of backends; every input starts from reset
  // backends, so results do not depend on the worker count.
  const int jobs = std::clamp(a.jobs, 1, std::max<int>(1, static_cast<int>(inputs->size())));
  std::vector<std::vector<std::unique_ptr<Backend>>> worker_backends;
  for (int w = 0; w < jobs; ++w) {
    absl::StatusOr<std::vector<std::unique_ptr<Backend>>> b = CreateBackends(specs);
    if (!b.ok()) return Fail(err, b.status());
    worker_backends.push_back(*std::move(b));
  }
  std::vector<MakeRecord> records(inputs->size());
  auto work = [&](int w) {
    const std::vector<Backend*> backends = Pointers(worker_backends[w]);
    for (size_t i = w; i < inputs->size(); i += jobs) {
      for (Backend* b : backends) b->Reset();
      records[i] = MakeOne((*inputs)[i].bytes, backends, config);
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) threads.emplace_back(work, w);
    for (std::thread& t : threads) t.join();
  }

  std::string report;
  std::map<std::string, uint64_t> rejected;
  std::set<std::string> kept;
  uint64_t discarded = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const MakeRecord& r = records[i];
    ordered_json line;
    line["input"] = (*inputs)[i].name;
    if (r.kept) {
      line["status"] = "kept";
      line["snapshot_id"] = r.kept->id;
      kept.insert(r.kept->id);
      if (absl::Status st = WriteSnapshotFile(
              SnapshotPath(a.out, r.kept->id), *r.kept);
          !st.ok()) {
        return Fail(err, st);
      }
    } else if (r.discarded) {
      line["status"] = "discarded";
      line["snapshot_id"] = r.discarded->snapshot.id;
      ++discarded;
      ordered_json states = ordered_json::array();
      for (const EndState& e : r.discarded->snapshot.end_states) states.push_back(e.platforms);
      line["platforms_per_state"] = std::move(states);
      if (absl::Status st = WriteSnapshotFile(
              SnapshotPath(fs::path(a.out) / kDiscardedDir, r.discarded->snapshot.id),
              r.discarded->snapshot);
          !st.ok()) {
        return Fail(err, st);
      }
    } else {
      line["status"] = "rejected";
    }
    if (r.rejection) {
      const std::string reason(RejectionReasonName(r.rejection->reason));
      line["reason"] = reason;
      line["detail"] = r.rejection->detail;
      if (!r.discarded) ++rejected[reason];
    }
    report += line.dump() + "\n";
  }
  fs::create_directories(a.out);
  if (absl::Status st = WriteFile((fs::path(a.out) / kMakingReportFile).string(), report);
      !st.ok()) {
    return Fail(err, st);
  }
  ordered_json j;
  j["inputs"] = inputs->size();
  j["kept"] = kept.size();
  j["discarded"] = discarded;
  j["rejected"] = rejected;
  out << j.dump() << "\n";
  err << "make: " << inputs->size() << " inputs, " << kept.size() << " snapshots, " << discarded
      << " multi-state -> " << a.out << "\n";
  return kExitOk;
}

// ---- distill --------------------------------------------------------------

struct DistillArgs {
  std::string in;
  std::string out;
  std::string proxy = "interp";
};

int RunDistill(const DistillArgs& a, std::ostream& out, std::ostream& err) {
  absl::StatusOr<std::vector<std::string>> snap_files = ListFiles(a.in, kSnapshotExtension);
  if (!snap_files.ok()) return Fail(err, snap_files.status());
  if (absl::Status st = EnsureFreshOutput(a.out); !st.ok()) return Fail(err, st);
  std::vector<CorpusEntry> entries;
  std::vector<CorpusEntry> selected;
  if (!snap_files->empty()) {
    absl::StatusOr<std::vector<Snapshot>> corpus = ReadSnapshotDir(a.in);
    if (!corpus.ok()) return Fail(err, corpus.status());
    std::map<std::string, const Snapshot*> by_id;
    for (const Snapshot& s : *corpus) {
      entries.push_back(EntryFromSnapshot(s));
      by_id[s.id] = &s;
    }
    selected = Distill(entries);
    for (const CorpusEntry& e : selected) {
      if (absl::Status st = WriteSnapshotFile(
              SnapshotPath(a.out, e.id), *by_id[e.id]);
          !st.ok()) {
        return Fail(err, st);
      }
    }
  } else {
    const Proxy proxy = *ParseProxy(a.proxy);
    absl::StatusOr<std::vector<std::vector<uint8_t>>> raw = ReadRawCorpus(a.in);
    if (!raw.ok()) return Fail(err, raw.status());
    for (std::vector<uint8_t>& bytes : *raw) {
      ProxyResult p = RunProxy(proxy, bytes);
      entries.push_back(MakeEntry(std::move(bytes), std::move(p.coverage), p.exec_cost,
                                  Origin::kImported));
    }
    selected = Distill(entries);
    if (absl::Status st = WriteRawCorpus(a.out, selected); !st.ok()) return Fail(err, st);
  }
  fs::create_directories(a.out);
  ordered_json j;
  j["inputs"] = entries.size();
  j["selected"] = selected.size();
  j["features"] = UnionCoverage(selected).size();
  j["quarantined"] = std::count_if(selected.begin(), selected.end(),
                                   [](const CorpusEntry& e) { return e.quarantined; });
  out << j.dump() << "\n";
  err << "distill: " << entries.size() << " -> " << selected.size() << " entries, "
      << j["features"] << " features\n";
  return kExitOk;
}

// ---- check ----------------------------------------------------------------

struct CheckArgs {
  std::string corpus;
  std::string fleet;
  std::string config;
  std::string log;
  uint64_t trials = 1;
  std::string report;
  std::string quarantine_out;
  bool stop_at_detection = false;
  int jobs = 1;
};

int RunCheckCommand(const CheckArgs& a, std::ostream& out, std::ostream& err) {
  absl::StatusOr<std::string> config_text = ReadFile(a.config);
  if (!config_text.ok()) return Fail(err, config_text.status());
  absl::StatusOr<CheckConfig> config = ParseCheckConfig(*config_text);
  if (!config.ok()) return Fail(err, Prefixed(absl::StrCat("config ", a.config), config.status()));
  absl::StatusOr<std::string> fleet_text = ReadFile(a.fleet);
  if (!fleet_text.ok()) return Fail(err, fleet_text.status());
  absl::StatusOr<std::vector<MachineSpec>> fleet = ParseFleet(*fleet_text);
  if (!fleet.ok()) return Fail(err, Prefixed(absl::StrCat("fleet ", a.fleet), fleet.status()));
  absl::StatusOr<std::unique_ptr<DirectoryCorpus>> corpus = DirectoryCorpus::Open(a.corpus);
  if (!corpus.ok()) return Fail(err, corpus.status());
  if ((*corpus)->size() == 0) {
    return Fail(err, absl::InvalidArgumentError(absl::StrCat(a.corpus, ": no snapshots")));
  }
  if (!a.quarantine_out.empty()) {
    if (absl::Status st = EnsureFreshOutput(a.quarantine_out); !st.ok()) return Fail(err, st);
  }
  if (!fs::path(a.log).parent_path().empty()) fs::create_directories(fs::path(a.log).parent_path());
  std::ofstream log(a.log, std::ios::binary | std::ios::trunc);
  if (!log) return Fail(err, absl::NotFoundError(absl::StrCat("cannot open log ", a.log)));

  FleetOptions options;
  options.trials = a.trials;
  options.jobs = a.jobs;
  options.stop_at_detection = a.stop_at_detection;
  options.sink = [&log](const CheckOutcome& o) { log << CheckOutcomeToJson(o) << "\n"; };
  absl::StatusOr<FleetReport> report = FleetSimulate(*fleet, **corpus, *config, options);
  if (!report.ok()) return Fail(err, report.status());
  log.close();
  const std::string json = FleetReportToJson(*report);
  if (!a.report.empty()) {
    if (absl::Status st = WriteFile(a.report, json + "\n"); !st.ok()) return Fail(err, st);
  }
  if (!a.quarantine_out.empty()) {
    absl::StatusOr<std::vector<Snapshot>> snapshots = ReadSnapshotDir(a.corpus);
    if (!snapshots.ok()) return Fail(err, snapshots.status());
    if (absl::Status st =
            WriteSnapshotDir(a.quarantine_out, QuarantineUpdate(*snapshots, report->defects));
        !st.ok()) {
      return Fail(err, st);
    }
  }
  out << json << "\n";
  size_t detected = 0;
  for (const MachineReport& m : report->machines) detected += m.detected() ? 1 : 0;
  err << "check: " << report->executions << " executions on " << report->machines.size()
      << " machines, " << detected << " detected, " << report->defects.size() << " defects\n";
  return report->defects.empty() ? kExitOk : kExitDetections;
}

// ---- triage / play / isa ----------------------------------------------------

int RunTriage(const std::string& log_path, std::ostream& out, std::ostream& err) {
  absl::StatusOr<std::string> text = ReadFile(log_path);
  if (!text.ok()) return Fail(err, text.status());
  absl::StatusOr<std::string> summary = TriageLog(*text);
  if (!summary.ok()) return Fail(err, Prefixed(log_path, summary.status()));
  out << *summary << "\n";
  return kExitOk;
}

struct PlayArgs {
  std::string snapshot;
  std::string backend = "interp";
  bool checksum_all = false;
  bool dump_commands = false;
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  std::string flags_mask;
};

int RunPlay(const PlayArgs& a, std::ostream& out, std::ostream& err) {
  absl::StatusOr<Snapshot> s = ReadSnapshotFile(a.snapshot);
  if (!s.ok()) return Fail(err, s.status());
  if (a.dump_commands) {
    const std::vector<Command> plan =
        PlanCommands(*s, PlanOptions{a.cpu_time_limit_ms, a.checksum_all, false});
    out << CommandsToJson(plan) << "\n";
    for (const Command& c : plan) err << CommandToString(c) << "\n";
    return kExitOk;
  }
  absl::StatusOr<BackendSpec> spec = ParseBackendSpec(a.backend);
  if (!spec.ok()) return Fail(err, spec.status());
  absl::StatusOr<std::unique_ptr<Backend>> backend = CreateBackend(*spec);
  if (!backend.ok()) return Fail(err, backend.status());
  PlayerConfig config;
  config.cpu_time_limit_ms = a.cpu_time_limit_ms;
  config.checksum_all = a.checksum_all;
  if (!a.flags_mask.empty()) {
    absl::StatusOr<uint64_t> mask = ParseFlags(a.flags_mask);
    if (!mask.ok()) return Fail(err, Prefixed("--flags-mask", mask.status()));
    config.flags_mask = *mask;
  }
  const Outcome o = Play(**backend, *s, config);
  out << OutcomeToJson(o) << "\n";
  err << "play: " << VerdictName(o.verdict)
      << (o.mismatch ? absl::StrCat(" ", TriageSignature(*o.mismatch)) : std::string()) << "\n";
  return kExitOk;
}

}  // namespace

absl::StatusOr<BackendSpec> ParseBackendSpec(std::string_view text) {
  const std::vector<std::string> parts = absl::StrSplit(std::string(text), ':');
  BackendSpec spec;
  if (parts[0] == "interp") {
    spec.kind = BackendKind::kInterp;
  } else if (parts[0] == "native") {
    spec.kind = BackendKind::kNative;
  } else {
    return absl::InvalidArgumentError(absl::StrCat("unknown backend spec \"", std::string(text),
                                                   "\"; expected interp[:...] or native[:...]"));
  }
  for (size_t i = 1; i < parts.size(); ++i) {
    const std::vector<std::string> kv = absl::StrSplit(parts[i], absl::MaxSplits('=', 1));
    const auto bad = [&] {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown backend spec option \"", parts[i], "\" in \"", std::string(text),
                       "\""));
    };
    if (kv.size() != 2 || kv[1].empty()) return bad();
    if (kv[0] == "core") {
      if (!absl::SimpleAtoi(kv[1], &spec.core) || spec.core < 0) return bad();
    } else if (kv[0] == "seed" && spec.kind == BackendKind::kInterp) {
      if (!absl::SimpleAtoi(kv[1], &spec.seed)) return bad();
    } else if (kv[0] == "platform" && spec.kind == BackendKind::kInterp) {
      spec.platform = kv[1];
    } else if (kv[0] == "faults" && spec.kind == BackendKind::kInterp) {
      spec.faults_file = kv[1];
    } else {
      return bad();
    }
  }
  return spec;
}

absl::StatusOr<std::unique_ptr<Backend>> CreateBackend(const BackendSpec& spec) {
  if (spec.kind == BackendKind::kNative) {
    absl::StatusOr<std::unique_ptr<NativeBackend>> b = MakeNativeBackend(spec.core);
    if (!b.ok()) return b.status();
    return std::unique_ptr<Backend>(*std::move(b));
  }
  const std::string platform = spec.platform.value_or(std::string(kInterpPlatform));
  if (spec.faults_file) {
    absl::StatusOr<std::vector<FaultProfile>> profiles = LoadFaultProfiles(*spec.faults_file);
    if (!profiles.ok()) return profiles.status();
    absl::StatusOr<std::unique_ptr<FaultBackend>> b =
        MakeFaultBackend(*profiles, spec.seed, spec.core, platform);
    if (!b.ok()) return b.status();
    return std::unique_ptr<Backend>(*std::move(b));
  }
  return std::unique_ptr<Backend>(std::make_unique<InterpBackend>(spec.core, platform));
}

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"corefuzz: CPU core defect screening by snapshot fuzzing", "corefuzz"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "corefuzz 0.1.0");

  FuzzArgs fuzz;
  CLI::App* fuzz_cmd = app.add_subcommand("fuzz", "Coverage-guided fuzzing of a CPU proxy");
  fuzz_cmd->add_option("--proxy", fuzz.proxy, "Coverage proxy")
      ->required()
      ->check(CLI::IsMember({"decoder", "interp"}));
  fuzz_cmd->add_option("--seed", fuzz.seed, "RNG seed")->required();
  fuzz_cmd->add_option("--budget", fuzz.budget, "Mutation iterations")->required();
  fuzz_cmd->add_option("--out", fuzz.out, "Raw corpus directory")->required();
  fuzz_cmd->add_option("--dict", fuzz.dict, "Dictionary file (hex per line)");
  fuzz_cmd->add_option("--seeds", fuzz.seeds, "Seed corpus directory of .raw files");
  fuzz_cmd->add_option("--max-len", fuzz.max_len, "Maximum input length")
      ->check(CLI::Range(1, 4095));

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Random instruction-sequence generator");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->required();
  gen_cmd->add_option("--count", gen.count, "Programs to generate")->required();
  gen_cmd->add_option("--max-instrs", gen.max_instrs, "Instructions per program")
      ->required()
      ->check(CLI::Range(1, 1000));
  gen_cmd->add_option("--out", gen.out, "Raw corpus directory")->required();
  gen_cmd->add_option("--dict-out", gen.dict_out, "Also write a dictionary built from the output");

  MakeArgs make;
  CLI::App* make_cmd = app.add_subcommand("make", "Turn raw inputs into snapshots");
  make_cmd->add_option("--in", make.in, "Raw corpus directory")->required();
  make_cmd->add_option("--out", make.out, "Snapshot directory")->required();
  make_cmd->add_option("--backends", make.backends, "Comma-separated backend specs")
      ->required();
  make_cmd->add_option("--origin", make.origin, "Origin tag (default: from manifest)");
  make_cmd->add_option("--max-extra-pages", make.max_extra_pages)->check(CLI::Range(0, 64));
  make_cmd->add_option("--cpu-time-limit-ms", make.cpu_time_limit_ms)->check(CLI::PositiveNumber);
  make_cmd->add_option("--determinism-replays", make.determinism_replays)
      ->check(CLI::Range(1, 1000));
  make_cmd->add_option("--jobs", make.jobs, "Worker threads")->check(CLI::Range(1, 256));

  DistillArgs distill;
  CLI::App* distill_cmd = app.add_subcommand("distill", "Minimize a corpus preserving coverage");
  distill_cmd->add_option("--in", distill.in, "Snapshot or raw corpus directory")->required();
  distill_cmd->add_option("--out", distill.out, "Output directory")->required();
  distill_cmd->add_option("--proxy", distill.proxy, "Proxy for raw corpora")
      ->check(CLI::IsMember({"decoder", "interp"}));

  CheckArgs check;
  CLI::App* check_cmd = app.add_subcommand("check", "Run a corpus across a fleet");
  check_cmd->add_option("--corpus", check.corpus, "Snapshot directory")->required();
  check_cmd->add_option("--fleet", check.fleet, "Fleet JSON file")->required();
  check_cmd->add_option("--config", check.config, "Check config JSON file")->required();
  check_cmd->add_option("--log", check.log, "Outcome log (NDJSON) to write")->required();
  check_cmd->add_option("--trials", check.trials, "Independent trials per machine")
      ->required()
      ->check(CLI::Range(uint64_t{1}, uint64_t{1000000}));
  check_cmd->add_option("--report", check.report, "Also write the fleet report here");
  check_cmd->add_option("--quarantine-out", check.quarantine_out,
                        "Write the corpus with implicated snapshots quarantined");
  check_cmd->add_flag("--stop-at-detection", check.stop_at_detection,
                      "End a trial after its first detecting window");
  check_cmd->add_option("--jobs", check.jobs, "Worker threads")->check(CLI::Range(1, 256));

  std::string triage_log;
  CLI::App* triage_cmd = app.add_subcommand("triage", "Summarize an outcome log");
  triage_cmd->add_option("--log", triage_log, "Outcome log")->required();

  PlayArgs play;
  CLI::App* play_cmd = app.add_subcommand("play", "Play one snapshot");
  play_cmd->add_option("--snapshot", play.snapshot, "Snapshot file")->required();
  play_cmd->add_option("--backend", play.backend, "Backend spec")->required();
  play_cmd->add_flag("--checksum-all", play.checksum_all, "Checksum every mapping");
  play_cmd->add_flag("--dump-commands", play.dump_commands, "Print the command plan only");
  play_cmd->add_option("--cpu-time-limit-ms", play.cpu_time_limit_ms)->check(CLI::PositiveNumber);
  play_cmd->add_option("--flags-mask", play.flags_mask, "e.g. CF|ZF|SF|OF");

  CLI::App* isa_cmd = app.add_subcommand("isa", "Instruction-set model");
  isa_cmd->require_subcommand(1);
  CLI::App* isa_dump = isa_cmd->add_subcommand("dump", "Print the instruction table");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (fuzz_cmd->parsed()) return RunFuzz(fuzz, out, err);
  if (gen_cmd->parsed()) return RunGen(gen, out, err);
  if (make_cmd->parsed()) return RunMake(make, out, err);
  if (distill_cmd->parsed()) return RunDistill(distill, out, err);
  if (check_cmd->parsed()) return RunCheckCommand(check, out, err);
  if (triage_cmd->parsed()) return RunTriage(triage_log, out, err);
  if (play_cmd->parsed()) return RunPlay(play, out, err);
  if (isa_dump->parsed()) {
    out << DumpIsaModel();
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace corefuzz::cli
