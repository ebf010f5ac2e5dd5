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
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "absl/strings/str_cat.h"
#include "corefuzz/corpus_io.h"
#include "corefuzz/fuzz_engine.h"
#include "corefuzz/generator.h"
#include "corefuzz/maker.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "nlohmann/json.hpp"
#include "test_util.h"

namespace corefuzz {
namespace {

using ::corefuzz::testing::Assemble;
using ::corefuzz::testing::R;
using ::testing::ElementsAre;
using ::testing::IsEmpty;

// Upper 1% point of chi-square with 49 degrees of freedom.
constexpr double kChiSquare49At001 = 74.919;

Snapshot Made(const std::vector<uint8_t>& code) {
  InterpBackend b;
  MakeRecord r = MakeOne(code, {&b}, MakerConfig{});
  EXPECT_TRUE(r.kept.has_value()) << (r.rejection ? r.rejection->detail : "");
  return *r.kept;
}

std::vector<uint8_t> Ud2() { return {0x0f, 0x0b}; }

// mov rax, 5; mov rbx, 7; add rax, rbx
std::vector<uint8_t> AddProgram(uint64_t a) {
  return Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{a}}),
                   BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRbx), ImmOperand{7}}),
                   BuildInstr(Opcode::kAddRmReg, 64, {R(Gpr::kRax), R(Gpr::kRbx)})});
}

// `n` distinct made snapshots: random programs, one UD2 and a few ADDs.
const std::vector<Snapshot>& MadeCorpus(size_t n) {
  static std::map<size_t, std::vector<Snapshot>> cache;
  auto& out = cache[n];
  if (!out.empty()) return out;
  std::set<std::string> ids;
  auto add = [&](const Snapshot& s) {
    if (ids.insert(s.id).second) out.push_back(s);
  };
  add(Made(Ud2()));
  for (uint64_t a = 0; a < 4; ++a) add(Made(AddProgram(a)));
  InterpBackend b;
  for (uint64_t seed = 0; out.size() < n; ++seed) {
    MakeRecord r = MakeOne(GenRandomProgram(seed, 8), {&b}, MakerConfig{});
    if (r.kept) add(*r.kept);
  }
  return out;
}

MachineSpec Clean(std::string id, int cores = 8) {
  MachineSpec m;
  m.machine_id = std::move(id);
  m.num_cores = cores;
  return m;
}

MachineSpec WithProfile(std::string id, FaultEffect effect, std::set<int> cores, double p = 1.0) {
  MachineSpec m = Clean(std::move(id));
  m.profiles.push_back(FaultProfile{"defect", std::move(cores), p, std::move(effect)});
  return m;
}

CheckConfig EightWide() {
  CheckConfig c;
  c.window_cores = 8;
  return c;
}

TEST(CheckConfig, EmptyObjectGivesDefaults) {
  absl::StatusOr<CheckConfig> c = ParseCheckConfig("{}");
  ASSERT_TRUE(c.ok()) << c.status();
  EXPECT_EQ(*c, CheckConfig{});
  EXPECT_EQ(c->batch_size, 50);
  EXPECT_EQ(c->list_length, 1000);
  EXPECT_EQ(c->window_cores, 4);
  EXPECT_EQ(c->window_ms, 120000);
}

TEST(CheckConfig, RoundTrips) {
  CheckConfig c;
  c.batch_size = 10;
  c.list_length = 200;
  c.window_cores = 2;
  c.window_ms = 5.5;
  c.rng_seed = 99;
  c.flags_mask = kFlagCF | kFlagZF;
  c.max_invocations = 3;
  absl::StatusOr<CheckConfig> back = ParseCheckConfig(CheckConfigToJson(c));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(*back, c);
}

TEST(CheckConfig, RejectsBadValues) {
  EXPECT_FALSE(ParseCheckConfig(R"({"batch_size": 0})").ok());
  EXPECT_FALSE(ParseCheckConfig(R"({"batch_size": 50, "list_length": 49})").ok());
  EXPECT_FALSE(ParseCheckConfig(R"({"window_cores": 0})").ok());
  EXPECT_FALSE(ParseCheckConfig(R"({"window_ms": 0})").ok());
  EXPECT_FALSE(ParseCheckConfig(R"({"batch_sizes": 50})").ok());
  EXPECT_FALSE(ParseCheckConfig(R"({"flags_mask": "XF"})").ok());
  EXPECT_FALSE(ParseCheckConfig("[]").ok());
  EXPECT_FALSE(ParseCheckConfig("{").ok());
}

TEST(Fleet, RoundTrips) {
  std::vector<MachineSpec> fleet = {
      Clean("m0"), WithProfile("m1", IllegalOvershoot{}, {2, 3}, 0.5), Clean("m2", 4)};
  fleet[1].fault_seed = 17;
  absl::StatusOr<std::vector<MachineSpec>> back = ParseFleet(FleetToJson(fleet));
  ASSERT_TRUE(back.ok()) << back.status();
  ASSERT_EQ(back->size(), 3u);
  EXPECT_EQ((*back)[1].machine_id, "m1");
  EXPECT_EQ((*back)[1].fault_seed, 17u);
  ASSERT_EQ((*back)[1].profiles.size(), 1u);
  EXPECT_EQ((*back)[1].profiles[0].active_cores, (std::set<int>{2, 3}));
  EXPECT_EQ((*back)[1].profiles[0].activation_probability, 0.5);
  EXPECT_EQ((*back)[2].num_cores, 4);
  EXPECT_EQ(FleetToJson(*back), FleetToJson(fleet));
}

TEST(Fleet, RejectsBadMachines) {
  EXPECT_FALSE(ParseFleet("[]").ok());
  EXPECT_FALSE(ParseFleet(R"([{"machine_id": "a"}, {"machine_id": "a"}])").ok());
  EXPECT_FALSE(ParseFleet(R"([{"machine_id": "a", "cores": 8}])").ok());
  EXPECT_FALSE(ParseFleet(R"([{"machine_id": "a", "backend": "fpga"}])").ok());
  EXPECT_FALSE(ParseFleet(R"([{"machine_id": "a", "num_cores": 0}])").ok());
  EXPECT_FALSE(ParseFleet(
                   R"([{"machine_id": "a", "num_cores": 4,
                        "profiles": [{"name": "x", "effect": "illegal_overshoot",
                                      "active_cores": [4]}]}])")
                   .ok());
  EXPECT_TRUE(ParseFleet(R"({"machines": [{"machine_id": "a", "backend": "native"}]})").ok());
}

TEST(SlidingWindow, AdvancesByWindowWidth) {
  EXPECT_THAT(SlidingWindowSchedule(8, 4, 0), ElementsAre(0, 1, 2, 3));
  EXPECT_THAT(SlidingWindowSchedule(8, 4, 1), ElementsAre(4, 5, 6, 7));
  EXPECT_THAT(SlidingWindowSchedule(8, 4, 2), ElementsAre(0, 1, 2, 3));
  EXPECT_THAT(SlidingWindowSchedule(6, 4, 1), ElementsAre(4, 5, 0, 1));
  EXPECT_THAT(SlidingWindowSchedule(4, 8, 5), ElementsAre(0, 1, 2, 3));
  EXPECT_EQ(WindowsToCoverAll(8, 4), 2);
  EXPECT_EQ(WindowsToCoverAll(8, 8), 1);
}

TEST(SlidingWindow, CoversEveryCore) {
  for (int n = 1; n <= 12; ++n) {
    for (int w = 1; w <= n; ++w) {
      std::set<int> seen;
      for (int k = 0; k < WindowsToCoverAll(n, w); ++k) {
        std::vector<int> cores = SlidingWindowSchedule(n, w, k);
        EXPECT_EQ(cores.size(), static_cast<size_t>(w));
        EXPECT_EQ(std::set<int>(cores.begin(), cores.end()).size(), cores.size());
        seen.insert(cores.begin(), cores.end());
        // Consecutive windows cover every core within ceil(n / w) steps.
        if (k + 1 == (n + w - 1) / w) EXPECT_EQ(seen.size(), static_cast<size_t>(n)) << n << "/" << w;
      }
      EXPECT_EQ(seen.size(), static_cast<size_t>(n)) << n << "/" << w;
    }
  }
}

TEST(DrawBatches, PartitionsTheCorpus) {
  Rng rng(3);
  std::vector<std::vector<size_t>> b = DrawBatches(120, 50, rng);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 50u);
  EXPECT_EQ(b[2].size(), 20u);
  std::vector<size_t> all;
  for (const auto& batch : b) all.insert(all.end(), batch.begin(), batch.end());
  std::sort(all.begin(), all.end());
  std::vector<size_t> expected(120);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
}

TEST(ExecutionList, SingleSnapshotRepeats) {
  Rng rng(1);
  std::vector<std::pair<std::string, size_t>> list =
      BuildExecutionList(std::vector<std::string>{"only"}, CheckConfig{}, rng);
  ASSERT_EQ(list.size(), 1000u);
  for (size_t i = 0; i < list.size(); ++i) {
    EXPECT_EQ(list[i].first, "only");
    EXPECT_EQ(list[i].second, i);
  }
}

TEST(ExecutionList, DeterministicInSeed) {
  std::vector<std::string> ids;
  for (int i = 0; i < 200; ++i) ids.push_back(absl::StrCat("s", i));
  Rng a(42), b(42), c(43);
  auto la = BuildExecutionList(ids, CheckConfig{}, a);
  EXPECT_EQ(la, BuildExecutionList(ids, CheckConfig{}, b));
  EXPECT_NE(la, BuildExecutionList(ids, CheckConfig{}, c));
  std::set<std::string> distinct;
  for (const auto& [id, pos] : la) distinct.insert(id);
  EXPECT_EQ(distinct.size(), 50u);
}

TEST(ExecutionList, UniformOverBatch) {
  // Per-seed chi-square against uniform plus the pooled statistic.
  int rejections = 0;
  std::vector<double> pooled(50, 0);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(MixSeed(seed, 0x11));
    std::vector<size_t> list = BuildExecutionList(50, 1000, rng);
    std::vector<double> counts(50, 0);
    for (size_t i : list) {
      ASSERT_LT(i, 50u);
      counts[i] += 1;
      pooled[i] += 1;
    }
    double chi = 0;
    for (double c : counts) chi += (c - 20) * (c - 20) / 20;
    rejections += chi > kChiSquare49At001;
  }
  double chi = 0;
  for (double c : pooled) chi += (c - 2000) * (c - 2000) / 2000;
  EXPECT_LT(chi, kChiSquare49At001);
  // Expected about 1 of 100; P(more than 5) is below 0.001.
  EXPECT_LE(rejections, 5);
}

TEST(RunCheck, CleanMachineHasNoMismatch) {
  MemoryCorpus corpus(MadeCorpus(200));
  auto m = MachineInstance::Create(Clean("clean"));
  ASSERT_TRUE(m.ok());
  absl::StatusOr<CheckResult> r = RunCheck(**m, corpus, EightWide());
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_THAT(r->summary.cores, ElementsAre(0, 1, 2, 3, 4, 5, 6, 7));
  EXPECT_EQ(r->summary.verdicts[Verdict::kMismatch], 0u);
  EXPECT_EQ(r->summary.verdicts[Verdict::kMatch], 4000u);
  EXPECT_TRUE(r->summary.corpus_exhausted);
  ASSERT_EQ(r->summary.batches.size(), 4u);
  for (const BatchStats& b : r->summary.batches) {
    EXPECT_EQ(b.loads, 50u);
    EXPECT_EQ(b.executions, 1000u);
    EXPECT_THAT(b.per_core, ::testing::Each(125u));
  }
  EXPECT_EQ(corpus.loads(), 200u);
}

TEST(RunCheck, OutcomesCarryRunMetadata) {
  MemoryCorpus corpus(MadeCorpus(60));
  auto m = MachineInstance::Create(Clean("p"));
  ASSERT_TRUE(m.ok());
  CheckConfig c = EightWide();
  c.rng_seed = 5;
  absl::StatusOr<CheckResult> r = RunCheck(**m, corpus, c, RunCheckOptions{3, 2, 1, false});
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r->outcomes.size(), 2000u);
  EXPECT_EQ(r->summary.batches[1].loads, 10u);
  const CheckOutcome& o = r->outcomes[1001];
  EXPECT_EQ(o.invocation, 3u);
  EXPECT_EQ(o.trial, 2u);
  EXPECT_EQ(o.batch, 1u);
  EXPECT_EQ(o.position, 1u);
  EXPECT_EQ(o.outcome.core_id, 1);
  nlohmann::json j = nlohmann::json::parse(CheckOutcomeToJson(o));
  EXPECT_EQ(j["machine_id"], "p");
  EXPECT_EQ(j["verdict"], "MATCH");
  EXPECT_TRUE(j["signature"].is_null());
  EXPECT_EQ(j["seed"], o.seed);
}

TEST(RunCheck, DeterministicAcrossJobs) {
  MemoryCorpus corpus(MadeCorpus(60));
  MachineSpec spec = WithProfile("j", IllegalOvershoot{}, {2, 3});
  auto a = MachineInstance::Create(spec);
  auto b = MachineInstance::Create(spec);
  absl::StatusOr<CheckResult> r1 = RunCheck(**a, corpus, EightWide(), {0, 0, 1, false});
  absl::StatusOr<CheckResult> r4 = RunCheck(**b, corpus, EightWide(), {0, 0, 4, false});
  ASSERT_TRUE(r1.ok() && r4.ok());
  ASSERT_EQ(r1->outcomes.size(), r4->outcomes.size());
  for (size_t i = 0; i < r1->outcomes.size(); ++i) {
    EXPECT_EQ(CheckOutcomeToJson(r1->outcomes[i]), CheckOutcomeToJson(r4->outcomes[i]));
  }
}

TEST(RunCheck, OvershootLocalizedToFaultyCores) {
  MemoryCorpus corpus(MadeCorpus(100));
  auto m = MachineInstance::Create(WithProfile("bad", IllegalOvershoot{}, {2, 3}));
  ASSERT_TRUE(m.ok());
  absl::StatusOr<CheckResult> r = RunCheck(**m, corpus, EightWide());
  ASSERT_TRUE(r.ok());
  std::set<int> cores;
  for (const CheckOutcome& o : r->outcomes) {
    if (o.outcome.verdict != Verdict::kMismatch) continue;
    cores.insert(o.outcome.core_id);
    if (o.outcome.snapshot_id == MadeCorpus(100)[0].id) {
      EXPECT_EQ(TriageSignature(*o.outcome.mismatch), "SIGNAL_MISSING:ILL");
    }
  }
  EXPECT_THAT(cores, ElementsAre(2, 3));
}

TEST(RunCheck, WindowBudgetStopsBatches) {
  MemoryCorpus corpus(MadeCorpus(200));
  auto m = MachineInstance::Create(Clean("t"));
  CheckConfig c = EightWide();
  c.window_ms = 0.001;
  absl::StatusOr<CheckResult> r = RunCheck(**m, corpus, c);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->summary.batches.size(), 1u);
  EXPECT_FALSE(r->summary.corpus_exhausted);
  EXPECT_EQ(corpus.loads(), 50u);
}

TEST(RunCheck, StopsAtFirstMismatchingBatch) {
  MemoryCorpus corpus(MadeCorpus(200));
  auto m = MachineInstance::Create(WithProfile("s", IllegalOvershoot{}, {0, 1, 2, 3, 4, 5, 6, 7}));
  absl::StatusOr<CheckResult> r = RunCheck(**m, corpus, EightWide(), {0, 0, 1, true});
  ASSERT_TRUE(r.ok());
  ASSERT_FALSE(r->summary.batches.empty());
  EXPECT_LT(r->summary.batches.size(), 4u);
  EXPECT_GT(r->summary.verdicts[Verdict::kMismatch], 0u);
}

TEST(RunCheck, ReadsDirectoryCorpus) {
  const std::string dir = ::testing::TempDir() + "/checker_dir_corpus";
  std::filesystem::remove_all(dir);
  ASSERT_TRUE(WriteSnapshotDir(dir, MadeCorpus(60)).ok());
  absl::StatusOr<std::unique_ptr<DirectoryCorpus>> corpus = DirectoryCorpus::Open(dir);
  ASSERT_TRUE(corpus.ok()) << corpus.status();
  EXPECT_EQ((*corpus)->size(), 60u);
  auto m = MachineInstance::Create(Clean("d"));
  absl::StatusOr<CheckResult> r = RunCheck(**m, **corpus, EightWide());
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->summary.verdicts[Verdict::kMatch], 2000u);
  EXPECT_EQ((*corpus)->loads(), 60u);
}

CheckOutcome Mismatch(std::string machine, int core, std::string snapshot, uint64_t trial,
                      double ms) {
  CheckOutcome o;
  o.machine_id = std::move(machine);
  o.trial = trial;
  o.outcome.verdict = Verdict::kMismatch;
  o.outcome.core_id = core;
  o.outcome.snapshot_id = std::move(snapshot);
  o.outcome.cpu_time_ms = ms;
  MismatchDetail d;
  d.category = MismatchCategory::kSignalMissing;
  d.expected_signal.signal = Signal::kIll;
  o.outcome.mismatch = d;
  return o;
}

TEST(CollectDefects, GroupsAndCounts) {
  CheckOutcome match;
  match.machine_id = "m";
  match.outcome.verdict = Verdict::kMatch;
  match.outcome.cpu_time_ms = 1;
  std::vector<CheckOutcome> log = {match, Mismatch("m", 2, "a", 0, 1), match,
                                   Mismatch("m", 2, "a", 1, 1), Mismatch("m", 3, "a", 1, 1)};
  std::vector<DefectRecord> d = CollectDefects(log);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].core_id, 2);
  EXPECT_EQ(d[0].occurrences, 2u);
  EXPECT_THAT(d[0].reproduced_runs, ElementsAre(0, 1));
  EXPECT_EQ(d[0].first_seen_cpu_time_ms, 2);
  EXPECT_EQ(d[1].first_seen_cpu_time_ms, 5);
  EXPECT_EQ(d[1].signature, "SIGNAL_MISSING:ILL");
}

TEST(Quarantine, TagsImplicatedSnapshotsOnce) {
  std::vector<Snapshot> corpus = MadeCorpus(10);
  std::vector<DefectRecord> defects(1);
  defects[0].snapshot_id = corpus[0].id;
  std::vector<Snapshot> q = QuarantineUpdate(corpus, defects);
  ASSERT_EQ(q.size(), corpus.size());
  EXPECT_TRUE(q[0].metadata.HasTag(kQuarantineTag));
  EXPECT_NE(q[0].id, corpus[0].id);
  EXPECT_TRUE(Validate(q[0]).empty());
  for (size_t i = 1; i < q.size(); ++i) EXPECT_EQ(q[i], corpus[i]);
  // Idempotent, also when the defect names the new id.
  defects[0].snapshot_id = q[0].id;
  EXPECT_EQ(QuarantineUpdate(q, defects), q);
  EXPECT_EQ(QuarantineUpdate(corpus, {}), corpus);
}

TEST(Quarantine, SurvivesDistillation) {
  std::vector<Snapshot> corpus = MadeCorpus(40);
  // A duplicate of the ADD snapshot differing only in origin adds nothing.
  Snapshot dup = corpus[1];
  dup.metadata.origin = Origin::kRandomGen;
  ASSERT_TRUE(AssignId(dup).ok());
  corpus.push_back(dup);
  std::vector<DefectRecord> defects(1);
  defects[0].snapshot_id = dup.id;
  std::vector<Snapshot> q = QuarantineUpdate(corpus, defects);
  std::vector<CorpusEntry> entries;
  for (const Snapshot& s : q) entries.push_back(EntryFromSnapshot(s));
  std::vector<CorpusEntry> distilled = Distill(entries);
  EXPECT_EQ(UnionCoverage(distilled), UnionCoverage(entries));
  EXPECT_LT(distilled.size(), entries.size());
  EXPECT_TRUE(std::any_of(distilled.begin(), distilled.end(),
                          [&](const CorpusEntry& e) { return e.id == q.back().id; }));
  EXPECT_TRUE(distilled.front().quarantined);
}

TEST(EntryFromSnapshot, MatchesRawProxy) {
  const std::vector<uint8_t> code = AddProgram(3);
  CorpusEntry e = EntryFromSnapshot(Made(code));
  ProxyResult p = RunProxy(Proxy::kInterpreter, code);
  std::vector<uint8_t> with_int3 = code;
  with_int3.push_back(0xcc);
  EXPECT_EQ(e.bytes, with_int3);
  EXPECT_EQ(e.coverage, p.coverage);
  EXPECT_EQ(e.exec_cost, p.exec_cost);
}

TEST(Fleet, CleanFleetReportsNothing) {
  std::vector<MachineSpec> fleet;
  for (int i = 0; i < 10; ++i) fleet.push_back(Clean(absl::StrCat("m", i)));
  MemoryCorpus corpus(MadeCorpus(50));
  absl::StatusOr<FleetReport> r = FleetSimulate(fleet, corpus, CheckConfig{});
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_EQ(r->mismatches, 0u);
  EXPECT_THAT(r->defects, IsEmpty());
  EXPECT_FALSE(r->sibling_pair_fraction.has_value());
  // Two windows of four cores per machine, 1000 executions each.
  EXPECT_EQ(r->executions, 10u * 2 * 1000);
  for (const MachineReport& m : r->machines) EXPECT_FALSE(m.detected());
}

TEST(Fleet, LocalizesSiblingPair) {
  std::vector<MachineSpec> fleet;
  for (int i = 0; i < 6; ++i) fleet.push_back(Clean(absl::StrCat("m", i)));
  fleet[3] = WithProfile("m3", BitFlipResult{{Opcode::kAddRmReg}, 0, std::nullopt}, {4, 5});
  MemoryCorpus corpus(MadeCorpus(50));
  absl::StatusOr<FleetReport> r = FleetSimulate(fleet, corpus, CheckConfig{});
  ASSERT_TRUE(r.ok()) << r.status();
  for (size_t i = 0; i < fleet.size(); ++i) EXPECT_EQ(r->machines[i].detected(), i == 3) << i;
  std::set<int> cores;
  for (const auto& [core, n] : r->machines[3].core_mismatches) cores.insert(core);
  EXPECT_THAT(cores, ElementsAre(4, 5));
  EXPECT_EQ(r->sibling_pair_fraction, 1.0);
  const std::vector<Snapshot>& snaps = MadeCorpus(50);
  for (const DefectRecord& d : r->defects) {
    EXPECT_EQ(d.machine_id, "m3");
    // The hand-written ADD programs flip bit 0 of rax.
    if (d.snapshot_id == snaps[1].id) EXPECT_EQ(d.signature, "REGISTER:rax:bits=1");
  }
  nlohmann::json j = nlohmann::json::parse(FleetReportToJson(*r));
  EXPECT_EQ(j["machines"][3]["detected"], true);
  EXPECT_EQ(j["sibling_pair_fraction"], 1.0);
}

TEST(Fleet, RareFaultHasVariableTimeToFailure) {
  std::vector<MachineSpec> fleet = {
      WithProfile("rare", BitFlipResult{{Opcode::kAddRmReg}, 0, std::nullopt}, {4, 5}, 0.01)};
  MemoryCorpus corpus(MadeCorpus(50));
  FleetOptions options;
  options.trials = 20;
  options.stop_at_detection = true;
  CheckConfig config;
  config.max_invocations = 20;
  absl::StatusOr<FleetReport> r = FleetSimulate(fleet, corpus, config, options);
  ASSERT_TRUE(r.ok()) << r.status();
  const MachineReport& m = r->machines[0];
  EXPECT_EQ(m.trials, 20u);
  EXPECT_GE(m.trials_detected, 15u);
  EXPECT_GT(r->time_to_failure.max, r->time_to_failure.min);
  for (const auto& [core, n] : m.core_mismatches) EXPECT_TRUE(core == 4 || core == 5);
}

TEST(TriageLog, SummarizesOutcomeLog) {
  std::string log;
  CheckOutcome match;
  match.machine_id = "m";
  match.outcome.verdict = Verdict::kMatch;
  for (const CheckOutcome& o : {match, Mismatch("m", 2, "a", 0, 1), Mismatch("m", 3, "b", 0, 1)}) {
    log += CheckOutcomeToJson(o) + "\n";
  }
  absl::StatusOr<std::string> t = TriageLog(log);
  ASSERT_TRUE(t.ok()) << t.status();
  nlohmann::json j = nlohmann::json::parse(*t);
  EXPECT_EQ(j["outcomes"], 3);
  EXPECT_EQ(j["mismatches"], 2);
  EXPECT_EQ(j["signatures"]["SIGNAL_MISSING:ILL"], 2);
  EXPECT_EQ(j["cores"]["m"]["2"], 1);
  EXPECT_FALSE(TriageLog("{\"x\": 1}\n").ok());
}

}  // namespace
}  // namespace corefuzz
