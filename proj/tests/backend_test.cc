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

#include <memory>
#include <vector>

#include "corefuzz/fault_backend.h"
#include "corefuzz/generator.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace corefuzz {
namespace {

using ::corefuzz::testing::Assemble;
using ::corefuzz::testing::CodeSnapshot;
using ::corefuzz::testing::kDataPage;
using ::corefuzz::testing::R;

// Random program with a data page and a stack inside it.
Snapshot RandomSnapshot(uint64_t seed) {
  const std::vector<uint8_t> code = GenRandomProgram(seed, 12);
  Snapshot s = CodeSnapshot(code, {kDataPage});
  s.registers[Gpr::kRsp] = kDataPage + 0x800;
  s.registers[Gpr::kRdi] = kDataPage + 0x100;
  s.registers[Gpr::kRsi] = kDataPage + 0x200;
  s.registers[Gpr::kRcx] = seed % 40;
  s.registers[Gpr::kRax] = seed * 0x9e3779b97f4a7c15ULL;
  return s;
}

FaultProfile Profile(std::string name, std::set<int> cores, double p, FaultEffect effect) {
  return FaultProfile{std::move(name), std::move(cores), p, std::move(effect)};
}

std::unique_ptr<FaultBackend> Faulted(std::vector<FaultProfile> profiles, int core,
                                      uint64_t seed = 1) {
  auto b = MakeFaultBackend(profiles, seed, core);
  EXPECT_TRUE(b.ok()) << b.status();
  return *std::move(b);
}

TEST(InterpBackend, NopTrapsAfterNop) {
  InterpBackend backend;
  absl::StatusOr<RawEndState> r = backend.Execute(MakeNopSnapshot());
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_EQ(r->signal, (SignalRecord{Signal::kTrap, 0}));
  EXPECT_EQ(r->registers.rip, 0x10000001u);
  EXPECT_TRUE(r->writable_memory.empty());
  EXPECT_EQ(backend.descriptor().platform_id, "interp-v1");
  EXPECT_EQ(backend.descriptor().kind, BackendKind::kInterp);
}

TEST(InterpBackend, MatchesDirectInterpreter) {
  InterpBackend backend;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const Snapshot s = RandomSnapshot(seed);
    const ExecLimits limits{100000, 3000};
    InterpResult direct = InterpRun(s, limits, false);
    absl::StatusOr<RawEndState> via = backend.Execute(s, limits);
    ASSERT_EQ(direct.end_state.ok(), via.ok()) << seed;
    if (via.ok()) {
      EXPECT_EQ(*via, *direct.end_state) << seed;
      ASSERT_EQ(via->writable_memory.size(), 1u);
    }
  }
}

TEST(InterpBackend, ChecksumsComeFromHarness) {
  InterpBackend backend;
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{kDataPage}}),
                        BuildInstr(Opcode::kMovRmReg, 64, {MemOperand{0, 0, 0}, R(Gpr::kRax)})});
  absl::StatusOr<PlanResult> r = backend.Run(CodeSnapshot(code, {kDataPage}));
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r->checksums.size(), 1u);
  EXPECT_EQ(r->checksums[0].start, kDataPage);
  EXPECT_EQ(r->checksums[0].checksum, ChecksumMemory(r->raw.writable_memory[0].bytes));
  EXPECT_NE(r->checksums[0].checksum, ChecksumMemory(std::vector<uint8_t>(4096, 0)));
}

TEST(InterpBackend, TimeoutThenRecovers) {
  InterpBackend backend;
  const Snapshot spin = CodeSnapshot({0xEB, 0xFE});
  absl::StatusOr<RawEndState> r = backend.Execute(spin, ExecLimits{10'000'000, 5});
  EXPECT_EQ(r.status().code(), absl::StatusCode::kDeadlineExceeded);
  EXPECT_TRUE(backend.Execute(MakeNopSnapshot()).ok());
}

TEST(InterpBackend, RejectsOverlappingMappings) {
  InterpBackend backend;
  Snapshot s = MakeNopSnapshot();
  s.mappings.push_back(s.mappings[0]);
  EXPECT_EQ(backend.Execute(s).status().code(), absl::StatusCode::kFailedPrecondition);
  EXPECT_TRUE(backend.Execute(MakeNopSnapshot()).ok());
}

TEST(FaultBackend, EmptyProfileSetIsIdentity) {
  InterpBackend clean;
  auto faulted = Faulted({}, 0);
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const Snapshot s = RandomSnapshot(seed);
    absl::StatusOr<RawEndState> a = clean.Execute(s, ExecLimits{100000, 3000});
    absl::StatusOr<RawEndState> b = faulted->Execute(s, ExecLimits{100000, 3000});
    ASSERT_EQ(a.ok(), b.ok());
    if (a.ok()) EXPECT_EQ(*a, *b) << seed;
  }
  EXPECT_EQ(faulted->descriptor().kind, BackendKind::kInterpFaulted);
}

TEST(FaultBackend, IllegalOvershootSkipsUd2) {
  const Snapshot s = CodeSnapshot({0x0F, 0x0B});  // UD2; INT3
  InterpBackend clean;
  EXPECT_EQ(clean.Execute(s)->signal.signal, Signal::kIll);
  auto b = Faulted({Profile("ud2", {0}, 1.0, IllegalOvershoot{2})}, 0);
  absl::StatusOr<RawEndState> r = b->Execute(s);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->signal.signal, Signal::kTrap);
  EXPECT_EQ(r->registers.rip, 0x10000002u);
}

Snapshot MulSnapshot(uint64_t a, uint64_t b) {
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{a}}),
                        BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRbx), ImmOperand{b}}),
                        BuildInstr(Opcode::kMul, 64, {R(Gpr::kRbx)})});
  return CodeSnapshot(code);
}

TEST(FaultBackend, BitFlipWithTrigger) {
  auto b = Faulted({Profile("mul", {0}, 1.0, BitFlipResult{{Opcode::kMul}, 23, 23})}, 0);
  // Source bit 23 clear: bit 23 of the product flips.
  absl::StatusOr<RawEndState> r = b->Execute(MulSnapshot(3, 5));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->registers[Gpr::kRax], 15u ^ (1u << 23));
  // Source bit 23 set: correct result.
  const uint64_t src = (1u << 23) | 1;
  r = b->Execute(MulSnapshot(3, src));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->registers[Gpr::kRax], 3 * src);
}

TEST(FaultBackend, StickyFlag) {
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{1}}),
                        BuildInstr(Opcode::kAddRmReg, 64, {R(Gpr::kRax), R(Gpr::kRax)})});
  const Snapshot s = CodeSnapshot(code);
  InterpBackend clean;
  EXPECT_FALSE(clean.Execute(s)->registers.rflags & kFlagZF);
  auto b = Faulted({Profile("zf", {0}, 1.0, StickyFlag{kFlagZF})}, 0);
  absl::StatusOr<RawEndState> r = b->Execute(s);
  EXPECT_TRUE(r->registers.rflags & kFlagZF);
  EXPECT_EQ(r->registers[Gpr::kRax], 2u);
}

TEST(FaultBackend, RepUndershoot) {
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRdi), ImmOperand{kDataPage}}),
                        BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRcx), ImmOperand{5}}),
                        BuildInstr(Opcode::kMovRegImm, 32, {R(Gpr::kRax), ImmOperand{0xAB}}),
                        BuildInstr(Opcode::kStosb, 0, {}, kPrefixRep)});
  const Snapshot s = CodeSnapshot(code, {kDataPage});
  auto b = Faulted({Profile("rep", {0}, 1.0, RepUndershoot{2})}, 0);
  absl::StatusOr<RawEndState> r = b->Execute(s);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->registers[Gpr::kRcx], 0u);
  const auto& mem = r->writable_memory[0].bytes;
  EXPECT_EQ(mem[3], 0xAB);
  EXPECT_EQ(mem[4], 0x00);
  InterpBackend clean;
  EXPECT_EQ(clean.Execute(s)->writable_memory[0].bytes[4], 0xAB);
}

TEST(FaultBackend, SkipStackPointerUpdate) {
  auto code = Assemble({BuildInstr(Opcode::kPush, 64, {R(Gpr::kRbx)})});
  Snapshot s = CodeSnapshot(code, {kDataPage});
  s.registers[Gpr::kRsp] = kDataPage + 0x800;
  auto b = Faulted(
      {Profile("push", {0}, 1.0, SkipSideEffectFault{{Opcode::kPush}, SideEffect::kStackPointer})},
      0);
  EXPECT_EQ(b->Execute(s)->registers[Gpr::kRsp], kDataPage + 0x800);
  InterpBackend clean;
  EXPECT_EQ(clean.Execute(s)->registers[Gpr::kRsp], kDataPage + 0x7F8);
}

TEST(FaultBackend, HiddenStatePersistsAcrossExecutions) {
  // Arm: DIV 1 / 1. Victim: ADD in a later snapshot.
  auto arm_code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{1}}),
                            BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRbx), ImmOperand{1}}),
                            BuildInstr(Opcode::kDiv, 64, {R(Gpr::kRbx)})});
  auto victim_code = Assemble({BuildInstr(Opcode::kAddRmReg, 64, {R(Gpr::kRax), R(Gpr::kRax)})});
  const Snapshot arm = CodeSnapshot(arm_code);
  Snapshot victim = CodeSnapshot(victim_code);
  victim.registers[Gpr::kRax] = 4;
  const FaultProfile p = Profile(
      "hidden", {0}, 1.0, HiddenStateMiscompute{{Opcode::kDiv}, {Opcode::kAddRmReg}, 5});

  auto b = Faulted({p}, 0);
  EXPECT_EQ(b->Execute(victim)->registers[Gpr::kRax], 8u);
  ASSERT_TRUE(b->Execute(arm).ok());
  EXPECT_EQ(b->Execute(victim)->registers[Gpr::kRax], 9u);

  // A separate instance has its own state.
  auto other = Faulted({p}, 0);
  EXPECT_EQ(other->Execute(victim)->registers[Gpr::kRax], 8u);

  // Explicit reset clears it.
  ASSERT_TRUE(b->Execute(arm).ok());
  b->Reset();
  EXPECT_EQ(b->Execute(victim)->registers[Gpr::kRax], 8u);
}

TEST(FaultBackend, HiddenStateExpiresAfterDuration) {
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRbx), ImmOperand{1}}),
                        BuildInstr(Opcode::kDiv, 64, {R(Gpr::kRbx)}),
                        BuildInstr(Opcode::kNop, 0, {}), BuildInstr(Opcode::kNop, 0, {}),
                        BuildInstr(Opcode::kAddRmReg, 64, {R(Gpr::kRcx), R(Gpr::kRcx)})});
  Snapshot s = CodeSnapshot(code);
  s.registers[Gpr::kRcx] = 2;
  // DIV, NOP, NOP, ADD: the ADD is the third instruction after arming.
  auto short_lived = Faulted(
      {Profile("h", {0}, 1.0, HiddenStateMiscompute{{Opcode::kDiv}, {Opcode::kAddRmReg}, 2})}, 0);
  EXPECT_EQ(short_lived->Execute(s)->registers[Gpr::kRcx], 4u);
  auto long_lived = Faulted(
      {Profile("h", {0}, 1.0, HiddenStateMiscompute{{Opcode::kDiv}, {Opcode::kAddRmReg}, 3})}, 0);
  EXPECT_EQ(long_lived->Execute(s)->registers[Gpr::kRcx], 5u);
}

TEST(FaultBackend, ZeroProbabilityIsClean) {
  InterpBackend clean;
  auto b = Faulted({Profile("mul", {0}, 0.0, BitFlipResult{{Opcode::kMul}, 23, std::nullopt}),
                    Profile("zf", {0}, 0.0, StickyFlag{kFlagZF}),
                    Profile("ud2", {0}, 0.0, IllegalOvershoot{2})},
                   0);
  for (uint64_t i = 0; i < 1000; ++i) {
    const Snapshot s = RandomSnapshot(i);
    absl::StatusOr<RawEndState> a = clean.Execute(s, ExecLimits{100000, 3000});
    absl::StatusOr<RawEndState> f = b->Execute(s, ExecLimits{100000, 3000});
    ASSERT_EQ(a.ok(), f.ok());
    if (a.ok()) ASSERT_EQ(*a, *f) << i;
  }
}

TEST(FaultBackend, CoreScoping) {
  const std::vector<FaultProfile> fleet = {
      Profile("ud2", {2, 3}, 1.0, IllegalOvershoot{2}),
      Profile("mul", {2, 3}, 1.0, BitFlipResult{{Opcode::kMul}, 23, std::nullopt}),
      Profile("zf", {2, 3}, 1.0, StickyFlag{kFlagZF}),
  };
  InterpBackend clean;
  for (int core : {0, 1, 4, 7}) {
    auto b = Faulted(fleet, core);
    for (uint64_t i = 0; i < 1000; i += (core == 0 ? 1 : 7)) {
      const Snapshot s = RandomSnapshot(i);
      absl::StatusOr<RawEndState> a = clean.Execute(s, ExecLimits{100000, 3000});
      absl::StatusOr<RawEndState> f = b->Execute(s, ExecLimits{100000, 3000});
      ASSERT_EQ(a.ok(), f.ok());
      if (a.ok()) ASSERT_EQ(*a, *f) << "core " << core << " snapshot " << i;
    }
  }
}

TEST(FaultBackend, FlakyActivationIsSeedDeterministic) {
  const FaultProfile p = Profile("ud2", {0}, 0.5, IllegalOvershoot{2});
  const Snapshot s = CodeSnapshot({0x0F, 0x0B});
  auto run = [&](uint64_t seed) {
    auto b = Faulted({p}, 0, seed);
    std::vector<Signal> out;
    for (int i = 0; i < 200; ++i) out.push_back(b->Execute(s)->signal.signal);
    return out;
  };
  const auto a = run(7);
  EXPECT_EQ(a, run(7));
  EXPECT_NE(a, run(8));
  const int traps = static_cast<int>(std::count(a.begin(), a.end(), Signal::kTrap));
  EXPECT_GT(traps, 60);
  EXPECT_LT(traps, 140);
}

TEST(FaultProfiles, ConflictingTargetsOnSharedCore) {
  const FaultProfile a = Profile("a", {2, 3}, 1.0, BitFlipResult{{Opcode::kMul}, 1, std::nullopt});
  const FaultProfile b = Profile("b", {3, 4}, 1.0, BitFlipResult{{Opcode::kMul}, 2, std::nullopt});
  const FaultProfile c = Profile("c", {4, 5}, 1.0, BitFlipResult{{Opcode::kMul}, 2, std::nullopt});
  EXPECT_EQ(ValidateProfiles({a, b}).code(), absl::StatusCode::kInvalidArgument);
  EXPECT_TRUE(ValidateProfiles({a, c}).ok());
  EXPECT_FALSE(MakeFaultBackend({a, b}, 1, 0).ok());
  const FaultProfile d = Profile("d", {2}, 1.0, IllegalOvershoot{2});
  const FaultProfile e =
      Profile("e", {2}, 1.0, HiddenStateMiscompute{{Opcode::kUd2}, {Opcode::kAddRmReg}, 1});
  EXPECT_FALSE(ValidateProfiles({d, e}).ok());
}

TEST(FaultProfiles, InvariantsChecked) {
  EXPECT_FALSE(ValidateProfile(Profile("x", {}, 1.0, StickyFlag{kFlagZF})).ok());
  EXPECT_FALSE(ValidateProfile(Profile("x", {0}, 1.5, StickyFlag{kFlagZF})).ok());
  EXPECT_FALSE(
      ValidateProfile(Profile("x", {0}, 1.0, BitFlipResult{{Opcode::kMul}, 64, std::nullopt}))
          .ok());
  EXPECT_FALSE(ValidateProfile(Profile(
                   "x", {0}, 1.0, HiddenStateMiscompute{{Opcode::kDiv}, {Opcode::kMul}, 0}))
                   .ok());
  EXPECT_FALSE(ValidateProfile(Profile("x", {0}, 1.0, StickyFlag{kFlagZF | kFlagCF})).ok());
}

constexpr char kFleetJson[] = R"({"profiles": [
  {"name": "overshoot", "active_cores": [2, 3], "activation_probability": 1,
   "effect": {"type": "ILLEGAL_OVERSHOOT", "skip_len": 2}},
  {"name": "mul23", "active_cores": [4, 5], "activation_probability": 1.0,
   "effect": {"type": "BIT_FLIP_RESULT", "opcode": "MUL", "bit_index": 23,
              "trigger_clear_bit": 23}},
  {"name": "zf", "active_cores": [6, 7], "activation_probability": 0.01,
   "effect": {"type": "STICKY_FLAG", "flag": "ZF"}},
  {"name": "rep", "active_cores": [0], "effect": {"type": "REP_UNDERSHOOT", "min_count": 2}},
  {"name": "hidden", "active_cores": [1],
   "effect": {"type": "HIDDEN_STATE_MISCOMPUTE", "arm_opcode": "DIV",
              "victim_opcode": "ADD", "duration": 5}},
  {"name": "push", "active_cores": [1],
   "effect": {"type": "SKIP_SIDE_EFFECT", "opcode": "PUSH", "effect_id": "STACK_POINTER"}}
]})";

TEST(FaultProfiles, ParseJson) {
  absl::StatusOr<std::vector<FaultProfile>> fleet = ParseFaultProfiles(kFleetJson);
  ASSERT_TRUE(fleet.ok()) << fleet.status();
  ASSERT_EQ(fleet->size(), 6u);
  EXPECT_EQ((*fleet)[0].active_cores, (std::set<int>{2, 3}));
  const auto& flip = std::get<BitFlipResult>((*fleet)[1].effect);
  EXPECT_EQ(flip.opcodes, std::vector<Opcode>{Opcode::kMul});
  EXPECT_EQ(flip.bit_index, 23);
  EXPECT_EQ(flip.trigger_clear_bit, 23);
  EXPECT_DOUBLE_EQ((*fleet)[2].activation_probability, 0.01);
  EXPECT_DOUBLE_EQ((*fleet)[3].activation_probability, 1.0);
  const auto& hidden = std::get<HiddenStateMiscompute>((*fleet)[4].effect);
  EXPECT_THAT(hidden.victim_opcodes,
              ::testing::UnorderedElementsAre(Opcode::kAddRmReg, Opcode::kAddRegRm));

  // Round trip through the writer.
  absl::StatusOr<std::vector<FaultProfile>> again =
      ParseFaultProfiles(FaultProfilesToJson(*fleet));
  ASSERT_TRUE(again.ok()) << again.status();
  EXPECT_EQ(FaultProfilesToJson(*again), FaultProfilesToJson(*fleet));
}

TEST(FaultProfiles, ParseErrors) {
  EXPECT_FALSE(ParseFaultProfiles("{").ok());
  EXPECT_FALSE(ParseFaultProfiles(R"({"name": "x", "active_cores": [0],
      "effect": {"type": "STICKY_FLAG", "flag": "ZF"}, "extra": 1})")
                   .ok());
  EXPECT_FALSE(ParseFaultProfiles(R"({"name": "x", "active_cores": [0],
      "effect": {"type": "BOGUS"}})")
                   .ok());
  EXPECT_FALSE(ParseFaultProfiles(R"({"name": "x", "active_cores": [0],
      "effect": {"type": "BIT_FLIP_RESULT", "opcode": "FSIN", "bit_index": 1}})")
                   .ok());
  EXPECT_FALSE(ParseFaultProfiles(R"({"name": "x", "active_cores": [-1],
      "effect": {"type": "STICKY_FLAG", "flag": "ZF"}})")
                   .ok());
}

TEST(FaultProfiles, ResolveOpcodes) {
  EXPECT_EQ(*ResolveOpcodes("MUL"), std::vector<Opcode>{Opcode::kMul});
  EXPECT_EQ(ResolveOpcodes("MOV")->size(), 3u);
  EXPECT_EQ(*ResolveOpcodes("ADD_RM_R"), std::vector<Opcode>{Opcode::kAddRmReg});
  EXPECT_FALSE(ResolveOpcodes("MO").ok());
}

}  // namespace
}  // namespace corefuzz
