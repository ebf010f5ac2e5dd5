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

#include <memory>
#include <vector>

#include "corefuzz/fault_backend.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace corefuzz {
namespace {

using ::corefuzz::testing::Assemble;
using ::corefuzz::testing::R;
using ::testing::ElementsAre;
using ::testing::IsEmpty;

// mov rax, addr; mov [rax], rax
std::vector<uint8_t> StoreTo(std::initializer_list<uint64_t> addrs) {
  std::vector<uint8_t> out;
  for (uint64_t a : addrs) {
    auto part = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{a}}),
                          BuildInstr(Opcode::kMovRmReg, 64, {MemOperand{0, 0, 0}, R(Gpr::kRax)})});
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<uint64_t> Starts(const Snapshot& s) {
  std::vector<uint64_t> out;
  for (const MemoryMapping& m : s.mappings) out.push_back(m.start);
  return out;
}

// Interpreter backend with extra address ranges reserved.
class ReservingBackend : public InterpBackend {
 public:
  explicit ReservingBackend(std::vector<AddressRange> reserved)
      : InterpBackend(BackendDescriptor{BackendKind::kInterp, "interp-v1", 0, kDefaultFlagsMask,
                                        std::move(reserved)},
                      nullptr) {}
};

TEST(MakeSnapshot, NopNeedsNoPages) {
  InterpBackend b;
  MakeResult r = MakeSnapshot(std::vector<uint8_t>{0x90}, b);
  ASSERT_TRUE(r.ok());
  const Snapshot& s = *r.snapshot;
  EXPECT_THAT(Starts(s), ElementsAre(kCodeAddress));
  EXPECT_EQ(s.mappings[0].perms, kPermR | kPermX);
  EXPECT_EQ(s.mappings[0].data[1], 0xCC);
  ASSERT_EQ(s.end_states.size(), 1u);
  EXPECT_EQ(s.end_states[0].registers.rip, 0x10000001u);
  EXPECT_THAT(s.end_states[0].platforms, ElementsAre("interp-v1"));
  EXPECT_THAT(Validate(s), IsEmpty());
  EXPECT_EQ(s.id.size(), 20u);
}

TEST(MakeSnapshot, MapsFaultingPages) {
  InterpBackend b;
  MakeResult r = MakeSnapshot(StoreTo({0x30000008, 0x20000ff8}), b);
  ASSERT_TRUE(r.ok()) << r.rejection->detail;
  const Snapshot& s = *r.snapshot;
  EXPECT_THAT(Starts(s), ElementsAre(kCodeAddress, 0x20000000u, 0x30000000u));
  EXPECT_EQ(s.mappings[1].perms, kPermR | kPermW);
  EXPECT_EQ(s.end_states[0].signal->signal, Signal::kTrap);
  EXPECT_EQ(s.end_states[0].mem_checksums.size(), 2u);
  EXPECT_THAT(Validate(s), IsEmpty());
}

TEST(MakeSnapshot, PageBudget) {
  InterpBackend b;
  std::vector<uint8_t> five = StoreTo({0x20000000, 0x21000000, 0x22000000, 0x23000000, 0x24000000});
  EXPECT_TRUE(MakeSnapshot(five, b).ok());
  MakeResult r = MakeSnapshot(
      StoreTo({0x20000000, 0x21000000, 0x22000000, 0x23000000, 0x24000000, 0x25000000}), b);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.rejection->reason, RejectionReason::kPageBudget);
  MakerConfig two;
  two.max_extra_pages = 2;
  EXPECT_EQ(MakeSnapshot(StoreTo({0x20000000, 0x21000000, 0x22000000}), b, two).rejection->reason,
            RejectionReason::kPageBudget);
}

TEST(MakeSnapshot, TerminalFaultsAreKept) {
  InterpBackend b;
  for (uint64_t addr : {uint64_t{0x10}, uint64_t{0xff8}, uint64_t{1} << 47,
                        uint64_t{0x8000000000000000}, uint64_t{0xffffffffffff0000}}) {
    MakeResult r = MakeSnapshot(StoreTo({addr}), b);
    ASSERT_TRUE(r.ok()) << std::hex << addr;
    EXPECT_THAT(Starts(*r.snapshot), ElementsAre(kCodeAddress));
    EXPECT_EQ(r.snapshot->end_states[0].signal->signal, Signal::kSegv);
  }
}

TEST(MakeSnapshot, FaultInsideExistingMappingIsCollision) {
  InterpBackend b;
  MakeResult r = MakeSnapshot(StoreTo({kCodeAddress + 0x800}), b);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.rejection->reason, RejectionReason::kMappingCollision);
  EXPECT_EQ(RejectionReasonName(r.rejection->reason), "MAPPING_COLLISION");
}

TEST(MakeSnapshot, ReservedPageIsCollision) {
  ReservingBackend b({AddressRange{0x20000000, 0x20100000}});
  MakeResult r = MakeSnapshot(StoreTo({0x20000010}), b);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.rejection->reason, RejectionReason::kMappingCollision);
  EXPECT_TRUE(MakeSnapshot(StoreTo({0x30000010}), b).ok());
}

TEST(MakeSnapshot, Timeout) {
  InterpBackend b;
  MakerConfig config;
  config.cpu_time_limit_ms = 5;
  MakeResult r = MakeSnapshot(std::vector<uint8_t>{0xEB, 0xFE}, b, config);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.rejection->reason, RejectionReason::kTimeout);
}

TEST(MakeSnapshot, InvalidLengths) {
  InterpBackend b;
  EXPECT_EQ(MakeSnapshot(std::vector<uint8_t>{}, b).rejection->reason,
            RejectionReason::kInvalidInput);
  EXPECT_EQ(MakeSnapshot(std::vector<uint8_t>(4096, 0x90), b).rejection->reason,
            RejectionReason::kInvalidInput);
  EXPECT_TRUE(MakeSnapshot(std::vector<uint8_t>(4095, 0x90), b).ok());
}

std::vector<uint8_t> ZeroAdd() {
  return Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRax), ImmOperand{0}}),
                   BuildInstr(Opcode::kAddRmReg, 64, {R(Gpr::kRax), R(Gpr::kRax)})});
}

TEST(VerifyDeterminism, CleanAndFlaky) {
  InterpBackend clean;
  const Snapshot s = *MakeSnapshot(ZeroAdd(), clean).snapshot;
  EXPECT_TRUE(VerifyDeterminism(s, clean, 8));
  auto flaky = MakeFaultBackend({FaultProfile{"zf", {0}, 0.5, StickyFlag{kFlagCF}}}, 7, 0);
  ASSERT_TRUE(flaky.ok());
  EXPECT_FALSE(VerifyDeterminism(s, **flaky, 8));
  auto always = MakeFaultBackend({FaultProfile{"zf", {0}, 1.0, StickyFlag{kFlagCF}}}, 7, 0);
  EXPECT_TRUE(VerifyDeterminism(s, **always, 8));
}

TEST(RecordEndStates, MergesAgreeingPlatforms) {
  InterpBackend a(0, "plat-a");
  InterpBackend b(1, "plat-b");
  const Snapshot s = *MakeSnapshot(ZeroAdd(), a).snapshot;
  absl::StatusOr<RecordedSnapshot> r = RecordEndStates(s, {&a, &b});
  ASSERT_TRUE(r.ok()) << r.status();
  ASSERT_EQ(r->snapshot.end_states.size(), 1u);
  EXPECT_THAT(r->snapshot.end_states[0].platforms, ElementsAre("plat-a", "plat-b"));
  EXPECT_FALSE(r->report.multi_state());
  EXPECT_EQ(r->report.snapshot_id, r->snapshot.id);
  EXPECT_NE(r->snapshot.id, s.id);
}

TEST(RecordEndStates, MaskAppliedBeforeMerge) {
  InterpBackend full(0, "plat-full");
  InterpBackend cf_only(1, "plat-cf", kFlagCF);
  const Snapshot s = *MakeSnapshot(ZeroAdd(), full).snapshot;
  absl::StatusOr<RecordedSnapshot> r = RecordEndStates(s, {&full, &cf_only});
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r->report.multi_state());
  FilterResult f = FilterMultistate({*r});
  EXPECT_THAT(f.kept, IsEmpty());
  ASSERT_EQ(f.discarded.size(), 1u);
  EXPECT_EQ(f.discarded[0].reason, "2 end states");
  // Masks agreeing on the result merge.
  InterpBackend cf_zf(1, "plat-cfzf", kFlagCF | kFlagZF | kFlagSF | kFlagOF);
  EXPECT_FALSE(RecordEndStates(s, {&full, &cf_zf})->report.multi_state());
}

TEST(RecordEndStates, TimeoutIsError) {
  InterpBackend b;
  MakerConfig config;
  config.cpu_time_limit_ms = 5;
  const Snapshot s = testing::CodeSnapshot({0xEB, 0xFE});
  EXPECT_EQ(RecordEndStates(s, {&b}, config).status().code(),
            absl::StatusCode::kDeadlineExceeded);
}

TEST(MakeOne, Pipeline) {
  InterpBackend a(0, "plat-a");
  InterpBackend cf_only(1, "plat-cf", kFlagCF);
  MakeRecord kept = MakeOne(StoreTo({0x20000000}), {&a});
  ASSERT_TRUE(kept.kept);
  EXPECT_FALSE(kept.rejection);
  MakeRecord multi = MakeOne(ZeroAdd(), {&a, &cf_only});
  EXPECT_FALSE(multi.kept);
  ASSERT_TRUE(multi.discarded);
  EXPECT_EQ(multi.rejection->reason, RejectionReason::kMultiState);
  auto flaky = MakeFaultBackend({FaultProfile{"cf", {0}, 0.5, StickyFlag{kFlagCF}}}, 7, 0);
  MakeRecord nondet = MakeOne(ZeroAdd(), {&a, flaky->get()});
  EXPECT_EQ(nondet.rejection->reason, RejectionReason::kNondeterministic);
}

}  // namespace
}  // namespace corefuzz
