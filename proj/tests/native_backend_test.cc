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

#include "corefuzz/native_backend.h"

#include <signal.h>

#include <memory>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace corefuzz {
namespace {

using ::corefuzz::testing::Assemble;
using ::corefuzz::testing::CodeSnapshot;
using ::corefuzz::testing::kDataPage;
using ::corefuzz::testing::R;

class NativeBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!NativeSupported()) GTEST_SKIP() << "host is not x86_64 Linux";
    auto b = MakeNativeBackend(0);
    ASSERT_TRUE(b.ok()) << b.status();
    native_ = *std::move(b);
  }

  static void ExpectSameUnderMask(const RawEndState& a, const RawEndState& b) {
    EXPECT_EQ(a.registers.gpr, b.registers.gpr);
    EXPECT_EQ(a.registers.rip, b.registers.rip);
    EXPECT_EQ(a.registers.rflags & kDefaultFlagsMask, b.registers.rflags & kDefaultFlagsMask);
    EXPECT_EQ(a.signal, b.signal);
    EXPECT_EQ(a.writable_memory, b.writable_memory);
  }

  std::unique_ptr<NativeBackend> native_;
  InterpBackend interp_;
};

TEST_F(NativeBackendTest, DescriptorAndPlatform) {
  EXPECT_EQ(native_->descriptor().kind, BackendKind::kNative);
  EXPECT_THAT(native_->platform_id(), ::testing::StartsWith("native-"));
  EXPECT_FALSE(native_->descriptor().reserved.empty());
  EXPECT_FALSE(MakeNativeBackend(NativeCoreCount() + 64).ok());
}

TEST_F(NativeBackendTest, NopMatchesInterpreter) {
  absl::StatusOr<RawEndState> r = native_->Execute(MakeNopSnapshot());
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_EQ(r->registers.rip, 0x10000001u);
  EXPECT_EQ(r->signal, (SignalRecord{Signal::kTrap, 0}));
  ExpectSameUnderMask(*r, *interp_.Execute(MakeNopSnapshot()));
}

TEST_F(NativeBackendTest, SignalsMatchInterpreter) {
  const std::vector<std::vector<uint8_t>> programs = {
      {0xF4},                                                  // HLT
      {0x0F, 0x0B},                                            // UD2
      Assemble({BuildInstr(Opcode::kDiv, 64, {R(Gpr::kRbx)})}),  // divide by zero
      Assemble({BuildInstr(Opcode::kMovRegRm, 64,
                           {R(Gpr::kRax), MemOperand{kBaseNone, 0x20000000, 4}})}),
      Assemble({BuildInstr(Opcode::kPush, 64, {R(Gpr::kRax)})}),  // rsp = 0
      Assemble({BuildInstr(Opcode::kMovRmReg, 64, {MemOperand{kBaseRip, -8, 4}, R(Gpr::kRax)})}),
  };
  for (const auto& code : programs) {
    const Snapshot s = CodeSnapshot(code);
    absl::StatusOr<RawEndState> n = native_->Execute(s);
    absl::StatusOr<RawEndState> i = interp_.Execute(s);
    ASSERT_TRUE(n.ok()) << n.status();
    ASSERT_TRUE(i.ok());
    SCOPED_TRACE(SignalName(i->signal.signal));
    ExpectSameUnderMask(*n, *i);
  }
}

TEST_F(NativeBackendTest, UnmappedReadFaultAddress) {
  auto code = Assemble(
      {BuildInstr(Opcode::kMovRegRm, 64, {R(Gpr::kRax), MemOperand{kBaseNone, 0x20000010, 4}})});
  absl::StatusOr<RawEndState> r = native_->Execute(CodeSnapshot(code));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->signal, (SignalRecord{Signal::kSegv, 0x20000010}));
  EXPECT_EQ(r->registers.rip, 0x10000000u);
}

TEST_F(NativeBackendTest, FlagsGridMatchesInterpreter) {
  const uint64_t values[] = {0, 1, 0x7F, 0x80, 0x7FFF, 0x8000, 0xFFFF, 0x7FFFFFFF, 0x80000000,
                             0xFFFFFFFF, 0x7FFFFFFFFFFFFFFF, 0x8000000000000000, ~uint64_t{0}};
  for (Opcode op : {Opcode::kAddRmReg, Opcode::kSubRmReg, Opcode::kCmpRmReg, Opcode::kXorRmReg,
                    Opcode::kAndRmReg, Opcode::kOrRmReg}) {
    for (int bits : {16, 32, 64}) {
      for (uint64_t a : values) {
        for (uint64_t b : values) {
          auto code = Assemble({BuildInstr(op, bits, {R(Gpr::kRax), R(Gpr::kRbx)})});
          Snapshot s = CodeSnapshot(code);
          s.registers[Gpr::kRax] = a;
          s.registers[Gpr::kRbx] = b;
          absl::StatusOr<RawEndState> n = native_->Execute(s);
          absl::StatusOr<RawEndState> i = interp_.Execute(s);
          ASSERT_TRUE(n.ok() && i.ok());
          ASSERT_EQ(n->registers.gpr, i->registers.gpr) << OpcodeName(op) << bits;
          ASSERT_EQ(n->registers.rflags & kDefaultFlagsMask, i->registers.rflags & kDefaultFlagsMask)
              << OpcodeName(op) << " " << bits << " " << a << " " << b;
        }
      }
    }
  }
}

TEST_F(NativeBackendTest, WritableMemoryReadBack) {
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRdi), ImmOperand{kDataPage}}),
                        BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRcx), ImmOperand{100}}),
                        BuildInstr(Opcode::kMovRegImm, 32, {R(Gpr::kRax), ImmOperand{0x5A}}),
                        BuildInstr(Opcode::kStosb, 0, {}, kPrefixRep)});
  const Snapshot s = CodeSnapshot(code, {kDataPage});
  absl::StatusOr<PlanResult> n = native_->Run(s);
  absl::StatusOr<PlanResult> i = interp_.Run(s);
  ASSERT_TRUE(n.ok() && i.ok());
  ExpectSameUnderMask(n->raw, i->raw);
  EXPECT_EQ(n->checksums, i->checksums);
}

TEST_F(NativeBackendTest, TimeoutThenRecovers) {
  absl::StatusOr<RawEndState> r = native_->Execute(CodeSnapshot({0xEB, 0xFE}), ExecLimits{0, 50});
  EXPECT_EQ(r.status().code(), absl::StatusCode::kDeadlineExceeded);
  EXPECT_TRUE(native_->Execute(MakeNopSnapshot()).ok());
}

TEST_F(NativeBackendTest, ReservedRangeCollision) {
  const AddressRange r = native_->descriptor().reserved.front();
  Snapshot s = MakeNopSnapshot();
  s.mappings[0].start = r.start & ~(kPageSize - 1);
  s.registers.rip = s.mappings[0].start;
  EXPECT_EQ(native_->Execute(s).status().code(), absl::StatusCode::kFailedPrecondition);
  EXPECT_TRUE(native_->Execute(MakeNopSnapshot()).ok());
}

TEST_F(NativeBackendTest, ChecksumOfUnmappedRangeIsError) {
  absl::StatusOr<Response> r = native_->native_executor().Send(ChecksumCommand{0x50000000, 4096});
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(std::holds_alternative<ErrResponse>(*r));
}

TEST_F(NativeBackendTest, HarnessDeathIsAnomalyAndRecovers) {
  NativeExecutor& ex = native_->native_executor();
  ex.set_crash_injector([](const Command& c, pid_t pid) {
    if (std::holds_alternative<ProtectCommand>(c)) kill(pid, SIGKILL);
  });
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(native_->Execute(MakeNopSnapshot()).status().code(), absl::StatusCode::kUnavailable);
  }
  ex.set_crash_injector(nullptr);
  EXPECT_TRUE(native_->Execute(MakeNopSnapshot()).ok());
  EXPECT_GE(ex.spawn_count(), 21);
}

TEST_F(NativeBackendTest, SnapshotCannotTakeDownDriver) {
  // Code that scribbles over its own data page then faults.
  auto code = Assemble({BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRdi), ImmOperand{kDataPage}}),
                        BuildInstr(Opcode::kMovRegImm, 64, {R(Gpr::kRcx), ImmOperand{8192}}),
                        BuildInstr(Opcode::kStosb, 0, {}, kPrefixRep)});
  absl::StatusOr<RawEndState> r = native_->Execute(CodeSnapshot(code, {kDataPage}));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->signal, (SignalRecord{Signal::kSegv, kDataPage + kPageSize}));
  EXPECT_EQ(r->registers[Gpr::kRcx], 4096u);
  EXPECT_TRUE(native_->Execute(MakeNopSnapshot()).ok());
}

}  // namespace
}  // namespace corefuzz
