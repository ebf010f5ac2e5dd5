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

#include "corefuzz/generator.h"

#include <cstdint>
#include <vector>

#include "isa_tables.h"

namespace corefuzz {

namespace {

// Data addresses the generator likes to aim at: far enough from the code page
// that the maker maps them as fresh rw pages.
constexpr uint64_t kDataArea = 0x20000000;

// Model entries grouped so that each opcode (with all Jcc counted as one
// opcode) is equally likely.
struct EntryGroups {
  std::vector<std::vector<IsaEntry>> groups;
};

const EntryGroups& Groups() {
  static const EntryGroups* groups = [] {
    auto* g = new EntryGroups;
    std::vector<IsaEntry> jcc;
    std::vector<IsaEntry> current;
    Opcode current_op = Opcode::kInvalid;
    for (const IsaEntry& e : IsaModel()) {
      if (e.opcode == Opcode::kInt3) continue;
      if (IsJcc(e.opcode)) {
        jcc.push_back(e);
        continue;
      }
      if (e.opcode != current_op && !current.empty()) {
        g->groups.push_back(std::move(current));
        current.clear();
      }
      current_op = e.opcode;
      current.push_back(e);
    }
    if (!current.empty()) g->groups.push_back(std::move(current));
    g->groups.push_back(std::move(jcc));
    return g;
  }();
  return *groups;
}

uint64_t RandomImmediate(Rng& rng) {
  switch (rng.Uniform(6)) {
    case 0: {
      constexpr uint64_t kBoundary[] = {0, 1, ~uint64_t{0}, 0x7fffffffffffffff,
                                        0x8000000000000000, 0x7fffffff, 0x80000000};
      return kBoundary[rng.Uniform(std::size(kBoundary))];
    }
    case 1:
    case 2:
      return rng.Uniform(256);
    case 3:
      return kDataArea + rng.Uniform(0x4000);
    case 4:
      return uint64_t{1} << rng.Uniform(64);
    default:
      return rng.Next();
  }
}

uint64_t Truncate(uint64_t v, int bits) {
  return bits >= 64 ? v : v & ((uint64_t{1} << bits) - 1);
}

MemOperand RandomMem(Rng& rng, MemForm form) {
  MemOperand m;
  switch (form) {
    case MemForm::kNone:
    case MemForm::kBase:
      do {
        m.base = static_cast<uint8_t>(rng.Uniform(16));
      } while ((m.base & 7) == 5);
      break;
    case MemForm::kBaseDisp8:
      m.base = static_cast<uint8_t>(rng.Uniform(16));
      m.disp = static_cast<int32_t>(rng.Range(-128, 127));
      m.disp_bytes = 1;
      break;
    case MemForm::kBaseDisp32:
      m.base = static_cast<uint8_t>(rng.Uniform(16));
      m.disp = rng.OneIn(2) ? static_cast<int32_t>(kDataArea + rng.Uniform(0x4000))
                            : static_cast<int32_t>(rng.Range(-4096, 4096));
      m.disp_bytes = 4;
      break;
    case MemForm::kRip:
      m.base = kBaseRip;
      // rip is near the code page; aim at the data area or the code itself.
      m.disp = rng.OneIn(4) ? static_cast<int32_t>(rng.Range(-64, 64))
                            : static_cast<int32_t>(kDataArea - kCodeAddress +
                                                   rng.Uniform(0x4000));
      m.disp_bytes = 4;
      break;
    case MemForm::kAbsolute:
      m.base = kBaseNone;
      m.disp = static_cast<int32_t>(kDataArea + rng.Uniform(0x4000));
      m.disp_bytes = 4;
      break;
  }
  return m;
}

RegOperand RandomReg(Rng& rng) { return RegOperand{static_cast<uint8_t>(rng.Uniform(16))}; }

Instr FromEntry(Rng& rng, const IsaEntry& e) {
  std::vector<Operand> ops;
  const OpInfo& info = Info(e.opcode);
  const bool reg_first = info.kind == OpKind::kRegRm;
  switch (e.form) {
    case OperandForm::kNone:
      break;
    case OperandForm::kRmReg:
      ops = {RandomReg(rng), RandomReg(rng)};
      break;
    case OperandForm::kRmMem:
      if (reg_first) {
        ops = {RandomReg(rng), RandomMem(rng, e.mem)};
      } else {
        ops = {RandomMem(rng, e.mem), RandomReg(rng)};
      }
      break;
    case OperandForm::kRm:
    case OperandForm::kOpReg:
      ops = {RandomReg(rng)};
      break;
    case OperandForm::kRmMem1:
      ops = {RandomMem(rng, e.mem)};
      break;
    case OperandForm::kRmRegImm8:
    case OperandForm::kRmMemImm8: {
      const uint64_t count = rng.OneIn(8) ? rng.Uniform(256) : rng.Uniform(64);
      if (e.form == OperandForm::kRmRegImm8) {
        ops = {RandomReg(rng), ImmOperand{count}};
      } else {
        ops = {RandomMem(rng, e.mem), ImmOperand{count}};
      }
      break;
    }
    case OperandForm::kRegImm:
      ops = {RandomReg(rng), ImmOperand{Truncate(RandomImmediate(rng), e.bits)}};
      break;
    case OperandForm::kRel8:
    case OperandForm::kRel32:
      // Placeholder; the program builder patches the displacement.
      ops = {ImmOperand{0}};
      break;
  }
  auto instr = BuildInstr(e.opcode, e.bits == 0 ? 64 : e.bits, std::move(ops), e.prefixes);
  // Every operand drawn above is legal for its entry.
  return *std::move(instr);
}

bool IsBranch(Opcode op) {
  return op == Opcode::kJmpRel8 || op == Opcode::kJmpRel32 || IsJcc(op);
}

}  // namespace

Instr GenRandomInstr(Rng& rng) {
  const auto& groups = Groups().groups;
  const auto& group = groups[rng.Uniform(groups.size())];
  return FromEntry(rng, group[rng.Uniform(group.size())]);
}

std::vector<uint8_t> GenRandomProgram(uint64_t seed, int max_instrs) {
  Rng rng(seed);
  const int n = 1 + static_cast<int>(rng.Uniform(static_cast<uint64_t>(std::max(1, max_instrs))));
  std::vector<Instr> instrs;
  instrs.reserve(n);
  for (int i = 0; i < n; ++i) instrs.push_back(GenRandomInstr(rng));

  // Branch lengths do not depend on the displacement, so offsets are final.
  std::vector<int64_t> offsets(n + 1, 0);
  for (int i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + instrs[i].length;

  for (int i = 0; i < n; ++i) {
    Instr& in = instrs[i];
    if (!IsBranch(in.opcode)) continue;
    const int64_t next = offsets[i + 1];
    const bool rel8 = in.opcode != Opcode::kJmpRel32;
    // Mostly forward; occasionally a loop back to an earlier boundary.
    int target = rng.OneIn(8) ? static_cast<int>(rng.Uniform(i + 1))
                              : i + 1 + static_cast<int>(rng.Uniform(n - i));
    auto fits = [&](int t) {
      const int64_t d = offsets[t] - next;
      return !rel8 || (d >= -128 && d <= 127);
    };
    // Pull out-of-range rel8 targets toward the branch.
    while (!fits(target)) target += target > i ? -1 : 1;
    const int64_t disp = offsets[target] - next;
    auto patched = BuildInstr(in.opcode, 64, {ImmOperand{static_cast<uint64_t>(disp)}},
                              in.prefixes);
    in = *std::move(patched);
  }

  std::vector<uint8_t> out;
  for (const Instr& in : instrs) out.insert(out.end(), in.raw.begin(), in.raw.end());
  return out;
}

}  // namespace corefuzz
