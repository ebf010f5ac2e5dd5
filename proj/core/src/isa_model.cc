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

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "absl/strings/str_cat.h"
#include "corefuzz/isa.h"
#include "isa_tables.h"

namespace corefuzz {

namespace {

constexpr MemForm kMemForms[] = {MemForm::kBase, MemForm::kBaseDisp8, MemForm::kBaseDisp32,
                                 MemForm::kRip, MemForm::kAbsolute};

std::vector<IsaEntry> BuildModel() {
  std::vector<IsaEntry> model;
  for (const OpInfo& info : OpInfoTable()) {
    if (info.op == Opcode::kInvalid) continue;
    const auto sized_bits = info.sized ? std::vector<int>{16, 32, 64} : std::vector<int>{0};
    for (int bits : sized_bits) {
      const uint8_t prefixes = bits == 16 ? kPrefixOpsize : 0;
      auto add = [&](OperandForm form, MemForm mem = MemForm::kNone) {
        model.push_back(IsaEntry{info.op, prefixes, bits, form, mem});
      };
      auto add_mem = [&](OperandForm form) {
        for (MemForm m : kMemForms) add(form, m);
      };
      switch (info.kind) {
        case OpKind::kNone:
          add(OperandForm::kNone);
          if (info.op == Opcode::kNop) {
            model.push_back(IsaEntry{info.op, kPrefixOpsize, 0, OperandForm::kNone});
          }
          if (info.allowed_prefixes & kPrefixRep) {
            model.push_back(IsaEntry{info.op, kPrefixRep, 0, OperandForm::kNone});
            model.push_back(IsaEntry{info.op, kPrefixRepne, 0, OperandForm::kNone});
          }
          break;
        case OpKind::kRmReg:
        case OpKind::kRegRm:
          if (!info.mem_only) add(OperandForm::kRmReg);
          add_mem(OperandForm::kRmMem);
          break;
        case OpKind::kRm:
          add(OperandForm::kRm);
          add_mem(OperandForm::kRmMem1);
          break;
        case OpKind::kRmImm8:
          add(OperandForm::kRmRegImm8);
          add_mem(OperandForm::kRmMemImm8);
          break;
        case OpKind::kRegImm:
          add(OperandForm::kRegImm);
          break;
        case OpKind::kOpReg:
          add(OperandForm::kOpReg);
          break;
        case OpKind::kRel8:
          add(OperandForm::kRel8);
          break;
        case OpKind::kRel32:
          add(OperandForm::kRel32);
          break;
      }
    }
  }
  return model;
}

std::string_view FormName(OperandForm f) {
  switch (f) {
    case OperandForm::kNone: return "none";
    case OperandForm::kRmReg: return "reg,reg";
    case OperandForm::kRmMem: return "reg,mem";
    case OperandForm::kRm: return "reg";
    case OperandForm::kRmMem1: return "mem";
    case OperandForm::kRmRegImm8: return "reg,imm8";
    case OperandForm::kRmMemImm8: return "mem,imm8";
    case OperandForm::kRegImm: return "reg,imm";
    case OperandForm::kOpReg: return "opreg";
    case OperandForm::kRel8: return "rel8";
    case OperandForm::kRel32: return "rel32";
  }
  return "?";
}

std::string_view MemFormName(MemForm m) {
  switch (m) {
    case MemForm::kNone: return "";
    case MemForm::kBase: return "[base]";
    case MemForm::kBaseDisp8: return "[base+disp8]";
    case MemForm::kBaseDisp32: return "[base+disp32]";
    case MemForm::kRip: return "[rip+disp32]";
    case MemForm::kAbsolute: return "[disp32]";
  }
  return "?";
}

// Boundary values {0, 1, 2^31-1, 2^63-1, all-ones} truncated to `bytes`.
std::vector<uint64_t> BoundaryImmediates(int bytes) {
  const uint64_t mask = bytes >= 8 ? ~uint64_t{0} : (uint64_t{1} << (8 * bytes)) - 1;
  std::vector<uint64_t> out;
  for (uint64_t v : {uint64_t{0}, uint64_t{1}, uint64_t{0x7fffffff},
                     uint64_t{0x7fffffffffffffff}, ~uint64_t{0}}) {
    out.push_back(v & mask);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int64_t> BoundaryDisplacements(int bytes) {
  if (bytes == 1) return {-128, -1, 0, 1, 127};
  return {INT32_MIN, -1, 0, 1, INT32_MAX};
}

// Memory operands of one form over all base registers and boundary
// displacements.
std::vector<MemOperand> MemOperands(MemForm form) {
  std::vector<MemOperand> out;
  switch (form) {
    case MemForm::kNone:
      break;
    case MemForm::kBase:
      for (uint8_t b = 0; b < 16; ++b) {
        if ((b & 7) != 5) out.push_back(MemOperand{b, 0, 0});
      }
      break;
    case MemForm::kBaseDisp8:
    case MemForm::kBaseDisp32: {
      const uint8_t n = form == MemForm::kBaseDisp8 ? 1 : 4;
      for (uint8_t b = 0; b < 16; ++b) {
        for (int64_t d : BoundaryDisplacements(n)) {
          out.push_back(MemOperand{b, static_cast<int32_t>(d), n});
        }
      }
      break;
    }
    case MemForm::kRip:
    case MemForm::kAbsolute:
      for (int64_t d : BoundaryDisplacements(4)) {
        out.push_back(MemOperand{form == MemForm::kRip ? kBaseRip : kBaseNone,
                                 static_cast<int32_t>(d), 4});
      }
      break;
  }
  return out;
}

void Emit(const IsaEntry& e, std::vector<Operand> operands, std::vector<Instr>& out) {
  auto instr = BuildInstr(e.opcode, e.bits == 0 ? 64 : e.bits, std::move(operands),
                          e.prefixes);
  // A failed build is kept as an invalid instruction so round-trip checks
  // surface it instead of silently shrinking the enumeration.
  out.push_back(instr.ok() ? *std::move(instr) : Instr{});
}

}  // namespace

const std::vector<IsaEntry>& IsaModel() {
  static const auto* model = new std::vector<IsaEntry>(BuildModel());
  return *model;
}

std::string ToString(const IsaEntry& entry) {
  std::string out = std::string(OpcodeName(entry.opcode));
  if (entry.prefixes & kPrefixOpsize) absl::StrAppend(&out, " 66");
  if (entry.prefixes & kPrefixRep) absl::StrAppend(&out, " F3");
  if (entry.prefixes & kPrefixRepne) absl::StrAppend(&out, " F2");
  if (entry.bits == 64) absl::StrAppend(&out, " REX.W");
  if (entry.bits != 0) absl::StrAppend(&out, " bits=", entry.bits);
  absl::StrAppend(&out, " form=", std::string(FormName(entry.form)));
  if (entry.mem != MemForm::kNone) absl::StrAppend(&out, " mem=", std::string(MemFormName(entry.mem)));
  return out;
}

std::string DumpIsaModel() {
  std::string out;
  for (const IsaEntry& e : IsaModel()) {
    const OpInfo& info = Info(e.opcode);
    std::string opbytes = info.two_byte ? absl::StrCat("0f ", HexBytes({info.byte}))
                                        : HexBytes({info.byte});
    if (info.ext >= 0) absl::StrAppend(&opbytes, " /", info.ext);
    if (info.kind == OpKind::kRegImm || info.kind == OpKind::kOpReg) {
      absl::StrAppend(&opbytes, "+r");
    }
    absl::StrAppend(&out, opbytes, "\t", ToString(e), "\n");
  }
  return out;
}

std::vector<Instr> EnumerateEntry(const IsaEntry& e) {
  std::vector<Instr> out;
  const OpInfo& info = Info(e.opcode);
  const bool reg_first = info.kind == OpKind::kRegRm;
  switch (e.form) {
    case OperandForm::kNone:
      Emit(e, {}, out);
      break;
    case OperandForm::kRmReg:
      for (uint8_t a = 0; a < 16; ++a) {
        for (uint8_t b = 0; b < 16; ++b) Emit(e, {RegOperand{a}, RegOperand{b}}, out);
      }
      break;
    case OperandForm::kRmMem:
      for (uint8_t r = 0; r < 16; ++r) {
        for (const MemOperand& m : MemOperands(e.mem)) {
          // Every register with the first memory operand, every memory
          // operand with every register would be 16x larger for no gain.
          if (r != 0 && !(m.base == r || m.base >= 16)) continue;
          if (reg_first) {
            Emit(e, {RegOperand{r}, m}, out);
          } else {
            Emit(e, {m, RegOperand{r}}, out);
          }
        }
      }
      break;
    case OperandForm::kRm:
    case OperandForm::kOpReg:
      for (uint8_t r = 0; r < 16; ++r) Emit(e, {RegOperand{r}}, out);
      break;
    case OperandForm::kRmMem1:
      for (const MemOperand& m : MemOperands(e.mem)) Emit(e, {m}, out);
      break;
    case OperandForm::kRmRegImm8:
      for (uint8_t r = 0; r < 16; ++r) {
        for (uint64_t v : BoundaryImmediates(1)) Emit(e, {RegOperand{r}, ImmOperand{v}}, out);
      }
      break;
    case OperandForm::kRmMemImm8:
      for (const MemOperand& m : MemOperands(e.mem)) {
        for (uint64_t v : BoundaryImmediates(1)) Emit(e, {m, ImmOperand{v}}, out);
      }
      break;
    case OperandForm::kRegImm: {
      const int bytes = e.bits == 64 ? 8 : e.bits / 8;
      for (uint8_t r = 0; r < 16; ++r) {
        for (uint64_t v : BoundaryImmediates(bytes)) {
          Emit(e, {RegOperand{r}, ImmOperand{v}}, out);
        }
      }
      break;
    }
    case OperandForm::kRel8:
    case OperandForm::kRel32:
      for (int64_t d : BoundaryDisplacements(e.form == OperandForm::kRel8 ? 1 : 4)) {
        Emit(e, {ImmOperand{static_cast<uint64_t>(d)}}, out);
      }
      break;
  }
  return out;
}

}  // namespace corefuzz
