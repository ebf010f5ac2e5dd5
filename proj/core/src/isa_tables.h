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

// Per-opcode encoding facts shared by the decoder, encoder and model.

#ifndef COREFUZZ_SRC_ISA_TABLES_H_
#define COREFUZZ_SRC_ISA_TABLES_H_

#include <array>
#include <cstdint>
#include <string_view>

#include "corefuzz/isa.h"

namespace corefuzz {

enum class OpKind : uint8_t {
  kNone,
  kRmReg,   // r/m, reg (ModRM.reg is the source)
  kRegRm,   // reg, r/m
  kRm,      // r/m with an opcode extension in ModRM.reg
  kRmImm8,  // r/m, imm8 with an opcode extension
  kRegImm,  // register in the low opcode bits, then an immediate
  kOpReg,   // register in the low opcode bits
  kRel8,
  kRel32,
};

struct OpInfo {
  Opcode op;
  std::string_view name;
  std::string_view mnemonic;
  uint8_t byte;  // opcode byte; second byte when two_byte
  int8_t ext;    // ModRM.reg extension, or -1
  OpKind kind;
  bool sized;
  bool mem_only = false;
  bool two_byte = false;
  uint8_t allowed_prefixes = 0;
  bool no_rex_w = false;
};

inline constexpr uint8_t kSizedPrefixes = kPrefixOpsize;
inline constexpr uint8_t kStringPrefixes = kPrefixRep | kPrefixRepne;

#define COREFUZZ_ALU(Name, NAME, rm_reg, reg_rm)                                     \
  OpInfo{Opcode::k##Name##RmReg, NAME "_RM_R", NAME, rm_reg, -1, OpKind::kRmReg, true, \
         false, false, kSizedPrefixes},                                              \
      OpInfo {                                                                       \
    Opcode::k##Name##RegRm, NAME "_R_RM", NAME, reg_rm, -1, OpKind::kRegRm, true,    \
        false, false, kSizedPrefixes                                                 \
  }

#define COREFUZZ_JCC(Name, NAME, cc) \
  OpInfo { Opcode::k##Name, NAME, NAME, 0x70 + cc, -1, OpKind::kRel8, false }

inline constexpr std::array<OpInfo, kNumOpcodes> kOpInfo = {{
    {Opcode::kInvalid, "INVALID", "INVALID", 0, -1, OpKind::kNone, false},
    {Opcode::kNop, "NOP", "NOP", 0x90, -1, OpKind::kNone, false, false, false, kPrefixOpsize},
    {Opcode::kInt3, "INT3", "INT3", 0xCC, -1, OpKind::kNone, false},
    {Opcode::kHlt, "HLT", "HLT", 0xF4, -1, OpKind::kNone, false},
    {Opcode::kUd2, "UD2", "UD2", 0x0B, -1, OpKind::kNone, false, false, true},
    {Opcode::kMovRegImm, "MOV_R_IMM", "MOV", 0xB8, -1, OpKind::kRegImm, true, false, false,
     kSizedPrefixes},
    {Opcode::kMovRmReg, "MOV_RM_R", "MOV", 0x89, -1, OpKind::kRmReg, true, false, false,
     kSizedPrefixes},
    {Opcode::kMovRegRm, "MOV_R_RM", "MOV", 0x8B, -1, OpKind::kRegRm, true, false, false,
     kSizedPrefixes},
    COREFUZZ_ALU(Add, "ADD", 0x01, 0x03),
    COREFUZZ_ALU(Sub, "SUB", 0x29, 0x2B),
    COREFUZZ_ALU(Xor, "XOR", 0x31, 0x33),
    COREFUZZ_ALU(And, "AND", 0x21, 0x23),
    COREFUZZ_ALU(Or, "OR", 0x09, 0x0B),
    COREFUZZ_ALU(Cmp, "CMP", 0x39, 0x3B),
    {Opcode::kTest, "TEST", "TEST", 0x85, -1, OpKind::kRmReg, true, false, false,
     kSizedPrefixes},
    {Opcode::kLea, "LEA", "LEA", 0x8D, -1, OpKind::kRegRm, true, true, false, kSizedPrefixes},
    {Opcode::kInc, "INC", "INC", 0xFF, 0, OpKind::kRm, true, false, false, kSizedPrefixes},
    {Opcode::kDec, "DEC", "DEC", 0xFF, 1, OpKind::kRm, true, false, false, kSizedPrefixes},
    {Opcode::kShl, "SHL", "SHL", 0xC1, 4, OpKind::kRmImm8, true, false, false, kSizedPrefixes},
    {Opcode::kShr, "SHR", "SHR", 0xC1, 5, OpKind::kRmImm8, true, false, false, kSizedPrefixes},
    {Opcode::kSar, "SAR", "SAR", 0xC1, 7, OpKind::kRmImm8, true, false, false, kSizedPrefixes},
    {Opcode::kMul, "MUL", "MUL", 0xF7, 4, OpKind::kRm, true, false, false, kSizedPrefixes},
    {Opcode::kImul, "IMUL", "IMUL", 0xF7, 5, OpKind::kRm, true, false, false, kSizedPrefixes},
    {Opcode::kDiv, "DIV", "DIV", 0xF7, 6, OpKind::kRm, true, false, false, kSizedPrefixes},
    {Opcode::kPush, "PUSH", "PUSH", 0x50, -1, OpKind::kOpReg, false},
    {Opcode::kPop, "POP", "POP", 0x58, -1, OpKind::kOpReg, false},
    {Opcode::kJmpRel8, "JMP_REL8", "JMP", 0xEB, -1, OpKind::kRel8, false},
    {Opcode::kJmpRel32, "JMP_REL32", "JMP", 0xE9, -1, OpKind::kRel32, false},
    COREFUZZ_JCC(Jo, "JO", 0x0),
    COREFUZZ_JCC(Jno, "JNO", 0x1),
    COREFUZZ_JCC(Jb, "JB", 0x2),
    COREFUZZ_JCC(Jae, "JAE", 0x3),
    COREFUZZ_JCC(Je, "JE", 0x4),
    COREFUZZ_JCC(Jne, "JNE", 0x5),
    COREFUZZ_JCC(Jbe, "JBE", 0x6),
    COREFUZZ_JCC(Ja, "JA", 0x7),
    COREFUZZ_JCC(Js, "JS", 0x8),
    COREFUZZ_JCC(Jns, "JNS", 0x9),
    COREFUZZ_JCC(Jp, "JP", 0xA),
    COREFUZZ_JCC(Jnp, "JNP", 0xB),
    COREFUZZ_JCC(Jl, "JL", 0xC),
    COREFUZZ_JCC(Jge, "JGE", 0xD),
    COREFUZZ_JCC(Jle, "JLE", 0xE),
    COREFUZZ_JCC(Jg, "JG", 0xF),
    {Opcode::kMovsb, "MOVSB", "MOVSB", 0xA4, -1, OpKind::kNone, false, false, false,
     kStringPrefixes, true},
    {Opcode::kStosb, "STOSB", "STOSB", 0xAA, -1, OpKind::kNone, false, false, false,
     kStringPrefixes, true},
}};

#undef COREFUZZ_ALU
#undef COREFUZZ_JCC

inline constexpr bool TableIsIndexed() {
  for (int i = 0; i < kNumOpcodes; ++i) {
    if (static_cast<int>(kOpInfo[i].op) != i) return false;
  }
  return true;
}
static_assert(TableIsIndexed(), "kOpInfo must be indexed by Opcode");

inline const std::array<OpInfo, kNumOpcodes>& OpInfoTable() { return kOpInfo; }
inline const OpInfo& Info(Opcode op) { return kOpInfo[static_cast<int>(op)]; }

}  // namespace corefuzz

#endif  // COREFUZZ_SRC_ISA_TABLES_H_
