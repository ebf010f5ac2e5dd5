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

// The x86_64 instruction subset understood by the decoder, encoder,
// interpreter and random generator.
//
// Supported encodings (W = REX.W, 66 = operand-size prefix):
//
//   90 NOP, CC INT3, F4 HLT, 0F 0B UD2
//   B8+r MOV r,imm             89 MOV r/m,r       8B MOV r,r/m
//   01/03 ADD  29/2B SUB  31/33 XOR  21/23 AND  09/0B OR  39/3B CMP
//   85 TEST r/m,r              8D LEA r,m
//   FF /0 INC r/m  FF /1 DEC r/m
//   C1 /4 SHL  C1 /5 SHR  C1 /7 SAR r/m,imm8
//   F7 /4 MUL  F7 /5 IMUL  F7 /6 DIV r/m
//   50+r PUSH  58+r POP
//   EB JMP rel8  E9 JMP rel32  70..7F Jcc rel8
//   A4 MOVSB  AA STOSB, optionally F3 (REP) or F2 (REPNE) prefixed
//
// Sized instructions operate on 64 bits with REX.W, 16 bits with 66 and no
// REX.W, and 32 bits otherwise. Memory operands are [base], [base+disp8],
// [base+disp32], [rip+disp32] and [disp32]; SIB is only accepted without an
// index register.

#ifndef COREFUZZ_ISA_H_
#define COREFUZZ_ISA_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "absl/status/statusor.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

inline constexpr size_t kMaxInstrLength = 15;

enum class Opcode : uint8_t {
  kInvalid = 0,
  kNop,
  kInt3,
  kHlt,
  kUd2,
  kMovRegImm,
  kMovRmReg,
  kMovRegRm,
  kAddRmReg,
  kAddRegRm,
  kSubRmReg,
  kSubRegRm,
  kXorRmReg,
  kXorRegRm,
  kAndRmReg,
  kAndRegRm,
  kOrRmReg,
  kOrRegRm,
  kCmpRmReg,
  kCmpRegRm,
  kTest,
  kLea,
  kInc,
  kDec,
  kShl,
  kShr,
  kSar,
  kMul,
  kImul,
  kDiv,
  kPush,
  kPop,
  kJmpRel8,
  kJmpRel32,
  // Jcc in condition-code order (70 + cc).
  kJo,
  kJno,
  kJb,
  kJae,
  kJe,
  kJne,
  kJbe,
  kJa,
  kJs,
  kJns,
  kJp,
  kJnp,
  kJl,
  kJge,
  kJle,
  kJg,
  kMovsb,
  kStosb,
  kCount,
};

inline constexpr int kNumOpcodes = static_cast<int>(Opcode::kCount);

std::string_view OpcodeName(Opcode op);
std::optional<Opcode> ParseOpcode(std::string_view name);

inline bool IsJcc(Opcode op) { return op >= Opcode::kJo && op <= Opcode::kJg; }
inline int ConditionCode(Opcode op) {
  return static_cast<int>(op) - static_cast<int>(Opcode::kJo);
}

// Legacy prefix bits.
enum Prefix : uint8_t {
  kPrefixOpsize = 1,  // 66
  kPrefixRep = 2,     // F3
  kPrefixRepne = 4,   // F2
};

// Registers inside an Instr use the hardware encoding number (0 = rax,
// 1 = rcx, 2 = rdx, 3 = rbx, 4 = rsp, ...), not RegisterState order.
Gpr GprFromEncoding(uint8_t reg);
std::string_view EncodedRegName(uint8_t reg);

struct RegOperand {
  uint8_t reg = 0;
  bool operator==(const RegOperand&) const = default;
};

// Immediates are held zero-extended from their encoded width, except branch
// displacements, which are sign-extended.
struct ImmOperand {
  uint64_t value = 0;
  bool operator==(const ImmOperand&) const = default;
};

inline constexpr uint8_t kBaseRip = 16;
inline constexpr uint8_t kBaseNone = 17;

struct MemOperand {
  uint8_t base = 0;  // 0..15, kBaseRip or kBaseNone
  int32_t disp = 0;
  uint8_t disp_bytes = 0;  // 0, 1 or 4
  bool operator==(const MemOperand&) const = default;
};

using Operand = std::variant<RegOperand, ImmOperand, MemOperand>;

struct Instr {
  Opcode opcode = Opcode::kInvalid;
  std::optional<uint8_t> rex;
  uint8_t prefixes = 0;
  // Destination first.
  std::vector<Operand> operands;
  uint8_t length = 0;
  std::vector<uint8_t> raw;

  // 16, 32 or 64 for sized instructions.
  int OperandBits() const;
  bool rex_w() const { return rex.has_value() && (*rex & 0x08); }

  bool operator==(const Instr&) const = default;
};

// "ADD rax, rbx" style rendering.
std::string ToString(const Instr& instr);

enum class DecodeErrorKind : uint8_t {
  kEmptyInput = 1,
  kTooLong = 2,
  kUnsupported = 3,
  kTruncated = 4,
};

std::string_view DecodeErrorName(DecodeErrorKind kind);

struct DecodeError {
  DecodeErrorKind kind = DecodeErrorKind::kUnsupported;
  // Bytes looked at before giving up.
  size_t bytes_examined = 0;
  // Offset of the failing instruction within a program.
  size_t offset = 0;

  bool operator==(const DecodeError&) const = default;
};

using DecodeResult = std::variant<Instr, DecodeError>;

// Decodes a single instruction. Never reads past index kMaxInstrLength - 1.
DecodeResult DecodeOne(std::span<const uint8_t> bytes);

struct DecodedProgram {
  // Decoded prefix of the input; ends with INT3 when one was found.
  std::vector<Instr> instrs;
  std::optional<DecodeError> error;
};

// Greedy sequential decode that stops at the first error or INT3.
DecodedProgram DecodeProgram(std::span<const uint8_t> bytes);

// Encodes an instruction. The `raw` and `length` fields are ignored. Fails
// with kInvalidArgument for combinations outside the model.
absl::StatusOr<std::vector<uint8_t>> Encode(const Instr& instr);

// Builds an instruction with the REX byte derived from `bits` and the
// register operands, then fills in `raw` and `length`.
absl::StatusOr<Instr> BuildInstr(Opcode op, int bits, std::vector<Operand> operands,
                                 uint8_t prefixes = 0);

// ---------------------------------------------------------------------------
// IsaModel: the table of legal (opcode, prefixes, operand form) combinations.

enum class OperandForm : uint8_t {
  kNone,
  kRmReg,   // reg-reg form of an r/m,reg or reg,r/m instruction
  kRmMem,   // memory form
  kRm,      // single r/m operand, register
  kRmMem1,  // single r/m operand, memory
  kRmRegImm8,
  kRmMemImm8,
  kRegImm,
  kOpReg,  // register encoded in the opcode byte
  kRel8,
  kRel32,
};

enum class MemForm : uint8_t { kNone, kBase, kBaseDisp8, kBaseDisp32, kRip, kAbsolute };

struct IsaEntry {
  Opcode opcode = Opcode::kInvalid;
  uint8_t prefixes = 0;
  int bits = 64;  // 0 for unsized instructions
  OperandForm form = OperandForm::kNone;
  MemForm mem = MemForm::kNone;

  bool operator==(const IsaEntry&) const = default;
};

const std::vector<IsaEntry>& IsaModel();

std::string ToString(const IsaEntry& entry);

// Textual dump of the model for auditing; one entry per line.
std::string DumpIsaModel();

// Every instruction of `entry` over all register choices and the boundary
// immediate/displacement values.
std::vector<Instr> EnumerateEntry(const IsaEntry& entry);

// Prefix bits used by coverage features: legacy prefixes in bits 0..2,
// REX present in bit 3 and REX.W in bit 4.
uint8_t CoveragePrefixBits(const Instr& instr);

}  // namespace corefuzz

#endif  // COREFUZZ_ISA_H_
