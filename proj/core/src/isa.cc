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

#include "corefuzz/isa.h"

#include <array>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "isa_tables.h"

namespace corefuzz {

namespace {

constexpr std::array<Gpr, 16> kEncodingToGpr = {
    Gpr::kRax, Gpr::kRcx, Gpr::kRdx, Gpr::kRbx, Gpr::kRsp, Gpr::kRbp,
    Gpr::kRsi, Gpr::kRdi, Gpr::kR8,  Gpr::kR9,  Gpr::kR10, Gpr::kR11,
    Gpr::kR12, Gpr::kR13, Gpr::kR14, Gpr::kR15,
};

constexpr std::string_view kRegNames64[] = {
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
    "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15"};
constexpr std::string_view kRegNames32[] = {
    "eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi",
    "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"};
constexpr std::string_view kRegNames16[] = {
    "ax",  "cx",  "dx",   "bx",   "sp",   "bp",   "si",   "di",
    "r8w", "r9w", "r10w", "r11w", "r12w", "r13w", "r14w", "r15w"};

bool IsLegacyPrefix(uint8_t b) {
  switch (b) {
    case 0x66:
    case 0xF2:
    case 0xF3:
    case 0xF0:
    case 0x2E:
    case 0x36:
    case 0x3E:
    case 0x26:
    case 0x64:
    case 0x65:
    case 0x67:
      return true;
    default:
      return false;
  }
}

bool IsRex(uint8_t b) { return (b & 0xF0) == 0x40; }

// Reads instruction bytes while enforcing the 15-byte architectural limit.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  std::optional<DecodeErrorKind> Next(uint8_t& out) {
    if (pos_ >= kMaxInstrLength) return DecodeErrorKind::kTooLong;
    if (pos_ >= bytes_.size()) return DecodeErrorKind::kTruncated;
    out = bytes_[pos_++];
    return std::nullopt;
  }

  std::optional<DecodeErrorKind> ReadLe(int n, uint64_t& out) {
    out = 0;
    for (int i = 0; i < n; ++i) {
      uint8_t b;
      if (auto err = Next(b)) return err;
      out |= uint64_t{b} << (8 * i);
    }
    return std::nullopt;
  }

  size_t pos() const { return pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

DecodeError MakeError(DecodeErrorKind kind, size_t examined) {
  return DecodeError{kind, examined, 0};
}

int64_t SignExtend(uint64_t v, int bytes) {
  int shift = 64 - 8 * bytes;
  return static_cast<int64_t>(v << shift) >> shift;
}

std::optional<Opcode> LookupOpcode(uint8_t byte, int ext) {
  for (const OpInfo& info : OpInfoTable()) {
    if (info.op == Opcode::kInvalid || info.two_byte) continue;
    switch (info.kind) {
      case OpKind::kRegImm:
      case OpKind::kOpReg:
        if ((byte & 0xF8) == info.byte) return info.op;
        break;
      default:
        if (byte == info.byte && (info.ext < 0 || info.ext == ext)) return info.op;
        break;
    }
  }
  return std::nullopt;
}

bool HasModrm(uint8_t byte) {
  switch (byte) {
    case 0x89: case 0x8B: case 0x01: case 0x03: case 0x29: case 0x2B:
    case 0x31: case 0x33: case 0x21: case 0x23: case 0x09: case 0x0B:
    case 0x39: case 0x3B: case 0x85: case 0x8D: case 0xFF: case 0xC1:
    case 0xF7:
      return true;
    default:
      return false;
  }
}

std::string MemToString(const MemOperand& m) {
  std::string base;
  if (m.base == kBaseRip) {
    base = "rip";
  } else if (m.base != kBaseNone) {
    base = std::string(kRegNames64[m.base]);
  }
  if (base.empty()) return absl::StrFormat("[0x%x]", static_cast<uint32_t>(m.disp));
  if (m.disp == 0 && m.disp_bytes == 0) return absl::StrCat("[", base, "]");
  if (m.disp < 0) {
    return absl::StrFormat("[%s-0x%x]", base, -static_cast<int64_t>(m.disp));
  }
  return absl::StrFormat("[%s+0x%x]", base, m.disp);
}

// Pushes the REX bit required for register `reg` into `bit` of `rex_bits`.
void NeedRex(uint8_t reg, uint8_t bit, uint8_t& rex_bits) {
  if (reg < 16 && reg >= 8) rex_bits |= bit;
}

absl::Status EncodeRm(const Operand& rm, uint8_t reg_field, std::vector<uint8_t>& out) {
  if (const auto* r = std::get_if<RegOperand>(&rm)) {
    out.push_back(static_cast<uint8_t>(0xC0 | (reg_field & 7) << 3 | (r->reg & 7)));
    return absl::OkStatus();
  }
  const auto* m = std::get_if<MemOperand>(&rm);
  if (m == nullptr) return absl::InvalidArgumentError("r/m operand must be a register or memory");
  auto push_disp = [&](int bytes) {
    for (int i = 0; i < bytes; ++i) {
      out.push_back(static_cast<uint8_t>(static_cast<uint32_t>(m->disp) >> (8 * i)));
    }
  };
  if (m->base == kBaseRip || m->base == kBaseNone) {
    if (m->disp_bytes != 4) return absl::InvalidArgumentError("rip/absolute needs disp32");
    if (m->base == kBaseRip) {
      out.push_back(static_cast<uint8_t>((reg_field & 7) << 3 | 5));
    } else {
      out.push_back(static_cast<uint8_t>((reg_field & 7) << 3 | 4));
      out.push_back(0x25);
    }
    push_disp(4);
    return absl::OkStatus();
  }
  if (m->base > 15) return absl::InvalidArgumentError("bad base register");
  uint8_t low = m->base & 7;
  uint8_t mod;
  switch (m->disp_bytes) {
    case 0:
      if (m->disp != 0) return absl::InvalidArgumentError("nonzero disp without disp bytes");
      if (low == 5) return absl::InvalidArgumentError("rbp/r13 base needs a displacement");
      mod = 0;
      break;
    case 1:
      if (m->disp < -128 || m->disp > 127) return absl::InvalidArgumentError("disp8 out of range");
      mod = 1;
      break;
    case 4:
      mod = 2;
      break;
    default:
      return absl::InvalidArgumentError("disp_bytes must be 0, 1 or 4");
  }
  out.push_back(static_cast<uint8_t>(mod << 6 | (reg_field & 7) << 3 | low));
  if (low == 4) out.push_back(0x24);
  push_disp(m->disp_bytes);
  return absl::OkStatus();
}

}  // namespace

Gpr GprFromEncoding(uint8_t reg) { return kEncodingToGpr.at(reg); }

std::string_view EncodedRegName(uint8_t reg) { return kRegNames64[reg & 15]; }

std::string_view OpcodeName(Opcode op) { return Info(op).name; }

std::optional<Opcode> ParseOpcode(std::string_view name) {
  for (const OpInfo& info : OpInfoTable()) {
    if (info.op != Opcode::kInvalid && info.name == name) return info.op;
  }
  return std::nullopt;
}

std::string_view DecodeErrorName(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::kEmptyInput:
      return "EMPTY_INPUT";
    case DecodeErrorKind::kTooLong:
      return "TOO_LONG";
    case DecodeErrorKind::kUnsupported:
      return "UNSUPPORTED";
    case DecodeErrorKind::kTruncated:
      return "TRUNCATED";
  }
  return "?";
}

int Instr::OperandBits() const {
  if (rex_w()) return 64;
  if (prefixes & kPrefixOpsize) return 16;
  return 32;
}

uint8_t CoveragePrefixBits(const Instr& instr) {
  uint8_t bits = instr.prefixes & 7;
  if (instr.rex.has_value()) bits |= 8;
  if (instr.rex_w()) bits |= 16;
  return bits;
}

std::string ToString(const Instr& instr) {
  const OpInfo& info = Info(instr.opcode);
  std::string out;
  if (instr.prefixes & kPrefixRep) out += "REP ";
  if (instr.prefixes & kPrefixRepne) out += "REPNE ";
  out += std::string(info.mnemonic);
  int bits = info.sized ? instr.OperandBits() : 64;
  const auto& names = bits == 64 ? kRegNames64 : bits == 32 ? kRegNames32 : kRegNames16;
  for (size_t i = 0; i < instr.operands.size(); ++i) {
    out += i == 0 ? " " : ", ";
    const Operand& op = instr.operands[i];
    if (const auto* r = std::get_if<RegOperand>(&op)) {
      out += std::string(names[r->reg & 15]);
    } else if (const auto* imm = std::get_if<ImmOperand>(&op)) {
      out += absl::StrFormat("0x%x", imm->value);
    } else {
      out += MemToString(std::get<MemOperand>(op));
    }
  }
  return out;
}

DecodeResult DecodeOne(std::span<const uint8_t> bytes) {
  if (bytes.empty()) return MakeError(DecodeErrorKind::kEmptyInput, 0);
  ByteReader r(bytes);
  Instr instr;
  uint8_t b = 0;

  // Legacy prefixes, then an optional REX immediately before the opcode.
  for (;;) {
    if (auto err = r.Next(b)) return MakeError(*err, r.pos());
    if (b == 0x66) {
      instr.prefixes |= kPrefixOpsize;
    } else if (b == 0xF3) {
      instr.prefixes |= kPrefixRep;
    } else if (b == 0xF2) {
      instr.prefixes |= kPrefixRepne;
    } else if (IsLegacyPrefix(b)) {
      return MakeError(DecodeErrorKind::kUnsupported, r.pos());
    } else {
      break;
    }
  }
  if (IsRex(b)) {
    instr.rex = b;
    if (auto err = r.Next(b)) return MakeError(*err, r.pos());
    if (IsRex(b) || IsLegacyPrefix(b)) return MakeError(DecodeErrorKind::kUnsupported, r.pos());
  }
  const uint8_t rex = instr.rex.value_or(0);
  const uint8_t rex_r = (rex >> 2) & 1;
  const uint8_t rex_x = (rex >> 1) & 1;
  const uint8_t rex_b = rex & 1;

  std::optional<Opcode> op;
  uint8_t modrm = 0;
  bool has_modrm = false;
  if (b == 0x0F) {
    uint8_t b2;
    if (auto err = r.Next(b2)) return MakeError(*err, r.pos());
    if (b2 != 0x0B) return MakeError(DecodeErrorKind::kUnsupported, r.pos());
    op = Opcode::kUd2;
  } else if (HasModrm(b)) {
    if (auto err = r.Next(modrm)) return MakeError(*err, r.pos());
    has_modrm = true;
    op = LookupOpcode(b, (modrm >> 3) & 7);
  } else {
    op = LookupOpcode(b, -1);
  }
  if (!op) return MakeError(DecodeErrorKind::kUnsupported, r.pos());
  instr.opcode = *op;
  const OpInfo& info = Info(*op);

  // r/m operand from ModRM (and SIB/displacement).
  Operand rm_operand;
  if (has_modrm) {
    const uint8_t mod = modrm >> 6;
    const uint8_t rm = modrm & 7;
    if (mod == 3) {
      rm_operand = RegOperand{static_cast<uint8_t>(rm | rex_b << 3)};
    } else {
      MemOperand m;
      if (rm == 4) {
        uint8_t sib;
        if (auto err = r.Next(sib)) return MakeError(*err, r.pos());
        uint8_t index = ((sib >> 3) & 7) | rex_x << 3;
        if (index != 4) return MakeError(DecodeErrorKind::kUnsupported, r.pos());
        uint8_t base = sib & 7;
        if (base == 5 && mod == 0) {
          m.base = kBaseNone;
          m.disp_bytes = 4;
        } else {
          m.base = base | rex_b << 3;
        }
      } else if (rm == 5 && mod == 0) {
        m.base = kBaseRip;
        m.disp_bytes = 4;
      } else {
        m.base = rm | rex_b << 3;
      }
      if (mod == 1) m.disp_bytes = 1;
      if (mod == 2) m.disp_bytes = 4;
      if (m.disp_bytes != 0) {
        uint64_t d;
        if (auto err = r.ReadLe(m.disp_bytes, d)) return MakeError(*err, r.pos());
        m.disp = static_cast<int32_t>(SignExtend(d, m.disp_bytes));
      }
      rm_operand = m;
    }
  }

  const uint8_t modrm_reg = static_cast<uint8_t>(((modrm >> 3) & 7) | rex_r << 3);
  const bool rm_is_mem = std::holds_alternative<MemOperand>(rm_operand);
  switch (info.kind) {
    case OpKind::kNone:
      break;
    case OpKind::kRmReg:
      instr.operands = {rm_operand, RegOperand{modrm_reg}};
      break;
    case OpKind::kRegRm:
      if (info.mem_only && !rm_is_mem) {
        return MakeError(DecodeErrorKind::kUnsupported, r.pos());
      }
      instr.operands = {RegOperand{modrm_reg}, rm_operand};
      break;
    case OpKind::kRm:
      instr.operands = {rm_operand};
      break;
    case OpKind::kRmImm8: {
      uint64_t imm;
      if (auto err = r.ReadLe(1, imm)) return MakeError(*err, r.pos());
      instr.operands = {rm_operand, ImmOperand{imm}};
      break;
    }
    case OpKind::kRegImm: {
      const int bytes = instr.rex_w() ? 8 : (instr.prefixes & kPrefixOpsize) ? 2 : 4;
      uint64_t imm;
      if (auto err = r.ReadLe(bytes, imm)) return MakeError(*err, r.pos());
      instr.operands = {RegOperand{static_cast<uint8_t>((b & 7) | rex_b << 3)}, ImmOperand{imm}};
      break;
    }
    case OpKind::kOpReg:
      instr.operands = {RegOperand{static_cast<uint8_t>((b & 7) | rex_b << 3)}};
      break;
    case OpKind::kRel8:
    case OpKind::kRel32: {
      const int bytes = info.kind == OpKind::kRel8 ? 1 : 4;
      uint64_t d;
      if (auto err = r.ReadLe(bytes, d)) return MakeError(*err, r.pos());
      instr.operands = {ImmOperand{static_cast<uint64_t>(SignExtend(d, bytes))}};
      break;
    }
  }

  // Prefix and REX legality for the decoded opcode.
  if ((instr.prefixes & ~info.allowed_prefixes) != 0 ||
      (instr.prefixes & (kPrefixRep | kPrefixRepne)) == (kPrefixRep | kPrefixRepne) ||
      (info.no_rex_w && instr.rex_w()) || (instr.opcode == Opcode::kNop && rex_b)) {
    return MakeError(DecodeErrorKind::kUnsupported, r.pos());
  }

  instr.length = static_cast<uint8_t>(r.pos());
  instr.raw.assign(bytes.begin(), bytes.begin() + r.pos());
  return instr;
}

DecodedProgram DecodeProgram(std::span<const uint8_t> bytes) {
  DecodedProgram out;
  size_t offset = 0;
  while (offset < bytes.size()) {
    DecodeResult r = DecodeOne(bytes.subspan(offset));
    if (auto* err = std::get_if<DecodeError>(&r)) {
      err->offset = offset;
      out.error = *err;
      return out;
    }
    Instr& instr = std::get<Instr>(r);
    offset += instr.length;
    const bool stop = instr.opcode == Opcode::kInt3;
    out.instrs.push_back(std::move(instr));
    if (stop) break;
  }
  return out;
}

absl::StatusOr<std::vector<uint8_t>> Encode(const Instr& instr) {
  if (instr.opcode == Opcode::kInvalid || instr.opcode >= Opcode::kCount) {
    return absl::InvalidArgumentError("invalid opcode");
  }
  const OpInfo& info = Info(instr.opcode);
  const auto illegal = [&](absl::string_view why) {
    return absl::InvalidArgumentError(
        absl::StrCat("illegal combination for ", std::string(info.name), ": ", why));
  };

  if ((instr.prefixes & ~info.allowed_prefixes) != 0) return illegal("prefix not allowed");
  if ((instr.prefixes & (kPrefixRep | kPrefixRepne)) == (kPrefixRep | kPrefixRepne)) {
    return illegal("both REP and REPNE");
  }
  if (info.no_rex_w && instr.rex_w()) return illegal("REX.W not allowed");

  const auto& ops = instr.operands;
  auto is_reg = [&](size_t i) { return i < ops.size() && std::holds_alternative<RegOperand>(ops[i]); };
  auto is_imm = [&](size_t i) { return i < ops.size() && std::holds_alternative<ImmOperand>(ops[i]); };
  auto is_rm = [&](size_t i) { return i < ops.size() && !std::holds_alternative<ImmOperand>(ops[i]); };
  auto reg_of = [&](size_t i) { return std::get<RegOperand>(ops[i]).reg; };
  auto imm_of = [&](size_t i) { return std::get<ImmOperand>(ops[i]).value; };

  size_t expected = 0;
  switch (info.kind) {
    case OpKind::kNone:
      expected = 0;
      break;
    case OpKind::kRm:
    case OpKind::kOpReg:
    case OpKind::kRel8:
    case OpKind::kRel32:
      expected = 1;
      break;
    default:
      expected = 2;
      break;
  }
  if (ops.size() != expected) {
    return illegal(absl::StrCat("expected ", expected, " operands, got ", ops.size()));
  }
  for (const Operand& op : ops) {
    if (const auto* r = std::get_if<RegOperand>(&op); r && r->reg > 15) return illegal("bad register");
  }

  uint8_t rex_bits = 0;  // R=4, X=2, B=1
  auto rm_rex = [&](const Operand& rm) {
    if (const auto* r = std::get_if<RegOperand>(&rm)) NeedRex(r->reg, 1, rex_bits);
    if (const auto* m = std::get_if<MemOperand>(&rm)) NeedRex(m->base, 1, rex_bits);
  };

  std::vector<uint8_t> body;
  switch (info.kind) {
    case OpKind::kNone:
      if (info.two_byte) {
        body = {0x0F, info.byte};
      } else {
        body = {info.byte};
      }
      break;
    case OpKind::kRmReg:
    case OpKind::kRegRm: {
      const size_t rm_i = info.kind == OpKind::kRmReg ? 0 : 1;
      const size_t reg_i = 1 - rm_i;
      if (!is_reg(reg_i) || !is_rm(rm_i)) return illegal("operand types");
      if (info.mem_only && !std::holds_alternative<MemOperand>(ops[rm_i])) {
        return illegal("memory operand required");
      }
      NeedRex(reg_of(reg_i), 4, rex_bits);
      rm_rex(ops[rm_i]);
      body.push_back(info.byte);
      if (auto st = EncodeRm(ops[rm_i], reg_of(reg_i), body); !st.ok()) return illegal(st.message());
      break;
    }
    case OpKind::kRm:
    case OpKind::kRmImm8: {
      if (!is_rm(0)) return illegal("operand types");
      if (info.kind == OpKind::kRmImm8 && (!is_imm(1) || imm_of(1) > 0xFF)) {
        return illegal("imm8 expected");
      }
      rm_rex(ops[0]);
      body.push_back(info.byte);
      if (auto st = EncodeRm(ops[0], static_cast<uint8_t>(info.ext), body); !st.ok()) {
        return illegal(st.message());
      }
      if (info.kind == OpKind::kRmImm8) body.push_back(static_cast<uint8_t>(imm_of(1)));
      break;
    }
    case OpKind::kRegImm: {
      if (!is_reg(0) || !is_imm(1)) return illegal("operand types");
      const int bytes = instr.rex_w() ? 8 : (instr.prefixes & kPrefixOpsize) ? 2 : 4;
      if (bytes < 8 && (imm_of(1) >> (8 * bytes)) != 0) return illegal("immediate too wide");
      NeedRex(reg_of(0), 1, rex_bits);
      body.push_back(static_cast<uint8_t>(info.byte | (reg_of(0) & 7)));
      for (int i = 0; i < bytes; ++i) body.push_back(static_cast<uint8_t>(imm_of(1) >> (8 * i)));
      break;
    }
    case OpKind::kOpReg:
      if (!is_reg(0)) return illegal("operand types");
      NeedRex(reg_of(0), 1, rex_bits);
      body.push_back(static_cast<uint8_t>(info.byte | (reg_of(0) & 7)));
      break;
    case OpKind::kRel8:
    case OpKind::kRel32: {
      if (!is_imm(0)) return illegal("operand types");
      const int64_t d = static_cast<int64_t>(imm_of(0));
      const bool rel8 = info.kind == OpKind::kRel8;
      if (rel8 ? (d < -128 || d > 127) : (d < INT32_MIN || d > INT32_MAX)) {
        return illegal("displacement out of range");
      }
      body.push_back(info.byte);
      for (int i = 0; i < (rel8 ? 1 : 4); ++i) body.push_back(static_cast<uint8_t>(d >> (8 * i)));
      break;
    }
  }

  // REX must carry exactly the bits the operands need (plus an optional W).
  if (instr.rex.has_value()) {
    if ((*instr.rex & 0x07) != rex_bits) return illegal("REX bits do not match operands");
    if (instr.opcode == Opcode::kNop && (*instr.rex & 1)) return illegal("REX.B on NOP");
  } else if (rex_bits != 0) {
    return illegal("extended register without REX");
  }

  std::vector<uint8_t> out;
  if (instr.prefixes & kPrefixOpsize) out.push_back(0x66);
  if (instr.prefixes & kPrefixRepne) out.push_back(0xF2);
  if (instr.prefixes & kPrefixRep) out.push_back(0xF3);
  if (instr.rex.has_value()) out.push_back(*instr.rex);
  out.insert(out.end(), body.begin(), body.end());
  if (out.size() > kMaxInstrLength) return illegal("longer than 15 bytes");
  return out;
}

absl::StatusOr<Instr> BuildInstr(Opcode op, int bits, std::vector<Operand> operands,
                                 uint8_t prefixes) {
  Instr instr;
  instr.opcode = op;
  instr.prefixes = prefixes;
  instr.operands = std::move(operands);
  const OpInfo& info = Info(op);
  uint8_t rex = 0;
  if (info.sized) {
    if (bits == 64) {
      rex |= 0x08;
    } else if (bits == 16) {
      instr.prefixes |= kPrefixOpsize;
    } else if (bits != 32) {
      return absl::InvalidArgumentError("operand size must be 16, 32 or 64");
    }
  }
  auto need = [&](uint8_t reg, uint8_t bit) {
    if (reg < 16 && reg >= 8) rex |= bit;
  };
  for (size_t i = 0; i < instr.operands.size(); ++i) {
    const Operand& o = instr.operands[i];
    const bool is_modrm_reg = (info.kind == OpKind::kRmReg && i == 1) ||
                              (info.kind == OpKind::kRegRm && i == 0);
    if (const auto* r = std::get_if<RegOperand>(&o)) need(r->reg, is_modrm_reg ? 4 : 1);
    if (const auto* m = std::get_if<MemOperand>(&o)) need(m->base, 1);
  }
  if (rex != 0) instr.rex = static_cast<uint8_t>(0x40 | rex);
  auto bytes = Encode(instr);
  if (!bytes.ok()) return bytes.status();
  instr.raw = *std::move(bytes);
  instr.length = static_cast<uint8_t>(instr.raw.size());
  return instr;
}

}  // namespace corefuzz
