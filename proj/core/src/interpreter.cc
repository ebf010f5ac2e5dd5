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

#include "corefuzz/interpreter.h"

#include <algorithm>
#include <bitset>
#include <memory>

namespace corefuzz {

namespace {

constexpr uint64_t kStatusFlags = kFlagCF | kFlagPF | kFlagAF | kFlagZF | kFlagSF | kFlagOF;

uint64_t Mask(int bits) { return bits >= 64 ? ~uint64_t{0} : (uint64_t{1} << bits) - 1; }
uint64_t Msb(uint64_t v, int bits) { return (v >> (bits - 1)) & 1; }
int64_t SignExtend(uint64_t v, int bits) {
  const int shift = 64 - bits;
  return static_cast<int64_t>(v << shift) >> shift;
}

uint64_t ZfSf(uint64_t result, int bits) {
  uint64_t f = 0;
  if ((result & Mask(bits)) == 0) f |= kFlagZF;
  if (Msb(result, bits)) f |= kFlagSF;
  return f;
}

// Feature ids are tiny (class byte plus at most 16 bits), so membership is a
// flat bitmap and insertion order is recorded for a cheap final sort.
class CoverageCollector {
 public:
  void Add(uint32_t feature) {
    const uint32_t index = ((feature >> 24) & 7) << 16 | (feature & 0xffff);
    if (bits_[index]) return;
    bits_[index] = true;
    seen_.push_back(feature);
  }

  CoverageSet Take() {
    std::sort(seen_.begin(), seen_.end());
    return std::move(seen_);
  }

 private:
  std::bitset<8 << 16> bits_;
  std::vector<uint32_t> seen_;
};

class Machine {
 public:
  Machine(AddressSpace& mem, const RegisterState& init, ExecHooks* hooks,
          CoverageCollector* coverage)
      : mem_(mem), regs_(init), hooks_(hooks), coverage_(coverage) {}

  ExecResult Run(uint64_t budget);

 private:
  enum class Step { kContinue, kStop, kTimeout };

  uint64_t& Reg(uint8_t enc) { return regs_.gpr[static_cast<int>(GprFromEncoding(enc))]; }

  void WriteReg(uint8_t enc, int bits, uint64_t v) {
    uint64_t& r = Reg(enc);
    if (bits == 16) {
      r = (r & ~uint64_t{0xffff}) | (v & 0xffff);
    } else {
      r = v & Mask(bits);  // 32-bit writes zero-extend
    }
  }

  uint64_t EffectiveAddress(const MemOperand& m, uint64_t next) {
    const uint64_t disp = static_cast<uint64_t>(static_cast<int64_t>(m.disp));
    if (m.base == kBaseRip) return next + disp;
    if (m.base == kBaseNone) return disp;
    return Reg(m.base) + disp;
  }

  std::optional<SignalRecord> ReadOperand(const Operand& op, int bits, uint64_t next,
                                          uint64_t& out) {
    if (const auto* r = std::get_if<RegOperand>(&op)) {
      out = Reg(r->reg) & Mask(bits);
    } else if (const auto* imm = std::get_if<ImmOperand>(&op)) {
      out = imm->value & Mask(bits);
    } else {
      const uint64_t addr = EffectiveAddress(std::get<MemOperand>(op), next);
      if (auto sig = mem_.Check(addr, bits / 8, Access::kRead)) return sig;
      out = mem_.Load(addr, bits / 8);
    }
    return std::nullopt;
  }

  // Checks then performs the write, so a fault leaves no partial update.
  std::optional<SignalRecord> WriteOperand(const Operand& op, int bits, uint64_t next,
                                           uint64_t v) {
    if (const auto* r = std::get_if<RegOperand>(&op)) {
      WriteReg(r->reg, bits, v);
      return std::nullopt;
    }
    const uint64_t addr = EffectiveAddress(std::get<MemOperand>(op), next);
    if (auto sig = mem_.Check(addr, bits / 8, Access::kWrite)) return sig;
    mem_.Store(addr, bits / 8, v);
    return std::nullopt;
  }

  uint64_t Adjust(const Instr& in, uint64_t result, uint64_t src) {
    return hooks_ ? hooks_->AdjustResult(in, result, src) : result;
  }

  bool Skip(const Instr& in, SideEffect e) { return hooks_ && hooks_->SkipSideEffect(in, e); }

  // Writes the `affected` status flags; PF and AF are always cleared.
  void WriteFlags(const Instr& in, uint64_t values, uint64_t affected) {
    if (Skip(in, SideEffect::kFlags)) return;
    const uint64_t cleared = affected | kFlagPF | kFlagAF;
    regs_.rflags = (regs_.rflags & ~cleared) | (values & affected);
    if (hooks_) regs_.rflags = CanonicalFlags(hooks_->AdjustFlags(in, regs_.rflags));
  }

  bool Condition(int cc) const {
    const uint64_t f = regs_.rflags;
    const bool cf = f & kFlagCF, zf = f & kFlagZF, sf = f & kFlagSF, of = f & kFlagOF,
               pf = f & kFlagPF;
    bool r = false;
    switch (cc >> 1) {
      case 0: r = of; break;
      case 1: r = cf; break;
      case 2: r = zf; break;
      case 3: r = cf || zf; break;
      case 4: r = sf; break;
      case 5: r = pf; break;
      case 6: r = sf != of; break;
      case 7: r = zf || sf != of; break;
    }
    return (cc & 1) ? !r : r;
  }

  Step Fault(SignalRecord sig) {
    signal_ = sig;
    return Step::kStop;
  }

  Step Branch(uint64_t next, uint64_t disp) {
    const uint64_t target = next + disp;
    // A non-canonical target faults on the branch itself.
    if (!IsCanonical(target)) return Fault({Signal::kSegv, 0});
    regs_.rip = target;
    ++count_;
    return Step::kContinue;
  }

  Step Retire(uint64_t next) {
    regs_.rip = next;
    ++count_;
    return Step::kContinue;
  }

  Step Exec(const Instr& in, uint64_t budget);
  Step ExecAlu(const Instr& in, uint64_t next);
  Step ExecShift(const Instr& in, uint64_t next);
  Step ExecMulDiv(const Instr& in, uint64_t next);
  Step ExecString(const Instr& in, uint64_t next, uint64_t budget);

  AddressSpace& mem_;
  RegisterState regs_;
  ExecHooks* hooks_;
  CoverageCollector* coverage_;
  SignalRecord signal_;
  uint64_t count_ = 0;
};

Machine::Step Machine::ExecAlu(const Instr& in, uint64_t next) {
  const int bits = in.OperandBits();
  const Operand& dst = in.operands[0];
  const Operand& src = in.operands[1];
  uint64_t a, b;
  if (auto sig = ReadOperand(dst, bits, next, a)) return Fault(*sig);
  if (auto sig = ReadOperand(src, bits, next, b)) return Fault(*sig);
  const uint64_t m = Mask(bits);
  uint64_t res = 0, flags = 0;
  bool write = true;
  switch (in.opcode) {
    case Opcode::kAddRmReg:
    case Opcode::kAddRegRm:
      res = (a + b) & m;
      if (res < a) flags |= kFlagCF;
      if (Msb((a ^ res) & (b ^ res), bits)) flags |= kFlagOF;
      break;
    case Opcode::kCmpRmReg:
    case Opcode::kCmpRegRm:
      write = false;
      [[fallthrough]];
    case Opcode::kSubRmReg:
    case Opcode::kSubRegRm:
      res = (a - b) & m;
      if (a < b) flags |= kFlagCF;
      if (Msb((a ^ b) & (a ^ res), bits)) flags |= kFlagOF;
      break;
    case Opcode::kXorRmReg:
    case Opcode::kXorRegRm:
      res = a ^ b;
      break;
    case Opcode::kTest:
      write = false;
      [[fallthrough]];
    case Opcode::kAndRmReg:
    case Opcode::kAndRegRm:
      res = a & b;
      break;
    case Opcode::kOrRmReg:
    case Opcode::kOrRegRm:
      res = a | b;
      break;
    default:
      break;
  }
  flags |= ZfSf(res, bits);
  if (write) {
    if (auto sig = WriteOperand(dst, bits, next, Adjust(in, res, b) & m)) return Fault(*sig);
  }
  WriteFlags(in, flags, kFlagCF | kFlagZF | kFlagSF | kFlagOF);
  return Retire(next);
}

Machine::Step Machine::ExecShift(const Instr& in, uint64_t next) {
  const int bits = in.OperandBits();
  const Operand& dst = in.operands[0];
  const uint64_t count = std::get<ImmOperand>(in.operands[1]).value & (bits == 64 ? 63 : 31);
  uint64_t a;
  if (auto sig = ReadOperand(dst, bits, next, a)) return Fault(*sig);
  if (count == 0) {
    // No flag update; a register destination is still written (and so
    // zero-extended for 32-bit operands).
    if (std::holds_alternative<RegOperand>(dst)) WriteOperand(dst, bits, next, a);
    return Retire(next);
  }
  const uint64_t m = Mask(bits);
  uint64_t res = 0, flags = 0;
  bool cf = false, of = false;
  const uint64_t n = count;
  switch (in.opcode) {
    case Opcode::kShl:
      res = n >= static_cast<uint64_t>(bits) ? 0 : (a << n) & m;
      cf = n <= static_cast<uint64_t>(bits) && ((a >> (bits - n)) & 1);
      of = Msb(res, bits) != static_cast<uint64_t>(cf);
      break;
    case Opcode::kShr:
      res = n >= static_cast<uint64_t>(bits) ? 0 : a >> n;
      cf = n <= static_cast<uint64_t>(bits) && ((a >> (n - 1)) & 1);
      of = Msb(a, bits);
      break;
    case Opcode::kSar: {
      const int64_t sa = SignExtend(a, bits);
      const uint64_t k = std::min<uint64_t>(n, bits - 1);
      res = static_cast<uint64_t>(sa >> k) & m;
      cf = (sa >> std::min<uint64_t>(n - 1, bits - 1)) & 1;
      of = false;
      break;
    }
    default:
      break;
  }
  if (cf) flags |= kFlagCF;
  if (of) flags |= kFlagOF;
  flags |= ZfSf(res, bits);
  if (auto sig = WriteOperand(dst, bits, next, Adjust(in, res, a) & m)) return Fault(*sig);
  WriteFlags(in, flags, kFlagCF | kFlagZF | kFlagSF | kFlagOF);
  return Retire(next);
}

Machine::Step Machine::ExecMulDiv(const Instr& in, uint64_t next) {
  const int bits = in.OperandBits();
  const uint64_t m = Mask(bits);
  uint64_t src;
  if (auto sig = ReadOperand(in.operands[0], bits, next, src)) return Fault(*sig);
  const uint64_t a = Reg(0) & m;  // rax
  const uint64_t d = Reg(2) & m;  // rdx
  uint64_t lo = 0, hi = 0;
  switch (in.opcode) {
    case Opcode::kMul: {
      const unsigned __int128 p = static_cast<unsigned __int128>(a) * src;
      lo = static_cast<uint64_t>(p) & m;
      hi = static_cast<uint64_t>(bits == 64 ? p >> 64 : p >> bits) & m;
      const uint64_t f = hi != 0 ? (kFlagCF | kFlagOF) : 0;
      WriteReg(0, bits, Adjust(in, lo, src));
      WriteReg(2, bits, hi);
      WriteFlags(in, f, kFlagCF | kFlagOF);
      break;
    }
    case Opcode::kImul: {
      const __int128 p = static_cast<__int128>(SignExtend(a, bits)) * SignExtend(src, bits);
      lo = static_cast<uint64_t>(p) & m;
      hi = static_cast<uint64_t>(bits == 64 ? p >> 64 : p >> bits) & m;
      const bool fits = p == static_cast<__int128>(SignExtend(lo, bits));
      WriteReg(0, bits, Adjust(in, lo, src));
      WriteReg(2, bits, hi);
      WriteFlags(in, fits ? 0 : (kFlagCF | kFlagOF), kFlagCF | kFlagOF);
      break;
    }
    case Opcode::kDiv: {
      if (src == 0) return Fault({Signal::kFpe, 0});
      const unsigned __int128 dividend =
          bits == 64 ? (static_cast<unsigned __int128>(d) << 64) | a
                     : (static_cast<unsigned __int128>(d) << bits) | a;
      const unsigned __int128 q = dividend / src;
      if (q > m) return Fault({Signal::kFpe, 0});
      const uint64_t r = static_cast<uint64_t>(dividend % src);
      WriteReg(0, bits, Adjust(in, static_cast<uint64_t>(q), src));
      WriteReg(2, bits, r);
      break;
    }
    default:
      break;
  }
  return Retire(next);
}

Machine::Step Machine::ExecString(const Instr& in, uint64_t next, uint64_t budget) {
  const bool movs = in.opcode == Opcode::kMovsb;
  const uint64_t step = (regs_.rflags & kFlagDF) ? ~uint64_t{0} : 1;
  uint64_t& rsi = regs_[Gpr::kRsi];
  uint64_t& rdi = regs_[Gpr::kRdi];
  uint64_t& rcx = regs_[Gpr::kRcx];
  auto once = [&]() -> std::optional<SignalRecord> {
    uint8_t v = static_cast<uint8_t>(regs_[Gpr::kRax]);
    if (movs) {
      if (auto sig = mem_.Check(rsi, 1, Access::kRead)) return sig;
      v = mem_.LoadByte(rsi);
    }
    if (auto sig = mem_.Check(rdi, 1, Access::kWrite)) return sig;
    mem_.StoreByte(rdi, v);
    if (!Skip(in, SideEffect::kStringPointers)) {
      if (movs) rsi += step;
      rdi += step;
    }
    return std::nullopt;
  };

  if ((in.prefixes & (kPrefixRep | kPrefixRepne)) == 0) {
    if (auto sig = once()) return Fault(*sig);
    return Retire(next);
  }
  // F2 on a non-comparing string op behaves like F3.
  if (rcx == 0) return Retire(next);
  const uint64_t iterations = hooks_ ? hooks_->RepIterations(in, rcx) : rcx;
  for (uint64_t i = 0; i < iterations; ++i) {
    if (count_ >= budget) return Step::kTimeout;
    // A fault mid-way leaves rip on the instruction with partial progress.
    if (auto sig = once()) return Fault(*sig);
    --rcx;
    ++count_;
  }
  rcx = 0;
  regs_.rip = next;
  return Step::kContinue;
}

Machine::Step Machine::Exec(const Instr& in, uint64_t budget) {
  const uint64_t next = regs_.rip + in.length;
  const int bits = in.OperandBits();
  switch (in.opcode) {
    case Opcode::kNop:
      return Retire(next);
    case Opcode::kInt3:
      ++count_;
      return Fault({Signal::kTrap, 0});
    case Opcode::kHlt:
      // Privileged: #GP in user mode.
      return Fault({Signal::kSegv, 0});
    case Opcode::kUd2:
      if (hooks_) {
        if (auto skip = hooks_->OnIllegal(in)) return Retire(regs_.rip + *skip);
      }
      return Fault({Signal::kIll, 0});
    case Opcode::kMovRegImm: {
      const uint64_t v = std::get<ImmOperand>(in.operands[1]).value;
      WriteReg(std::get<RegOperand>(in.operands[0]).reg, bits, Adjust(in, v, v));
      return Retire(next);
    }
    case Opcode::kMovRmReg:
    case Opcode::kMovRegRm: {
      uint64_t v;
      if (auto sig = ReadOperand(in.operands[1], bits, next, v)) return Fault(*sig);
      if (auto sig = WriteOperand(in.operands[0], bits, next, Adjust(in, v, v) & Mask(bits))) {
        return Fault(*sig);
      }
      return Retire(next);
    }
    case Opcode::kAddRmReg:
    case Opcode::kAddRegRm:
    case Opcode::kSubRmReg:
    case Opcode::kSubRegRm:
    case Opcode::kXorRmReg:
    case Opcode::kXorRegRm:
    case Opcode::kAndRmReg:
    case Opcode::kAndRegRm:
    case Opcode::kOrRmReg:
    case Opcode::kOrRegRm:
    case Opcode::kCmpRmReg:
    case Opcode::kCmpRegRm:
    case Opcode::kTest:
      return ExecAlu(in, next);
    case Opcode::kLea: {
      const uint64_t ea = EffectiveAddress(std::get<MemOperand>(in.operands[1]), next);
      WriteReg(std::get<RegOperand>(in.operands[0]).reg, bits, Adjust(in, ea, ea));
      return Retire(next);
    }
    case Opcode::kInc:
    case Opcode::kDec: {
      uint64_t a;
      if (auto sig = ReadOperand(in.operands[0], bits, next, a)) return Fault(*sig);
      const bool inc = in.opcode == Opcode::kInc;
      const uint64_t res = (inc ? a + 1 : a - 1) & Mask(bits);
      uint64_t flags = ZfSf(res, bits);
      if (inc ? a == Mask(bits - 1) : a == (uint64_t{1} << (bits - 1))) flags |= kFlagOF;
      if (auto sig = WriteOperand(in.operands[0], bits, next, Adjust(in, res, a) & Mask(bits))) {
        return Fault(*sig);
      }
      WriteFlags(in, flags, kFlagZF | kFlagSF | kFlagOF);
      return Retire(next);
    }
    case Opcode::kShl:
    case Opcode::kShr:
    case Opcode::kSar:
      return ExecShift(in, next);
    case Opcode::kMul:
    case Opcode::kImul:
    case Opcode::kDiv:
      return ExecMulDiv(in, next);
    case Opcode::kPush: {
      const uint64_t v = Reg(std::get<RegOperand>(in.operands[0]).reg);
      const uint64_t addr = regs_[Gpr::kRsp] - 8;
      if (auto sig = mem_.Check(addr, 8, Access::kWrite)) return Fault(*sig);
      mem_.Store(addr, 8, Adjust(in, v, v));
      if (!Skip(in, SideEffect::kStackPointer)) regs_[Gpr::kRsp] = addr;
      return Retire(next);
    }
    case Opcode::kPop: {
      const uint64_t addr = regs_[Gpr::kRsp];
      if (auto sig = mem_.Check(addr, 8, Access::kRead)) return Fault(*sig);
      const uint64_t v = mem_.Load(addr, 8);
      if (!Skip(in, SideEffect::kStackPointer)) regs_[Gpr::kRsp] = addr + 8;
      Reg(std::get<RegOperand>(in.operands[0]).reg) = Adjust(in, v, v);
      return Retire(next);
    }
    case Opcode::kJmpRel8:
    case Opcode::kJmpRel32:
      return Branch(next, std::get<ImmOperand>(in.operands[0]).value);
    case Opcode::kMovsb:
    case Opcode::kStosb:
      return ExecString(in, next, budget);
    default:
      break;
  }
  if (IsJcc(in.opcode)) {
    const bool taken = Condition(ConditionCode(in.opcode));
    if (coverage_) {
      coverage_->Add(kFeatureBranch | static_cast<uint32_t>(in.opcode) * 2 | (taken ? 1 : 0));
    }
    if (taken) return Branch(next, std::get<ImmOperand>(in.operands[0]).value);
    return Retire(next);
  }
  return Fault({Signal::kIll, 0});
}

ExecResult Machine::Run(uint64_t budget) {
  ExecResult result;
  uint32_t prev = 0;
  for (;;) {
    if (count_ >= budget) {
      result.timed_out = true;
      break;
    }
    uint8_t buf[kMaxInstrLength];
    const size_t n = mem_.FetchBytes(regs_.rip, buf, kMaxInstrLength);
    if (n == 0) {
      signal_ = {Signal::kSegv, IsCanonical(regs_.rip) ? regs_.rip : 0};
      break;
    }
    DecodeResult decoded = DecodeOne(std::span<const uint8_t>(buf, n));
    if (const auto* err = std::get_if<DecodeError>(&decoded)) {
      if (coverage_) coverage_->Add(kFeatureDecodeError | static_cast<uint32_t>(err->kind));
      if (err->kind == DecodeErrorKind::kTruncated) {
        // The decoder needed a byte that cannot be fetched.
        const uint64_t addr = regs_.rip + n;
        signal_ = {Signal::kSegv, IsCanonical(addr) ? addr : 0};
      } else if (err->kind == DecodeErrorKind::kTooLong) {
        signal_ = {Signal::kSegv, 0};
      } else {
        signal_ = {Signal::kIll, 0};
      }
      break;
    }
    const Instr& in = std::get<Instr>(decoded);
    const uint32_t op = static_cast<uint32_t>(in.opcode);
    if (coverage_) {
      coverage_->Add(InstrFeature(in));
      coverage_->Add(kFeatureEdge | (prev * 256 + op));
    }
    prev = op;
    if (hooks_) hooks_->BeginInstruction(in);
    const Step step = Exec(in, budget);
    if (hooks_) hooks_->EndInstruction(in);
    if (step == Step::kTimeout) {
      result.timed_out = true;
      break;
    }
    if (step == Step::kStop) break;
  }
  regs_.rflags = CanonicalFlags(regs_.rflags);
  result.registers = regs_;
  result.signal = signal_;
  result.instr_count = count_;
  return result;
}

}  // namespace

void NormalizeCoverage(CoverageSet& c) {
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
}

std::string_view SideEffectName(SideEffect e) {
  switch (e) {
    case SideEffect::kFlags:
      return "FLAGS";
    case SideEffect::kStackPointer:
      return "STACK_POINTER";
    case SideEffect::kStringPointers:
      return "STRING_POINTERS";
  }
  return "?";
}

std::optional<SideEffect> ParseSideEffect(std::string_view name) {
  for (SideEffect e : {SideEffect::kFlags, SideEffect::kStackPointer,
                       SideEffect::kStringPointers}) {
    if (SideEffectName(e) == name) return e;
  }
  return std::nullopt;
}

uint64_t ExecLimits::InstrBudget() const {
  const uint64_t by_time = cpu_time_limit_ms * (1000000 / kSimulatedNsPerInstr);
  return std::min(max_instrs, by_time);
}

ExecResult Execute(AddressSpace& mem, const RegisterState& init, uint64_t instr_budget,
                   ExecHooks* hooks, CoverageSet* coverage) {
  std::unique_ptr<CoverageCollector> collector;
  if (coverage) collector = std::make_unique<CoverageCollector>();
  Machine machine(mem, init, hooks, collector.get());
  ExecResult r = machine.Run(instr_budget);
  if (coverage) {
    CoverageSet c = collector->Take();
    coverage->insert(coverage->end(), c.begin(), c.end());
    NormalizeCoverage(*coverage);
  }
  return r;
}

std::vector<MemoryImage> WritableImages(const AddressSpace& mem) {
  std::vector<MemoryImage> out;
  for (const auto& r : mem.regions()) {
    if (r.perms & kPermW) out.push_back(MemoryImage{r.start, r.bytes});
  }
  return out;
}

InterpResult InterpRun(const Snapshot& snapshot, const ExecLimits& limits,
                       bool collect_coverage, ExecHooks* hooks) {
  InterpResult result;
  AddressSpace mem = AddressSpace::FromSnapshot(snapshot);
  ExecResult r = Execute(mem, snapshot.registers, limits.InstrBudget(), hooks,
                         collect_coverage ? &result.coverage : nullptr);
  result.instr_count = r.instr_count;
  if (r.timed_out) {
    result.end_state = absl::DeadlineExceededError("TIMEOUT");
    return result;
  }
  result.end_state = RawEndState{r.registers, WritableImages(mem), r.signal, r.instr_count};
  return result;
}

}  // namespace corefuzz
