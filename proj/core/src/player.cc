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

#include "corefuzz/player.h"

#include <algorithm>
#include <bit>
#include <chrono>

#include "absl/strings/str_cat.h"
#include "nlohmann/json.hpp"

namespace corefuzz {

namespace {

constexpr std::string_view kVerdictNames[] = {"MATCH", "MISMATCH", "TIMEOUT", "HARNESS_ANOMALY"};
constexpr std::string_view kCategoryNames[] = {"REGISTER",          "FLAGS",         "END_PC",
                                               "MEMORY",            "SIGNAL_UNEXPECTED",
                                               "SIGNAL_MISSING"};

SignalRecord SignalOf(const EndState& e) { return e.signal.value_or(SignalRecord{}); }

const MemoryChecksum* FindChecksum(const EndState& e, uint64_t start) {
  for (const MemoryChecksum& c : e.mem_checksums) {
    if (c.start == start) return &c;
  }
  return nullptr;
}

// The expected state to explain a mismatch against: the one recorded for
// this platform, else the first.
const EndState& Reference(const Snapshot& s, const std::string& platform) {
  for (const EndState& e : s.end_states) {
    if (std::find(e.platforms.begin(), e.platforms.end(), platform) != e.platforms.end()) return e;
  }
  return s.end_states.front();
}

}  // namespace

std::string_view VerdictName(Verdict v) { return kVerdictNames[static_cast<int>(v)]; }

std::optional<Verdict> ParseVerdict(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (kVerdictNames[i] == name) return static_cast<Verdict>(i);
  }
  return std::nullopt;
}

std::string_view MismatchCategoryName(MismatchCategory c) {
  return kCategoryNames[static_cast<int>(c)];
}

EndState ActualEndState(const PlanResult& result) {
  EndState e;
  e.registers = result.raw.registers;
  e.registers.rflags = CanonicalFlags(e.registers.rflags);
  e.mem_checksums = result.checksums;
  e.signal = result.raw.signal;
  return e;
}

std::optional<MismatchDetail> ClassifyMismatch(const EndState& expected, const EndState& actual,
                                               uint64_t flags_mask) {
  MismatchDetail d;
  for (int i = 0; i < kNumGprs; ++i) {
    if (expected.registers.gpr[i] != actual.registers.gpr[i]) {
      d.category = MismatchCategory::kRegister;
      d.reg = std::string(GprName(i));
      d.xor_value = expected.registers.gpr[i] ^ actual.registers.gpr[i];
      return d;
    }
  }
  const uint64_t ef = expected.registers.rflags & flags_mask;
  const uint64_t af = actual.registers.rflags & flags_mask;
  if (ef != af) {
    d.category = MismatchCategory::kFlags;
    d.expected_flags = ef;
    d.actual_flags = af;
    return d;
  }
  const SignalRecord es = SignalOf(expected);
  const SignalRecord as = SignalOf(actual);
  // A different stop kind explains a different rip; report the signal.
  if (es.signal == as.signal && expected.registers.rip != actual.registers.rip) {
    d.category = MismatchCategory::kEndPc;
    d.expected_rip = expected.registers.rip;
    d.actual_rip = actual.registers.rip;
    return d;
  }
  for (const MemoryChecksum& c : expected.mem_checksums) {
    const MemoryChecksum* a = FindChecksum(actual, c.start);
    if (a == nullptr || a->checksum != c.checksum) {
      d.category = MismatchCategory::kMemory;
      d.mapping_start = c.start;
      return d;
    }
  }
  if (es != as) {
    d.category = es.signal != Signal::kTrap && as.signal == Signal::kTrap
                     ? MismatchCategory::kSignalMissing
                     : MismatchCategory::kSignalUnexpected;
    d.expected_signal = es;
    d.actual_signal = as;
    return d;
  }
  return std::nullopt;
}

bool EndStatesMatch(const EndState& expected, const EndState& actual, uint64_t flags_mask) {
  return !ClassifyMismatch(expected, actual, flags_mask).has_value();
}

std::string TriageSignature(const MismatchDetail& d) {
  const std::string category(MismatchCategoryName(d.category));
  switch (d.category) {
    case MismatchCategory::kRegister:
      return absl::StrCat(category, ":", d.reg, ":bits=", std::popcount(d.xor_value));
    case MismatchCategory::kFlags: {
      std::string out = category;
      const uint64_t sticky = d.actual_flags & ~d.expected_flags;
      const uint64_t cleared = d.expected_flags & ~d.actual_flags;
      if (sticky) absl::StrAppend(&out, ":sticky=", FlagsToString(sticky));
      if (cleared) absl::StrAppend(&out, ":cleared=", FlagsToString(cleared));
      return out;
    }
    case MismatchCategory::kEndPc:
      return absl::StrCat(category, d.actual_rip > d.expected_rip ? ":overshoot" : ":undershoot");
    case MismatchCategory::kMemory:
      return absl::StrCat(category, ":", HexU64(d.mapping_start));
    case MismatchCategory::kSignalUnexpected:
      return absl::StrCat(category, ":", std::string(SignalName(d.actual_signal.signal)));
    case MismatchCategory::kSignalMissing:
      return absl::StrCat(category, ":", std::string(SignalName(d.expected_signal.signal)));
  }
  return category;
}

Outcome Play(Backend& backend, const Snapshot& s, const PlayerConfig& config) {
  Outcome out;
  out.core_id = backend.core_id();
  out.snapshot_id = s.id;
  const RunOptions options{config.cpu_time_limit_ms, config.checksum_all};
  const auto start = std::chrono::steady_clock::now();
  absl::StatusOr<PlanResult> r = backend.Run(s, options);
  if (r.status().code() == absl::StatusCode::kUnavailable) {
    backend.Recycle();
    r = backend.Run(s, options);
  }
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!r.ok()) {
    out.verdict = r.status().code() == absl::StatusCode::kDeadlineExceeded
                      ? Verdict::kTimeout
                      : Verdict::kHarnessAnomaly;
    out.error = std::string(r.status().message());
    out.cpu_time_ms = backend.descriptor().kind == BackendKind::kNative
                          ? wall_ms
                          : static_cast<double>(config.cpu_time_limit_ms);
    if (out.verdict == Verdict::kHarnessAnomaly) backend.Recycle();
    return out;
  }
  out.instr_count = r->raw.instr_count;
  out.cpu_time_ms = backend.descriptor().kind == BackendKind::kNative
                        ? wall_ms
                        : static_cast<double>(r->raw.instr_count * kSimulatedNsPerInstr) / 1e6;
  const EndState actual = ActualEndState(*r);
  for (const EndState& expected : s.end_states) {
    if (EndStatesMatch(expected, actual, config.flags_mask)) {
      out.verdict = Verdict::kMatch;
      out.matched_platform =
          expected.platforms.empty() ? backend.platform_id() : expected.platforms.front();
      if (std::find(expected.platforms.begin(), expected.platforms.end(),
                    backend.platform_id()) != expected.platforms.end()) {
        out.matched_platform = backend.platform_id();
      }
      return out;
    }
  }
  out.verdict = Verdict::kMismatch;
  if (s.end_states.empty()) {
    out.error = "snapshot has no expected end state";
    out.mismatch = MismatchDetail{};
    out.mismatch->category = MismatchCategory::kSignalUnexpected;
    out.mismatch->actual_signal = SignalOf(actual);
    return out;
  }
  out.mismatch = ClassifyMismatch(Reference(s, backend.platform_id()), actual, config.flags_mask);
  return out;
}

std::string OutcomeToJson(const Outcome& o) {
  nlohmann::ordered_json j;
  j["snapshot_id"] = o.snapshot_id;
  j["core_id"] = o.core_id;
  j["verdict"] = std::string(VerdictName(o.verdict));
  j["matched_platform"] = o.matched_platform ? nlohmann::ordered_json(*o.matched_platform)
                                             : nlohmann::ordered_json(nullptr);
  if (o.mismatch) {
    const MismatchDetail& d = *o.mismatch;
    nlohmann::ordered_json m;
    m["category"] = std::string(MismatchCategoryName(d.category));
    switch (d.category) {
      case MismatchCategory::kRegister:
        m["register"] = d.reg;
        m["xor"] = HexU64(d.xor_value);
        break;
      case MismatchCategory::kFlags:
        m["expected_flags"] = FlagsToString(d.expected_flags);
        m["actual_flags"] = FlagsToString(d.actual_flags);
        break;
      case MismatchCategory::kEndPc:
        m["expected_rip"] = HexU64(d.expected_rip);
        m["actual_rip"] = HexU64(d.actual_rip);
        break;
      case MismatchCategory::kMemory:
        m["mapping_start"] = HexU64(d.mapping_start);
        break;
      case MismatchCategory::kSignalUnexpected:
      case MismatchCategory::kSignalMissing:
        m["expected_signal"] = std::string(SignalName(d.expected_signal.signal));
        m["expected_fault_address"] = HexU64(d.expected_signal.fault_address);
        m["actual_signal"] = std::string(SignalName(d.actual_signal.signal));
        m["actual_fault_address"] = HexU64(d.actual_signal.fault_address);
        break;
    }
    j["mismatch"] = std::move(m);
    j["signature"] = TriageSignature(d);
  } else {
    j["mismatch"] = nullptr;
    j["signature"] = nullptr;
  }
  j["cpu_time_ms"] = o.cpu_time_ms;
  j["instr_count"] = o.instr_count;
  if (!o.error.empty()) j["error"] = o.error;
  return j.dump();
}

}  // namespace corefuzz
