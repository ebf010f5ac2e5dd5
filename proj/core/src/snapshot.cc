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

#include "corefuzz/snapshot.h"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <set>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "nlohmann/json.hpp"

namespace corefuzz {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumGprs> kGprNames = {
    "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp",
    "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15",
};

struct FlagName {
  uint64_t bit;
  std::string_view name;
};
constexpr FlagName kFlagNames[] = {
    {kFlagCF, "CF"}, {kFlagPF, "PF"}, {kFlagAF, "AF"}, {kFlagZF, "ZF"},
    {kFlagSF, "SF"}, {kFlagTF, "TF"}, {kFlagDF, "DF"}, {kFlagOF, "OF"},
};

constexpr std::string_view kSignalNames[] = {"SEGV", "ILL", "FPE", "TRAP",
                                             "BUS"};
constexpr std::string_view kOriginNames[] = {
    "FUZZ_PROXY_DECODER", "FUZZ_PROXY_INTERP", "RANDOM_GEN", "IMPORTED",
    "HAND_WRITTEN"};

absl::Status Malformed(absl::string_view what) {
  return absl::InvalidArgumentError(
      absl::StrCat("malformed snapshot document: ", what));
}

void SortUnique(std::vector<std::string>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

json RegistersToJson(const RegisterState& r) {
  json j = json::object();
  for (int i = 0; i < kNumGprs; ++i) {
    j[std::string(kGprNames[i])] = HexU64(r.gpr[i]);
  }
  j["rip"] = HexU64(r.rip);
  j["rflags"] = HexU64(r.rflags);
  return j;
}

json EndStateToJson(const EndState& e) {
  json j = json::object();
  json sums = json::array();
  for (const auto& c : e.mem_checksums) {
    sums.push_back({{"start", HexU64(c.start)},
                    {"num_bytes", HexU64(c.num_bytes)},
                    {"checksum", HexU64(c.checksum)}});
  }
  j["mem_checksums"] = std::move(sums);
  j["platforms"] = e.platforms;
  j["registers"] = RegistersToJson(e.registers);
  if (e.signal.has_value()) {
    j["signal"] = {{"signal", std::string(SignalName(e.signal->signal))},
                   {"fault_address", HexU64(e.signal->fault_address)}};
  }
  return j;
}

std::string DumpEndState(const EndState& e) { return EndStateToJson(e).dump(); }

json ToJson(const Snapshot& s) {
  json j = json::object();
  j["id"] = s.id;
  j["registers"] = RegistersToJson(s.registers);
  json maps = json::array();
  for (const auto& m : s.mappings) {
    maps.push_back({{"start", HexU64(m.start)},
                    {"num_bytes", HexU64(m.num_bytes)},
                    {"perms", PermsToString(m.perms)},
                    {"data", HexBytes(m.data)}});
  }
  j["mappings"] = std::move(maps);
  json ends = json::array();
  for (const auto& e : s.end_states) ends.push_back(EndStateToJson(e));
  j["end_states"] = std::move(ends);
  j["metadata"] = {{"origin", std::string(OriginName(s.metadata.origin))},
                   {"parents", s.metadata.parents},
                   {"notes", s.metadata.notes},
                   {"tags", s.metadata.tags}};
  return j;
}

// Strict field access: every key must be present with the expected type and
// no unknown keys may appear.
absl::Status ExpectKeys(const json& j, std::initializer_list<std::string_view> required,
                        std::initializer_list<std::string_view> optional = {}) {
  if (!j.is_object()) return Malformed("expected object");
  for (auto key : required) {
    if (!j.contains(std::string(key))) {
      return Malformed(absl::StrCat("missing key '", std::string(key), "'"));
    }
  }
  for (const auto& [key, _] : j.items()) {
    bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                 std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) return Malformed(absl::StrCat("unknown key '", key, "'"));
  }
  return absl::OkStatus();
}

absl::StatusOr<std::string> GetString(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_string()) return Malformed(absl::StrCat("'", key, "' is not a string"));
  return v.get<std::string>();
}

absl::StatusOr<uint64_t> GetHex(const json& j, const char* key) {
  auto text = GetString(j, key);
  if (!text.ok()) return text.status();
  auto v = ParseHexU64(*text);
  if (!v.ok()) return Malformed(absl::StrCat("'", key, "': ", v.status().message()));
  return *v;
}

absl::StatusOr<std::vector<std::string>> GetStringList(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array()) return Malformed(absl::StrCat("'", key, "' is not an array"));
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) return Malformed(absl::StrCat("'", key, "' element is not a string"));
    out.push_back(e.get<std::string>());
  }
  return out;
}

absl::StatusOr<RegisterState> RegistersFromJson(const json& j) {
  if (!j.is_object() || j.size() != kNumGprs + 2) return Malformed("registers");
  RegisterState r;
  for (int i = 0; i < kNumGprs; ++i) {
    std::string key(kGprNames[i]);
    if (!j.contains(key)) return Malformed(absl::StrCat("missing register ", key));
    auto v = GetHex(j, key.c_str());
    if (!v.ok()) return v.status();
    r.gpr[i] = *v;
  }
  if (!j.contains("rip") || !j.contains("rflags")) return Malformed("registers");
  auto rip = GetHex(j, "rip");
  if (!rip.ok()) return rip.status();
  auto rflags = GetHex(j, "rflags");
  if (!rflags.ok()) return rflags.status();
  r.rip = *rip;
  r.rflags = *rflags;
  return r;
}

absl::StatusOr<EndState> EndStateFromJson(const json& j) {
  if (auto st = ExpectKeys(j, {"mem_checksums", "platforms", "registers"}, {"signal"});
      !st.ok()) {
    return st;
  }
  EndState e;
  auto regs = RegistersFromJson(j.at("registers"));
  if (!regs.ok()) return regs.status();
  e.registers = *regs;
  const json& sums = j.at("mem_checksums");
  if (!sums.is_array()) return Malformed("mem_checksums");
  for (const auto& c : sums) {
    if (auto st = ExpectKeys(c, {"start", "num_bytes", "checksum"}); !st.ok()) return st;
    MemoryChecksum mc;
    auto start = GetHex(c, "start");
    auto n = GetHex(c, "num_bytes");
    auto sum = GetHex(c, "checksum");
    if (!start.ok()) return start.status();
    if (!n.ok()) return n.status();
    if (!sum.ok()) return sum.status();
    mc.start = *start;
    mc.num_bytes = *n;
    mc.checksum = *sum;
    e.mem_checksums.push_back(mc);
  }
  auto platforms = GetStringList(j, "platforms");
  if (!platforms.ok()) return platforms.status();
  e.platforms = *std::move(platforms);
  if (j.contains("signal")) {
    const json& sj = j.at("signal");
    if (auto st = ExpectKeys(sj, {"signal", "fault_address"}); !st.ok()) return st;
    auto name = GetString(sj, "signal");
    if (!name.ok()) return name.status();
    auto sig = ParseSignal(*name);
    if (!sig) return Malformed(absl::StrCat("unknown signal ", *name));
    auto addr = GetHex(sj, "fault_address");
    if (!addr.ok()) return addr.status();
    e.signal = SignalRecord{*sig, *addr};
  }
  return e;
}

absl::StatusOr<Snapshot> FromJson(const json& j) {
  if (auto st = ExpectKeys(j, {"end_states", "id", "mappings", "metadata", "registers"});
      !st.ok()) {
    return st;
  }
  Snapshot s;
  auto id = GetString(j, "id");
  if (!id.ok()) return id.status();
  s.id = *id;
  auto regs = RegistersFromJson(j.at("registers"));
  if (!regs.ok()) return regs.status();
  s.registers = *regs;

  const json& maps = j.at("mappings");
  if (!maps.is_array()) return Malformed("mappings");
  for (const auto& mj : maps) {
    if (auto st = ExpectKeys(mj, {"start", "num_bytes", "perms", "data"}); !st.ok()) {
      return st;
    }
    MemoryMapping m;
    auto start = GetHex(mj, "start");
    auto n = GetHex(mj, "num_bytes");
    auto perms_text = GetString(mj, "perms");
    auto data_text = GetString(mj, "data");
    if (!start.ok()) return start.status();
    if (!n.ok()) return n.status();
    if (!perms_text.ok()) return perms_text.status();
    if (!data_text.ok()) return data_text.status();
    auto perms = ParsePerms(*perms_text);
    if (!perms) return Malformed(absl::StrCat("bad perms ", *perms_text));
    auto data = ParseHexBytes(*data_text);
    if (!data.ok()) return Malformed(data.status().message());
    m.start = *start;
    m.num_bytes = *n;
    m.perms = *perms;
    m.data = *std::move(data);
    s.mappings.push_back(std::move(m));
  }

  const json& ends = j.at("end_states");
  if (!ends.is_array()) return Malformed("end_states");
  for (const auto& ej : ends) {
    auto e = EndStateFromJson(ej);
    if (!e.ok()) return e.status();
    s.end_states.push_back(*std::move(e));
  }

  const json& mj = j.at("metadata");
  if (auto st = ExpectKeys(mj, {"origin", "parents", "notes", "tags"}); !st.ok()) return st;
  auto origin_text = GetString(mj, "origin");
  if (!origin_text.ok()) return origin_text.status();
  auto origin = ParseOrigin(*origin_text);
  if (!origin) return Malformed(absl::StrCat("unknown origin ", *origin_text));
  s.metadata.origin = *origin;
  auto parents = GetStringList(mj, "parents");
  if (!parents.ok()) return parents.status();
  s.metadata.parents = *std::move(parents);
  auto notes = GetString(mj, "notes");
  if (!notes.ok()) return notes.status();
  s.metadata.notes = *notes;
  auto tags = GetStringList(mj, "tags");
  if (!tags.ok()) return tags.status();
  s.metadata.tags = *std::move(tags);
  return s;
}

void ValidateRegisters(const RegisterState& r, const std::string& where, bool check_rip,
                       std::vector<std::string>& out) {
  if ((r.rflags & kFlagsReservedZero) != 0 || (r.rflags & kFlagsAlwaysOne) == 0) {
    out.push_back(absl::StrCat(where, "rflags reserved bits not canonical"));
  }
  if (!check_rip) return;
  if (r.rip < kMinUserAddress) {
    out.push_back(absl::StrCat(where, "rip below 0x1000"));
  } else if (r.rip >= kUserAddressLimit) {
    out.push_back(absl::StrCat(where, "rip above user address limit"));
  }
}

}  // namespace

std::string_view GprName(int index) { return kGprNames.at(index); }

std::string FlagsToString(uint64_t bits) {
  std::vector<std::string> names;
  for (const auto& f : kFlagNames) {
    if (bits & f.bit) names.push_back(std::string(f.name));
  }
  return absl::StrJoin(names, "|");
}

absl::StatusOr<uint64_t> ParseFlags(std::string_view text) {
  uint64_t bits = 0;
  if (text.empty()) return bits;
  for (absl::string_view piece : absl::StrSplit(absl::string_view(text.data(), text.size()), '|')) {
    const std::string_view part(piece.data(), piece.size());
    bool found = false;
    for (const auto& f : kFlagNames) {
      if (f.name == part) {
        bits |= f.bit;
        found = true;
      }
    }
    if (!found) return absl::InvalidArgumentError(absl::StrCat("unknown flag '", std::string(part), "'"));
  }
  return bits;
}

std::string PermsToString(uint8_t perms) {
  std::string s = "---";
  if (perms & kPermR) s[0] = 'r';
  if (perms & kPermW) s[1] = 'w';
  if (perms & kPermX) s[2] = 'x';
  return s;
}

std::optional<uint8_t> ParsePerms(std::string_view text) {
  if (text.size() != 3) return std::nullopt;
  uint8_t p = 0;
  constexpr char kLetters[] = {'r', 'w', 'x'};
  for (int i = 0; i < 3; ++i) {
    if (text[i] == kLetters[i]) {
      p |= 1 << i;
    } else if (text[i] != '-') {
      return std::nullopt;
    }
  }
  return p;
}

std::string_view SignalName(Signal s) { return kSignalNames[static_cast<int>(s)]; }

std::optional<Signal> ParseSignal(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kSignalNames[i] == name) return static_cast<Signal>(i);
  }
  return std::nullopt;
}

std::string_view OriginName(Origin o) { return kOriginNames[static_cast<int>(o)]; }

std::optional<Origin> ParseOrigin(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kOriginNames[i] == name) return static_cast<Origin>(i);
  }
  return std::nullopt;
}

bool EndState::SameOutcome(const EndState& other) const {
  return registers == other.registers && mem_checksums == other.mem_checksums &&
         signal == other.signal;
}

bool SnapshotMetadata::HasTag(std::string_view tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

const MemoryMapping* Snapshot::FindMapping(uint64_t addr) const {
  for (const auto& m : mappings) {
    if (m.Contains(addr)) return &m;
  }
  return nullptr;
}

std::vector<std::string> Validate(const Snapshot& s) {
  std::vector<std::string> out;
  ValidateRegisters(s.registers, "", /*check_rip=*/true, out);

  for (const auto& m : s.mappings) {
    const std::string where = absl::StrCat("mapping ", HexU64(m.start), ": ");
    if (m.start % kPageSize != 0 || m.num_bytes % kPageSize != 0) {
      out.push_back(absl::StrCat(where, "not page aligned"));
    }
    if (m.num_bytes == 0) out.push_back(absl::StrCat(where, "empty"));
    if (m.start < kMinUserAddress || m.start >= kUserAddressLimit ||
        m.num_bytes > kUserAddressLimit - m.start) {
      out.push_back(absl::StrCat(where, "outside user address range"));
    }
    if (m.data.size() != m.num_bytes) {
      out.push_back(absl::StrCat(where, "data size does not match num_bytes"));
    }
    if (m.perms & ~(kPermR | kPermW | kPermX)) {
      out.push_back(absl::StrCat(where, "unknown permission bits"));
    }
  }
  bool overlap = false;
  for (size_t i = 0; i < s.mappings.size() && !overlap; ++i) {
    for (size_t j = i + 1; j < s.mappings.size(); ++j) {
      const auto& a = s.mappings[i];
      const auto& b = s.mappings[j];
      if (a.start < b.end() && b.start < a.end()) {
        overlap = true;
        break;
      }
    }
  }
  if (overlap) out.push_back("overlapping mappings");

  if (s.registers.rip >= kMinUserAddress && s.registers.rip < kUserAddressLimit) {
    const MemoryMapping* m = s.FindMapping(s.registers.rip);
    if (m == nullptr || !(m->perms & kPermX)) {
      out.push_back("rip not in an executable mapping");
    }
  }

  std::set<std::pair<uint64_t, uint64_t>> writable;
  for (const auto& m : s.mappings) {
    if (m.writable()) writable.insert({m.start, m.num_bytes});
  }
  std::set<std::string> seen_platforms;
  for (size_t i = 0; i < s.end_states.size(); ++i) {
    const EndState& e = s.end_states[i];
    const std::string where = absl::StrCat("end state ", i, ": ");
    ValidateRegisters(e.registers, where, /*check_rip=*/false, out);
    std::set<std::pair<uint64_t, uint64_t>> summed;
    for (const auto& c : e.mem_checksums) summed.insert({c.start, c.num_bytes});
    if (summed != writable || summed.size() != e.mem_checksums.size()) {
      out.push_back(absl::StrCat(where, "checksums do not match writable mappings"));
    }
    if (e.signal.has_value() && e.signal->fault_address != 0 &&
        e.signal->signal != Signal::kSegv && e.signal->signal != Signal::kBus) {
      out.push_back(absl::StrCat(where, "fault address on a non-memory signal"));
    }
    if (e.platforms.empty()) out.push_back(absl::StrCat(where, "no platforms"));
    std::set<std::string> unique(e.platforms.begin(), e.platforms.end());
    if (unique.size() != e.platforms.size()) {
      out.push_back(absl::StrCat(where, "duplicate platforms"));
    }
    for (const auto& p : unique) {
      if (!seen_platforms.insert(p).second) {
        out.push_back(absl::StrCat(where, "platform ", p, " has several end states"));
      }
    }
  }
  return out;
}

void Canonicalize(Snapshot& s) {
  std::sort(s.mappings.begin(), s.mappings.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  for (auto& e : s.end_states) {
    std::sort(e.mem_checksums.begin(), e.mem_checksums.end(),
              [](const auto& a, const auto& b) { return a.start < b.start; });
    std::sort(e.platforms.begin(), e.platforms.end());
  }
  std::vector<std::pair<std::string, EndState>> keyed;
  keyed.reserve(s.end_states.size());
  for (auto& e : s.end_states) keyed.emplace_back(DumpEndState(e), std::move(e));
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  s.end_states.clear();
  for (auto& [_, e] : keyed) s.end_states.push_back(std::move(e));
  SortUnique(s.metadata.parents);
  SortUnique(s.metadata.tags);
}

absl::StatusOr<std::string> Serialize(const Snapshot& s) {
  std::vector<std::string> violations = Validate(s);
  if (!violations.empty()) {
    return absl::FailedPreconditionError(
        absl::StrCat("invalid snapshot: ", absl::StrJoin(violations, "; ")));
  }
  Snapshot canonical = s;
  Canonicalize(canonical);
  return ToJson(canonical).dump();
}

absl::StatusOr<Snapshot> Deserialize(std::string_view bytes) {
  json j = json::parse(bytes, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return Malformed("not a JSON document");
  absl::StatusOr<Snapshot> s;
  try {
    s = FromJson(j);
  } catch (const json::exception& e) {
    return Malformed(e.what());
  }
  if (!s.ok()) return s.status();
  std::vector<std::string> violations = Validate(*s);
  if (!violations.empty()) {
    return absl::FailedPreconditionError(
        absl::StrCat("invalid snapshot: ", absl::StrJoin(violations, "; ")));
  }
  Canonicalize(*s);
  auto id = SnapshotId(*s);
  if (!id.ok()) return id.status();
  if (*id != s->id) {
    return absl::DataLossError(
        absl::StrCat("snapshot id mismatch: stored ", s->id, ", computed ", *id));
  }
  return s;
}

absl::StatusOr<std::string> SnapshotId(const Snapshot& s) {
  Snapshot anonymous = s;
  anonymous.id.clear();
  auto bytes = Serialize(anonymous);
  if (!bytes.ok()) return bytes.status();
  return Sha256Hex(std::span(reinterpret_cast<const uint8_t*>(bytes->data()), bytes->size()))
      .substr(0, 20);
}

std::string Sha256Hex(std::span<const uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    abort();  // Only fails on allocation failure.
  }
  return HexBytes(std::vector<uint8_t>(digest, digest + len));
}

absl::Status AssignId(Snapshot& s) {
  auto id = SnapshotId(s);
  if (!id.ok()) return id.status();
  s.id = *std::move(id);
  return absl::OkStatus();
}

absl::StatusOr<Snapshot> MergeEndState(const Snapshot& s, const EndState& e) {
  Snapshot out = s;
  EndState* same = nullptr;
  for (auto& existing : out.end_states) {
    if (existing.SameOutcome(e)) same = &existing;
  }
  for (const auto& existing : out.end_states) {
    if (&existing == same) continue;
    for (const auto& p : e.platforms) {
      if (std::find(existing.platforms.begin(), existing.platforms.end(), p) !=
          existing.platforms.end()) {
        return absl::AlreadyExistsError(absl::StrCat(
            "platform ", p, " already has a different end state"));
      }
    }
  }
  if (same != nullptr) {
    same->platforms.insert(same->platforms.end(), e.platforms.begin(), e.platforms.end());
    SortUnique(same->platforms);
  } else {
    EndState added = e;
    SortUnique(added.platforms);
    out.end_states.push_back(std::move(added));
  }
  Canonicalize(out);
  if (Validate(out).empty()) {
    if (auto st = AssignId(out); !st.ok()) return st;
  }
  return out;
}

Snapshot MakeNopSnapshot(std::string_view platform) {
  Snapshot s;
  MemoryMapping code;
  code.start = kCodeAddress;
  code.num_bytes = kPageSize;
  code.perms = kPermR | kPermX;
  code.data.assign(kPageSize, 0);
  code.data[0] = 0x90;
  code.data[1] = 0xCC;
  s.mappings.push_back(std::move(code));
  s.registers.rip = kCodeAddress;
  if (!platform.empty()) {
    EndState e;
    e.registers = s.registers;
    e.registers.rip = kCodeAddress + 1;
    e.signal = SignalRecord{Signal::kTrap, 0};
    e.platforms.push_back(std::string(platform));
    s.end_states.push_back(std::move(e));
  }
  AssignId(s).IgnoreError();
  return s;
}

std::string HexU64(uint64_t v) {
  char buf[19] = "0x";
  auto [end, ec] = std::to_chars(buf + 2, buf + sizeof(buf), v, 16);
  return std::string(buf, end);
}

absl::StatusOr<uint64_t> ParseHexU64(std::string_view text) {
  if (text.size() < 3 || text.substr(0, 2) != "0x") {
    return absl::InvalidArgumentError(absl::StrCat("expected 0x-prefixed hex: ", std::string(text)));
  }
  std::string_view digits = text.substr(2);
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, 16);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || HexU64(v) != text) {
    return absl::InvalidArgumentError(absl::StrCat("non-canonical hex number: ", std::string(text)));
  }
  return v;
}

std::string HexBytes(const std::vector<uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

absl::StatusOr<std::vector<uint8_t>> ParseHexBytes(std::string_view text) {
  if (text.size() % 2 != 0) return absl::InvalidArgumentError("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::vector<uint8_t> out(text.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(text[2 * i]);
    int lo = nibble(text[2 * i + 1]);
    if (hi < 0 || lo < 0) return absl::InvalidArgumentError("bad hex digit");
    out[i] = static_cast<uint8_t>(hi << 4 | lo);
  }
  return out;
}

}  // namespace corefuzz
