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

#ifndef COREFUZZ_SNAPSHOT_H_
#define COREFUZZ_SNAPSHOT_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"

namespace corefuzz {

inline constexpr uint64_t kPageSize = 4096;
inline constexpr uint64_t kMinUserAddress = 0x1000;
inline constexpr uint64_t kUserAddressLimit = uint64_t{1} << 47;

// Where the maker places code and where the reference NOP snapshot lives.
inline constexpr uint64_t kCodeAddress = 0x10000000;

// Index into RegisterState::gpr. The order is the serialization order and
// the layout of the harness register block.
enum class Gpr : uint8_t {
  kRax, kRbx, kRcx, kRdx, kRsi, kRdi, kRbp, kRsp,
  kR8, kR9, kR10, kR11, kR12, kR13, kR14, kR15,
};
inline constexpr int kNumGprs = 16;

std::string_view GprName(int index);

// rflags bits.
inline constexpr uint64_t kFlagCF = 1 << 0;
inline constexpr uint64_t kFlagPF = 1 << 2;
inline constexpr uint64_t kFlagAF = 1 << 4;
inline constexpr uint64_t kFlagZF = 1 << 6;
inline constexpr uint64_t kFlagSF = 1 << 7;
inline constexpr uint64_t kFlagTF = 1 << 8;
inline constexpr uint64_t kFlagDF = 1 << 10;
inline constexpr uint64_t kFlagOF = 1 << 11;
inline constexpr uint64_t kFlagsAlwaysOne = 1 << 1;
// Bits 3, 5 and 22..63 are reserved and always read as zero.
inline constexpr uint64_t kFlagsReservedZero =
    (uint64_t{1} << 3) | (uint64_t{1} << 5) | ~((uint64_t{1} << 22) - 1);
inline constexpr uint64_t kDefaultFlagsMask =
    kFlagCF | kFlagZF | kFlagSF | kFlagOF;

inline constexpr uint64_t CanonicalFlags(uint64_t rflags) {
  return (rflags & ~kFlagsReservedZero) | kFlagsAlwaysOne;
}

// Formats flag bits as "CF|ZF"; parses the same syntax.
std::string FlagsToString(uint64_t bits);
absl::StatusOr<uint64_t> ParseFlags(std::string_view text);

struct RegisterState {
  std::array<uint64_t, kNumGprs> gpr{};
  uint64_t rip = 0;
  uint64_t rflags = kFlagsAlwaysOne;

  uint64_t& operator[](Gpr r) { return gpr[static_cast<int>(r)]; }
  uint64_t operator[](Gpr r) const { return gpr[static_cast<int>(r)]; }

  bool operator==(const RegisterState&) const = default;
};

enum Perm : uint8_t { kPermR = 1, kPermW = 2, kPermX = 4 };

// "r-x" style rendering, and its inverse.
std::string PermsToString(uint8_t perms);
std::optional<uint8_t> ParsePerms(std::string_view text);

struct MemoryMapping {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  uint8_t perms = 0;
  std::vector<uint8_t> data;

  uint64_t end() const { return start + num_bytes; }
  bool writable() const { return perms & kPermW; }
  bool Contains(uint64_t addr) const { return addr >= start && addr < end(); }

  bool operator==(const MemoryMapping&) const = default;
};

enum class Signal : uint8_t { kSegv, kIll, kFpe, kTrap, kBus };

std::string_view SignalName(Signal s);
std::optional<Signal> ParseSignal(std::string_view name);

struct SignalRecord {
  Signal signal = Signal::kTrap;
  uint64_t fault_address = 0;

  bool operator==(const SignalRecord&) const = default;
};

struct MemoryChecksum {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  uint64_t checksum = 0;

  bool operator==(const MemoryChecksum&) const = default;
};

struct EndState {
  RegisterState registers;
  std::vector<MemoryChecksum> mem_checksums;
  std::optional<SignalRecord> signal;
  std::vector<std::string> platforms;

  // Equality of everything except `platforms`.
  bool SameOutcome(const EndState& other) const;

  bool operator==(const EndState&) const = default;
};

enum class Origin : uint8_t {
  kFuzzProxyDecoder,
  kFuzzProxyInterp,
  kRandomGen,
  kImported,
  kHandWritten,
};

std::string_view OriginName(Origin o);
std::optional<Origin> ParseOrigin(std::string_view name);

inline constexpr std::string_view kQuarantineTag = "quarantined";

struct SnapshotMetadata {
  Origin origin = Origin::kHandWritten;
  std::vector<std::string> parents;
  std::string notes;
  std::vector<std::string> tags;

  bool HasTag(std::string_view tag) const;

  bool operator==(const SnapshotMetadata&) const = default;
};

struct Snapshot {
  std::string id;
  RegisterState registers;
  std::vector<MemoryMapping> mappings;
  std::vector<EndState> end_states;
  SnapshotMetadata metadata;

  const MemoryMapping* FindMapping(uint64_t addr) const;

  bool operator==(const Snapshot&) const = default;
};

// Returns every invariant violation; empty means valid.
std::vector<std::string> Validate(const Snapshot& s);

// Sorts every order-insensitive list into canonical order. Serialize()
// canonicalizes implicitly; this is exposed for callers that compare values.
void Canonicalize(Snapshot& s);

// Canonical JSON: sorted keys, compact, hex strings for numbers and bytes.
absl::StatusOr<std::string> Serialize(const Snapshot& s);

// Inverse of Serialize. Error codes are distinct per failure class:
//   kInvalidArgument    malformed document
//   kDataLoss           stored id does not match the content
//   kFailedPrecondition document parses but fails Validate()
absl::StatusOr<Snapshot> Deserialize(std::string_view bytes);

// First 20 hex characters of SHA-256 over Serialize(s) with an empty id.
absl::StatusOr<std::string> SnapshotId(const Snapshot& s);

// Recomputes s.id in place.
absl::Status AssignId(Snapshot& s);

// Lowercase hex SHA-256 of `bytes`.
std::string Sha256Hex(std::span<const uint8_t> bytes);

// Adds `e` to the snapshot. An end state equal to an existing one modulo
// platforms is folded into it; otherwise it is appended. A platform may
// carry only one end state.
absl::StatusOr<Snapshot> MergeEndState(const Snapshot& s, const EndState& e);

// The single-page NOP snapshot: "90 cc 00.." at kCodeAddress, r-x, with a
// TRAP end state on `platform` (no end state if platform is empty).
Snapshot MakeNopSnapshot(std::string_view platform = "interp-v1");

// Lowercase hex helpers shared by the JSON writers.
std::string HexU64(uint64_t v);
absl::StatusOr<uint64_t> ParseHexU64(std::string_view text);
std::string HexBytes(const std::vector<uint8_t>& bytes);
absl::StatusOr<std::vector<uint8_t>> ParseHexBytes(std::string_view text);

}  // namespace corefuzz

#endif  // COREFUZZ_SNAPSHOT_H_
