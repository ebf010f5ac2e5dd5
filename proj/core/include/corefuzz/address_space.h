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

#ifndef COREFUZZ_ADDRESS_SPACE_H_
#define COREFUZZ_ADDRESS_SPACE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

inline bool IsCanonical(uint64_t addr) {
  const uint64_t top = addr >> 47;
  return top == 0 || top == 0x1ffff;
}

enum class Access : uint8_t { kRead, kWrite, kFetch };

// A simulated user address space made of page-aligned regions.
//
// Driver-side operations (Map, Write, Protect, Read) ignore permissions; the
// execution-side Check/Load/Store enforce them.
class AddressSpace {
 public:
  struct Region {
    uint64_t start = 0;
    uint8_t perms = 0;
    std::vector<uint8_t> bytes;

    uint64_t end() const { return start + bytes.size(); }
  };

  // Maps a zero-filled rw region. Fails on overlap or misalignment.
  absl::Status Map(uint64_t start, uint64_t num_bytes);
  absl::Status Write(uint64_t start, std::span<const uint8_t> bytes);
  absl::Status Protect(uint64_t start, uint64_t num_bytes, uint8_t perms);
  absl::StatusOr<std::vector<uint8_t>> Read(uint64_t start, uint64_t num_bytes) const;
  void Clear() { regions_.clear(); }

  // Loads every mapping of `s` with its final permissions.
  static AddressSpace FromSnapshot(const Snapshot& s);

  // Returns the signal a `size`-byte access at `addr` would raise, or nullopt
  // when the access is permitted.
  std::optional<SignalRecord> Check(uint64_t addr, uint64_t size, Access access) const;

  // Unchecked little-endian accessors; callers run Check first.
  uint64_t Load(uint64_t addr, int size) const;
  void Store(uint64_t addr, int size, uint64_t value);
  uint8_t LoadByte(uint64_t addr) const;
  void StoreByte(uint64_t addr, uint8_t value);

  // Copies up to `max` executable bytes starting at `addr`, stopping at the
  // first byte that cannot be fetched.
  size_t FetchBytes(uint64_t addr, uint8_t* out, size_t max) const;

  const std::vector<Region>& regions() const { return regions_; }

 private:
  const Region* Find(uint64_t addr) const;
  Region* Find(uint64_t addr);

  std::vector<Region> regions_;  // sorted by start, disjoint
  mutable size_t last_ = 0;
};

}  // namespace corefuzz

#endif  // COREFUZZ_ADDRESS_SPACE_H_
