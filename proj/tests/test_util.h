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

// Shared helpers for building small snapshots by hand in tests.

#ifndef COREFUZZ_TESTS_TEST_UTIL_H_
#define COREFUZZ_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "corefuzz/isa.h"
#include "corefuzz/snapshot.h"

namespace corefuzz::testing {

inline constexpr uint64_t kDataPage = 0x20000000;

// Concatenates instruction encodings; aborts the test binary on failure so
// typos in hand-written programs surface immediately.
inline std::vector<uint8_t> Assemble(std::initializer_list<absl::StatusOr<Instr>> instrs) {
  std::vector<uint8_t> out;
  for (const auto& i : instrs) {
    if (!i.ok()) {
      fprintf(stderr, "bad test instruction: %s\n", std::string(i.status().message()).c_str());
      abort();
    }
    out.insert(out.end(), i->raw.begin(), i->raw.end());
  }
  return out;
}

inline RegOperand R(Gpr g) {
  static constexpr uint8_t kEnc[] = {0, 3, 1, 2, 6, 7, 5, 4, 8, 9, 10, 11, 12, 13, 14, 15};
  return RegOperand{kEnc[static_cast<int>(g)]};
}

// Code page at kCodeAddress (code + INT3, zero filled, r-x) plus the given
// zero-filled rw pages. No end states.
inline Snapshot CodeSnapshot(const std::vector<uint8_t>& code,
                             std::initializer_list<uint64_t> rw_pages = {}) {
  Snapshot s;
  MemoryMapping m{kCodeAddress, kPageSize, kPermR | kPermX, std::vector<uint8_t>(kPageSize, 0)};
  std::copy(code.begin(), code.end(), m.data.begin());
  m.data[code.size()] = 0xCC;
  s.mappings.push_back(std::move(m));
  for (uint64_t p : rw_pages) {
    s.mappings.push_back(
        MemoryMapping{p, kPageSize, kPermR | kPermW, std::vector<uint8_t>(kPageSize, 0)});
  }
  s.registers.rip = kCodeAddress;
  Canonicalize(s);
  return s;
}

}  // namespace corefuzz::testing

#endif  // COREFUZZ_TESTS_TEST_UTIL_H_
