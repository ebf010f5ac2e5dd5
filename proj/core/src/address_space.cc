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

#include "corefuzz/address_space.h"

#include <algorithm>

#include "absl/strings/str_cat.h"

namespace corefuzz {

namespace {

bool Aligned(uint64_t v) { return v % kPageSize == 0; }

uint8_t RequiredPerm(Access a) {
  switch (a) {
    case Access::kRead:
      return kPermR | kPermW | kPermX;  // any access right allows a load
    case Access::kWrite:
      return kPermW;
    case Access::kFetch:
      return kPermX;
  }
  return 0;
}

}  // namespace

const AddressSpace::Region* AddressSpace::Find(uint64_t addr) const {
  if (last_ < regions_.size()) {
    const Region& r = regions_[last_];
    if (addr >= r.start && addr < r.end()) return &r;
  }
  auto it = std::upper_bound(regions_.begin(), regions_.end(), addr,
                             [](uint64_t a, const Region& r) { return a < r.start; });
  if (it == regions_.begin()) return nullptr;
  --it;
  if (addr >= it->end()) return nullptr;
  last_ = static_cast<size_t>(it - regions_.begin());
  return &*it;
}

AddressSpace::Region* AddressSpace::Find(uint64_t addr) {
  return const_cast<Region*>(std::as_const(*this).Find(addr));
}

absl::Status AddressSpace::Map(uint64_t start, uint64_t num_bytes) {
  if (!Aligned(start) || !Aligned(num_bytes) || num_bytes == 0) {
    return absl::InvalidArgumentError("mapping must be page aligned and non-empty");
  }
  if (start < kMinUserAddress || start + num_bytes > kUserAddressLimit ||
      start + num_bytes < start) {
    return absl::InvalidArgumentError(absl::StrCat("mapping outside user range: ", HexU64(start)));
  }
  for (const Region& r : regions_) {
    if (start < r.end() && r.start < start + num_bytes) {
      return absl::AlreadyExistsError(absl::StrCat("mapping overlaps ", HexU64(r.start)));
    }
  }
  Region region{start, static_cast<uint8_t>(kPermR | kPermW),
                std::vector<uint8_t>(num_bytes, 0)};
  auto it = std::lower_bound(regions_.begin(), regions_.end(), start,
                             [](const Region& r, uint64_t a) { return r.start < a; });
  regions_.insert(it, std::move(region));
  last_ = 0;
  return absl::OkStatus();
}

absl::Status AddressSpace::Write(uint64_t start, std::span<const uint8_t> bytes) {
  for (uint64_t i = 0; i < bytes.size();) {
    Region* r = Find(start + i);
    if (r == nullptr) return absl::NotFoundError(absl::StrCat("unmapped ", HexU64(start + i)));
    const uint64_t off = start + i - r->start;
    const uint64_t n = std::min<uint64_t>(bytes.size() - i, r->bytes.size() - off);
    std::copy_n(bytes.begin() + i, n, r->bytes.begin() + off);
    i += n;
  }
  return absl::OkStatus();
}

absl::Status AddressSpace::Protect(uint64_t start, uint64_t num_bytes, uint8_t perms) {
  if (!Aligned(start) || !Aligned(num_bytes)) {
    return absl::InvalidArgumentError("protect range must be page aligned");
  }
  // Regions are only ever protected whole, mirroring how plans are built.
  for (Region& r : regions_) {
    if (r.start == start && r.bytes.size() == num_bytes) {
      r.perms = perms;
      return absl::OkStatus();
    }
  }
  return absl::NotFoundError(absl::StrCat("no mapping at ", HexU64(start)));
}

absl::StatusOr<std::vector<uint8_t>> AddressSpace::Read(uint64_t start,
                                                        uint64_t num_bytes) const {
  std::vector<uint8_t> out;
  out.reserve(num_bytes);
  for (uint64_t i = 0; i < num_bytes;) {
    const Region* r = Find(start + i);
    if (r == nullptr) return absl::NotFoundError(absl::StrCat("unmapped ", HexU64(start + i)));
    const uint64_t off = start + i - r->start;
    const uint64_t n = std::min<uint64_t>(num_bytes - i, r->bytes.size() - off);
    out.insert(out.end(), r->bytes.begin() + off, r->bytes.begin() + off + n);
    i += n;
  }
  return out;
}

AddressSpace AddressSpace::FromSnapshot(const Snapshot& s) {
  AddressSpace space;
  for (const MemoryMapping& m : s.mappings) {
    Region r{m.start, m.perms, m.data};
    r.bytes.resize(m.num_bytes, 0);
    space.regions_.push_back(std::move(r));
  }
  std::sort(space.regions_.begin(), space.regions_.end(),
            [](const Region& a, const Region& b) { return a.start < b.start; });
  return space;
}

std::optional<SignalRecord> AddressSpace::Check(uint64_t addr, uint64_t size,
                                                Access access) const {
  const uint64_t last = addr + size - 1;
  // Non-canonical addresses raise #GP, which carries no fault address.
  if (!IsCanonical(addr) || !IsCanonical(last) || last < addr) {
    return SignalRecord{Signal::kSegv, 0};
  }
  const uint8_t need = RequiredPerm(access);
  for (uint64_t a = addr; a <= last;) {
    const Region* r = Find(a);
    if (r == nullptr || (r->perms & need) == 0) return SignalRecord{Signal::kSegv, a};
    if (r->end() > last) break;
    a = r->end();
  }
  return std::nullopt;
}

uint8_t AddressSpace::LoadByte(uint64_t addr) const {
  const Region* r = Find(addr);
  return r->bytes[addr - r->start];
}

void AddressSpace::StoreByte(uint64_t addr, uint8_t value) {
  Region* r = Find(addr);
  r->bytes[addr - r->start] = value;
}

uint64_t AddressSpace::Load(uint64_t addr, int size) const {
  uint64_t v = 0;
  for (int i = 0; i < size; ++i) v |= uint64_t{LoadByte(addr + i)} << (8 * i);
  return v;
}

void AddressSpace::Store(uint64_t addr, int size, uint64_t value) {
  for (int i = 0; i < size; ++i) StoreByte(addr + i, static_cast<uint8_t>(value >> (8 * i)));
}

size_t AddressSpace::FetchBytes(uint64_t addr, uint8_t* out, size_t max) const {
  size_t n = 0;
  while (n < max) {
    const uint64_t a = addr + n;
    if (!IsCanonical(a) || a < addr) break;
    const Region* r = Find(a);
    if (r == nullptr || !(r->perms & kPermX)) break;
    out[n++] = r->bytes[a - r->start];
  }
  return n;
}

}  // namespace corefuzz
