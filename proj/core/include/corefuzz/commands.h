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

// Driver commands and the snapshot-to-command plan.

#ifndef COREFUZZ_COMMANDS_H_
#define COREFUZZ_COMMANDS_H_

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "corefuzz/snapshot.h"

namespace corefuzz {

struct MapCommand {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  bool operator==(const MapCommand&) const = default;
};

struct WriteCommand {
  uint64_t start = 0;
  std::vector<uint8_t> bytes;
  bool operator==(const WriteCommand&) const = default;
};

struct ProtectCommand {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  uint8_t perms = 0;
  bool operator==(const ProtectCommand&) const = default;
};

struct ExecCommand {
  RegisterState registers;
  uint64_t cpu_time_limit_ms = 0;
  bool operator==(const ExecCommand&) const = default;
};

struct ChecksumCommand {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  bool operator==(const ChecksumCommand&) const = default;
};

struct ExitCommand {
  bool operator==(const ExitCommand&) const = default;
};

// Reads back a mapped range in full. Not part of the printed plan; the
// driver appends it to capture writable memory for end-state recording.
struct ReadCommand {
  uint64_t start = 0;
  uint64_t num_bytes = 0;
  bool operator==(const ReadCommand&) const = default;
};

using Command = std::variant<MapCommand, WriteCommand, ProtectCommand, ExecCommand,
                             ChecksumCommand, ExitCommand, ReadCommand>;

inline constexpr uint64_t kDefaultCpuTimeLimitMs = 3000;

struct PlanOptions {
  uint64_t cpu_time_limit_ms = kDefaultCpuTimeLimitMs;
  // Checksum every mapping rather than only writable ones.
  bool checksum_all = false;
  // Append READ commands for writable mappings before EXIT.
  bool read_back = false;
};

// MAP/WRITE/PROTECT per mapping in address order, one EXEC, CHECKSUMs, EXIT.
std::vector<Command> PlanCommands(const Snapshot& s, const PlanOptions& options = {});

// FNV-1a, 64-bit.
uint64_t ChecksumMemory(std::span<const uint8_t> bytes);

// "MapMemory", "WriteMemory", ... as used in dumps.
std::string_view CommandName(const Command& c);

// Human-readable one-liner, e.g. "MapMemory { start = 0x10000000, num_bytes = 4096 }".
std::string CommandToString(const Command& c);

// JSON rendering used by the dump subcommand (bytes as lowercase hex).
std::string CommandsToJson(const std::vector<Command>& commands);

}  // namespace corefuzz

#endif  // COREFUZZ_COMMANDS_H_
