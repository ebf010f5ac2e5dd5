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

#include "corefuzz/commands.h"

#include <algorithm>

#include "absl/strings/str_cat.h"
#include "nlohmann/json.hpp"

namespace corefuzz {

namespace {

using json = nlohmann::ordered_json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

json RegistersJson(const RegisterState& r) {
  json j = json::object();
  for (int i = 0; i < kNumGprs; ++i) j[std::string(GprName(i))] = HexU64(r.gpr[i]);
  j["rip"] = HexU64(r.rip);
  j["rflags"] = HexU64(r.rflags);
  return j;
}

}  // namespace

std::vector<Command> PlanCommands(const Snapshot& s, const PlanOptions& options) {
  std::vector<const MemoryMapping*> mappings;
  for (const auto& m : s.mappings) mappings.push_back(&m);
  std::sort(mappings.begin(), mappings.end(),
            [](const MemoryMapping* a, const MemoryMapping* b) { return a->start < b->start; });

  std::vector<Command> plan;
  for (const MemoryMapping* m : mappings) {
    plan.push_back(MapCommand{m->start, m->num_bytes});
    std::vector<uint8_t> bytes = m->data;
    bytes.resize(m->num_bytes, 0);
    plan.push_back(WriteCommand{m->start, std::move(bytes)});
    plan.push_back(ProtectCommand{m->start, m->num_bytes, m->perms});
  }
  plan.push_back(ExecCommand{s.registers, options.cpu_time_limit_ms});
  for (const MemoryMapping* m : mappings) {
    if (options.checksum_all || m->writable()) {
      plan.push_back(ChecksumCommand{m->start, m->num_bytes});
    }
  }
  if (options.read_back) {
    for (const MemoryMapping* m : mappings) {
      if (m->writable()) plan.push_back(ReadCommand{m->start, m->num_bytes});
    }
  }
  plan.push_back(ExitCommand{});
  return plan;
}

uint64_t ChecksumMemory(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view CommandName(const Command& c) {
  return std::visit(Overloaded{
                        [](const MapCommand&) { return std::string_view("MapMemory"); },
                        [](const WriteCommand&) { return std::string_view("WriteMemory"); },
                        [](const ProtectCommand&) { return std::string_view("ProtectMemory"); },
                        [](const ExecCommand&) { return std::string_view("ExecuteSnapshot"); },
                        [](const ChecksumCommand&) { return std::string_view("ChecksumMemory"); },
                        [](const ExitCommand&) { return std::string_view("Exit"); },
                        [](const ReadCommand&) { return std::string_view("ReadMemory"); },
                    },
                    c);
}

std::string CommandToString(const Command& c) {
  const std::string name(CommandName(c));
  return std::visit(
      Overloaded{
          [&](const MapCommand& m) {
            return absl::StrCat(name, " { start = ", HexU64(m.start),
                                ", num_bytes = ", m.num_bytes, " }");
          },
          [&](const WriteCommand& w) {
            // Show the leading bytes the way the listing does: "\x90\xCC\x00..".
            std::string head;
            const size_t shown = std::min<size_t>(w.bytes.size(), 3);
            for (size_t i = 0; i < shown; ++i) {
              static constexpr char kHex[] = "0123456789ABCDEF";
              head += "\\x";
              head += kHex[w.bytes[i] >> 4];
              head += kHex[w.bytes[i] & 15];
            }
            if (w.bytes.size() > shown) head += "..";
            return absl::StrCat(name, " { start = ", HexU64(w.start), ", data = \"", head,
                                "\", num_bytes = ", w.bytes.size(), " }");
          },
          [&](const ProtectCommand& p) {
            return absl::StrCat(name, " { start = ", HexU64(p.start),
                                ", num_bytes = ", p.num_bytes,
                                ", perms = ", PermsToString(p.perms), " }");
          },
          [&](const ExecCommand& e) {
            return absl::StrCat(name, " { rip = ", HexU64(e.registers.rip),
                                ", cpu_time_limit_ms = ", e.cpu_time_limit_ms, " }");
          },
          [&](const ChecksumCommand& c) {
            return absl::StrCat(name, " { start = ", HexU64(c.start),
                                ", num_bytes = ", c.num_bytes, " }");
          },
          [&](const ExitCommand&) { return absl::StrCat(name, " {}"); },
          [&](const ReadCommand& r) {
            return absl::StrCat(name, " { start = ", HexU64(r.start),
                                ", num_bytes = ", r.num_bytes, " }");
          },
      },
      c);
}

std::string CommandsToJson(const std::vector<Command>& commands) {
  json out = json::array();
  for (const Command& c : commands) {
    json j = json::object();
    j["command"] = std::string(CommandName(c));
    std::visit(Overloaded{
                   [&](const MapCommand& m) {
                     j["start"] = HexU64(m.start);
                     j["num_bytes"] = m.num_bytes;
                   },
                   [&](const WriteCommand& w) {
                     j["start"] = HexU64(w.start);
                     j["num_bytes"] = w.bytes.size();
                     j["data"] = HexBytes(w.bytes);
                   },
                   [&](const ProtectCommand& p) {
                     j["start"] = HexU64(p.start);
                     j["num_bytes"] = p.num_bytes;
                     j["perms"] = PermsToString(p.perms);
                   },
                   [&](const ExecCommand& e) {
                     j["registers"] = RegistersJson(e.registers);
                     j["cpu_time_limit_ms"] = e.cpu_time_limit_ms;
                   },
                   [&](const ChecksumCommand& c) {
                     j["start"] = HexU64(c.start);
                     j["num_bytes"] = c.num_bytes;
                   },
                   [&](const ExitCommand&) {},
                   [&](const ReadCommand& r) {
                     j["start"] = HexU64(r.start);
                     j["num_bytes"] = r.num_bytes;
                   },
               },
               c);
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

}  // namespace corefuzz
