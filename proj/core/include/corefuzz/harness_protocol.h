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

// Driver <-> harness wire format.
//
// Every message is [length: u32 LE, payload bytes only][type: u8][payload].
// All integers are little-endian.

#ifndef COREFUZZ_HARNESS_PROTOCOL_H_
#define COREFUZZ_HARNESS_PROTOCOL_H_

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corefuzz/commands.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

enum MessageType : uint8_t {
  kMsgMap = 1,
  kMsgWrite = 2,
  kMsgProtect = 3,
  kMsgExec = 4,
  kMsgChecksum = 5,
  kMsgExit = 6,
  kMsgRead = 7,
  kMsgOk = 0x80,
  kMsgRegs = 0x81,
  kMsgSum = 0x82,
  kMsgFault = 0x83,
  kMsgData = 0x84,
  kMsgErr = 0xFF,
};

enum class HarnessError : uint8_t {
  kTimeout = 1,
  kBadCommand = 2,
  kBadAddress = 3,
  kMapFailed = 4,
  kUnexpectedSignal = 5,
};

// Register block: 16 GPRs, rip, rflags.
inline constexpr size_t kRegisterBlockSize = 18 * 8;
// Hard cap on a single payload; the largest legitimate one is a page write.
inline constexpr uint32_t kMaxPayload = 16 << 20;

struct OkResponse {
  bool operator==(const OkResponse&) const = default;
};
struct RegsResponse {
  RegisterState registers;
  bool operator==(const RegsResponse&) const = default;
};
struct SumResponse {
  uint64_t checksum = 0;
  bool operator==(const SumResponse&) const = default;
};
struct FaultResponse {
  SignalRecord signal;
  RegisterState registers;
  bool operator==(const FaultResponse&) const = default;
};
struct DataResponse {
  std::vector<uint8_t> bytes;
  bool operator==(const DataResponse&) const = default;
};
struct ErrResponse {
  HarnessError code = HarnessError::kBadCommand;
  bool operator==(const ErrResponse&) const = default;
};

using Response =
    std::variant<OkResponse, RegsResponse, SumResponse, FaultResponse, DataResponse, ErrResponse>;

struct Frame {
  uint8_t type = 0;
  std::vector<uint8_t> payload;
  bool operator==(const Frame&) const = default;
};

// POSIX signal numbers on Linux.
uint8_t SignalNumber(Signal s);
std::optional<Signal> SignalFromNumber(int signo);

void EncodeRegisters(const RegisterState& r, std::vector<uint8_t>& out);
RegisterState DecodeRegisters(std::span<const uint8_t> block);

Frame EncodeCommand(const Command& c);
absl::StatusOr<Command> DecodeCommand(const Frame& f);
Frame EncodeResponse(const Response& r);
absl::StatusOr<Response> DecodeResponse(const Frame& f);

std::vector<uint8_t> SerializeFrame(const Frame& f);
// Parses one frame from the front of `bytes`. InvalidArgument on a malformed
// or incomplete frame.
absl::StatusOr<Frame> ParseFrame(std::span<const uint8_t> bytes, size_t* consumed = nullptr);

// Blocking fd I/O. Unavailable on EOF or I/O error, InvalidArgument on bad
// framing.
absl::Status WriteFrame(int fd, const Frame& f);
absl::StatusOr<Frame> ReadFrame(int fd);

}  // namespace corefuzz

#endif  // COREFUZZ_HARNESS_PROTOCOL_H_
