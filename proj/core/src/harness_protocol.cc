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

#include "corefuzz/harness_protocol.h"

#include <errno.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include "absl/strings/str_cat.h"

namespace corefuzz {

namespace {

void PutU64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t GetU64(std::span<const uint8_t> in, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{in[pos + i]} << (8 * i);
  return v;
}

absl::Status BadPayload(uint8_t type, size_t size) {
  return absl::InvalidArgumentError(
      absl::StrCat("bad payload size ", size, " for message type ", int{type}));
}

}  // namespace

uint8_t SignalNumber(Signal s) {
  switch (s) {
    case Signal::kSegv: return SIGSEGV;
    case Signal::kIll: return SIGILL;
    case Signal::kFpe: return SIGFPE;
    case Signal::kTrap: return SIGTRAP;
    case Signal::kBus: return SIGBUS;
  }
  return 0;
}

std::optional<Signal> SignalFromNumber(int signo) {
  switch (signo) {
    case SIGSEGV: return Signal::kSegv;
    case SIGILL: return Signal::kIll;
    case SIGFPE: return Signal::kFpe;
    case SIGTRAP: return Signal::kTrap;
    case SIGBUS: return Signal::kBus;
    default: return std::nullopt;
  }
}

void EncodeRegisters(const RegisterState& r, std::vector<uint8_t>& out) {
  for (uint64_t v : r.gpr) PutU64(out, v);
  PutU64(out, r.rip);
  PutU64(out, r.rflags);
}

RegisterState DecodeRegisters(std::span<const uint8_t> block) {
  RegisterState r;
  for (int i = 0; i < kNumGprs; ++i) r.gpr[i] = GetU64(block, 8 * i);
  r.rip = GetU64(block, 8 * 16);
  r.rflags = GetU64(block, 8 * 17);
  return r;
}

Frame EncodeCommand(const Command& c) {
  Frame f;
  std::vector<uint8_t>& p = f.payload;
  if (const auto* m = std::get_if<MapCommand>(&c)) {
    f.type = kMsgMap;
    PutU64(p, m->start);
    PutU64(p, m->num_bytes);
  } else if (const auto* w = std::get_if<WriteCommand>(&c)) {
    f.type = kMsgWrite;
    PutU64(p, w->start);
    p.insert(p.end(), w->bytes.begin(), w->bytes.end());
  } else if (const auto* pr = std::get_if<ProtectCommand>(&c)) {
    f.type = kMsgProtect;
    PutU64(p, pr->start);
    PutU64(p, pr->num_bytes);
    p.push_back(pr->perms);
  } else if (const auto* e = std::get_if<ExecCommand>(&c)) {
    f.type = kMsgExec;
    EncodeRegisters(e->registers, p);
    PutU64(p, e->cpu_time_limit_ms);
  } else if (const auto* cs = std::get_if<ChecksumCommand>(&c)) {
    f.type = kMsgChecksum;
    PutU64(p, cs->start);
    PutU64(p, cs->num_bytes);
  } else if (std::holds_alternative<ExitCommand>(c)) {
    f.type = kMsgExit;
  } else if (const auto* r = std::get_if<ReadCommand>(&c)) {
    f.type = kMsgRead;
    PutU64(p, r->start);
    PutU64(p, r->num_bytes);
  }
  return f;
}

absl::StatusOr<Command> DecodeCommand(const Frame& f) {
  const auto& p = f.payload;
  switch (f.type) {
    case kMsgMap:
      if (p.size() != 16) return BadPayload(f.type, p.size());
      return MapCommand{GetU64(p, 0), GetU64(p, 8)};
    case kMsgWrite: {
      if (p.size() < 8) return BadPayload(f.type, p.size());
      return WriteCommand{GetU64(p, 0), std::vector<uint8_t>(p.begin() + 8, p.end())};
    }
    case kMsgProtect:
      if (p.size() != 17) return BadPayload(f.type, p.size());
      return ProtectCommand{GetU64(p, 0), GetU64(p, 8), p[16]};
    case kMsgExec:
      if (p.size() != kRegisterBlockSize + 8) return BadPayload(f.type, p.size());
      return ExecCommand{DecodeRegisters(p), GetU64(p, kRegisterBlockSize)};
    case kMsgChecksum:
      if (p.size() != 16) return BadPayload(f.type, p.size());
      return ChecksumCommand{GetU64(p, 0), GetU64(p, 8)};
    case kMsgExit:
      if (!p.empty()) return BadPayload(f.type, p.size());
      return ExitCommand{};
    case kMsgRead:
      if (p.size() != 16) return BadPayload(f.type, p.size());
      return ReadCommand{GetU64(p, 0), GetU64(p, 8)};
    default:
      return absl::InvalidArgumentError(absl::StrCat("unknown command type ", int{f.type}));
  }
}

Frame EncodeResponse(const Response& r) {
  Frame f;
  std::vector<uint8_t>& p = f.payload;
  if (std::holds_alternative<OkResponse>(r)) {
    f.type = kMsgOk;
  } else if (const auto* regs = std::get_if<RegsResponse>(&r)) {
    f.type = kMsgRegs;
    EncodeRegisters(regs->registers, p);
  } else if (const auto* sum = std::get_if<SumResponse>(&r)) {
    f.type = kMsgSum;
    PutU64(p, sum->checksum);
  } else if (const auto* fault = std::get_if<FaultResponse>(&r)) {
    f.type = kMsgFault;
    p.push_back(SignalNumber(fault->signal.signal));
    PutU64(p, fault->signal.fault_address);
    EncodeRegisters(fault->registers, p);
  } else if (const auto* data = std::get_if<DataResponse>(&r)) {
    f.type = kMsgData;
    p = data->bytes;
  } else if (const auto* err = std::get_if<ErrResponse>(&r)) {
    f.type = kMsgErr;
    p.push_back(static_cast<uint8_t>(err->code));
  }
  return f;
}

absl::StatusOr<Response> DecodeResponse(const Frame& f) {
  const auto& p = f.payload;
  switch (f.type) {
    case kMsgOk:
      if (!p.empty()) return BadPayload(f.type, p.size());
      return OkResponse{};
    case kMsgRegs:
      if (p.size() != kRegisterBlockSize) return BadPayload(f.type, p.size());
      return RegsResponse{DecodeRegisters(p)};
    case kMsgSum:
      if (p.size() != 8) return BadPayload(f.type, p.size());
      return SumResponse{GetU64(p, 0)};
    case kMsgFault: {
      if (p.size() != 9 + kRegisterBlockSize) return BadPayload(f.type, p.size());
      std::optional<Signal> sig = SignalFromNumber(p[0]);
      if (!sig) return absl::InvalidArgumentError(absl::StrCat("unknown signal ", int{p[0]}));
      return FaultResponse{SignalRecord{*sig, GetU64(p, 1)},
                           DecodeRegisters(std::span<const uint8_t>(p).subspan(9))};
    }
    case kMsgData:
      return DataResponse{p};
    case kMsgErr:
      if (p.size() != 1) return BadPayload(f.type, p.size());
      return ErrResponse{static_cast<HarnessError>(p[0])};
    default:
      return absl::InvalidArgumentError(absl::StrCat("unknown response type ", int{f.type}));
  }
}

std::vector<uint8_t> SerializeFrame(const Frame& f) {
  std::vector<uint8_t> out;
  out.reserve(5 + f.payload.size());
  const uint32_t len = static_cast<uint32_t>(f.payload.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.push_back(f.type);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

absl::StatusOr<Frame> ParseFrame(std::span<const uint8_t> bytes, size_t* consumed) {
  if (bytes.size() < 5) return absl::InvalidArgumentError("short frame header");
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= uint32_t{bytes[i]} << (8 * i);
  if (len > kMaxPayload) return absl::InvalidArgumentError("oversized frame");
  if (bytes.size() < 5 + size_t{len}) return absl::InvalidArgumentError("truncated frame");
  Frame f;
  f.type = bytes[4];
  f.payload.assign(bytes.begin() + 5, bytes.begin() + 5 + len);
  if (consumed != nullptr) *consumed = 5 + len;
  return f;
}

namespace {

absl::Status WriteAll(int fd, const uint8_t* data, size_t size) {
  while (size > 0) {
    // MSG_NOSIGNAL keeps a dead peer from raising SIGPIPE in the driver.
    ssize_t n = send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = write(fd, data, size);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return absl::UnavailableError("harness channel closed on write");
    data += n;
    size -= static_cast<size_t>(n);
  }
  return absl::OkStatus();
}

absl::Status ReadAll(int fd, uint8_t* data, size_t size) {
  while (size > 0) {
    ssize_t n = read(fd, data, size);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return absl::UnavailableError("harness channel closed on read");
    data += n;
    size -= static_cast<size_t>(n);
  }
  return absl::OkStatus();
}

}  // namespace

absl::Status WriteFrame(int fd, const Frame& f) {
  const std::vector<uint8_t> bytes = SerializeFrame(f);
  return WriteAll(fd, bytes.data(), bytes.size());
}

absl::StatusOr<Frame> ReadFrame(int fd) {
  uint8_t header[5];
  if (absl::Status st = ReadAll(fd, header, sizeof(header)); !st.ok()) return st;
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= uint32_t{header[i]} << (8 * i);
  if (len > kMaxPayload) return absl::InvalidArgumentError("oversized frame");
  Frame f;
  f.type = header[4];
  f.payload.resize(len);
  if (absl::Status st = ReadAll(fd, f.payload.data(), len); !st.ok()) return st;
  return f;
}

}  // namespace corefuzz
