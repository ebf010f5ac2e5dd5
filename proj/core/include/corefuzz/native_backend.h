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

// Runs snapshots on the host CPU inside a forked harness process.
//
// The harness maps snapshot pages at their fixed addresses, loads the
// snapshot registers through a small trampoline and regains control from
// the INT3 terminator or a fault signal. Only available on x86_64 Linux.

#ifndef COREFUZZ_NATIVE_BACKEND_H_
#define COREFUZZ_NATIVE_BACKEND_H_

#include <sys/types.h>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "corefuzz/backend.h"

namespace corefuzz {

// True on x86_64 Linux hosts.
bool NativeSupported();

// "native-<vendor>-<family>-<model>" from CPUID.
std::string NativePlatformId();

// Address ranges the harness process needs for itself.
std::vector<AddressRange> NativeReservedRanges();

// Number of logical CPUs the process may run on.
int NativeCoreCount();

// Driver side of the harness protocol over a socketpair.
class NativeExecutor : public CommandExecutor {
 public:
  // Called before each command is sent, with the harness pid. Tests use it
  // to kill the harness at chosen points.
  using CrashInjector = std::function<void(const Command&, pid_t)>;

  explicit NativeExecutor(int core_id) : core_id_(core_id) {}
  ~NativeExecutor() override;

  absl::StatusOr<Response> Send(const Command& command) override;

  // Kills and reaps the harness; the next command spawns a fresh one.
  void Kill();

  pid_t pid() const { return pid_; }
  int spawn_count() const { return spawn_count_; }
  void set_crash_injector(CrashInjector f) { injector_ = std::move(f); }
  // Wall-clock cap on a single response, beyond the snapshot's CPU limit.
  void set_response_slack_ms(int ms) { slack_ms_ = ms; }

 private:
  absl::Status Spawn();

  int core_id_;
  int fd_ = -1;
  pid_t pid_ = -1;
  int spawn_count_ = 0;
  int slack_ms_ = 10000;
  uint64_t pending_cpu_ms_ = 0;
  CrashInjector injector_;
};

class NativeBackend : public Backend {
 public:
  explicit NativeBackend(int core_id);

  void Recycle() override { executor_.Kill(); }
  NativeExecutor& native_executor() { return executor_; }

 protected:
  CommandExecutor& executor() override { return executor_; }

 private:
  NativeExecutor executor_;
};

// Unimplemented on non-x86_64 hosts; InvalidArgument for a core the
// process cannot run on.
absl::StatusOr<std::unique_ptr<NativeBackend>> MakeNativeBackend(int core_id);

}  // namespace corefuzz

#endif  // COREFUZZ_NATIVE_BACKEND_H_
