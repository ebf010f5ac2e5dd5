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

// The corefuzz command line: fuzz, gen, make, distill, check, triage, play
// and isa dump. Machine-readable JSON goes to `out`, human-readable
// summaries to `err`.

#ifndef COREFUZZ_TOOLS_CLI_H_
#define COREFUZZ_TOOLS_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "corefuzz/backend.h"

namespace corefuzz::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDetections = 1;
inline constexpr int kExitUsage = 2;

// "interp[:core=N][:platform=ID][:faults=FILE][:seed=N]" or
// "native[:core=N]".
struct BackendSpec {
  BackendKind kind = BackendKind::kInterp;
  int core = 0;
  std::optional<std::string> platform;
  std::optional<std::string> faults_file;
  uint64_t seed = 0;
};

absl::StatusOr<BackendSpec> ParseBackendSpec(std::string_view text);
absl::StatusOr<std::unique_ptr<Backend>> CreateBackend(const BackendSpec& spec);

// Runs one command line; `args` excludes the program name. Returns the exit
// code: 0 success, 1 detections (check), 2 usage or configuration error.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace corefuzz::cli

#endif  // COREFUZZ_TOOLS_CLI_H_
