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

// Files and directories of snapshots.

#ifndef COREFUZZ_CORPUS_IO_H_
#define COREFUZZ_CORPUS_IO_H_

#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corefuzz/snapshot.h"

namespace corefuzz {

// Snapshot files are canonical JSON named "<id>.snap".
inline constexpr std::string_view kSnapshotExtension = ".snap";

// NotFound when the file cannot be opened.
absl::StatusOr<std::string> ReadFile(const std::string& path);
// Creates parent directories as needed.
absl::Status WriteFile(const std::string& path, std::string_view data);

absl::StatusOr<Snapshot> ReadSnapshotFile(const std::string& path);
absl::Status WriteSnapshotFile(const std::string& path, const Snapshot& s);

// Regular files in `dir` with extension `ext` (".snap"), sorted by path.
absl::StatusOr<std::vector<std::string>> ListFiles(const std::string& dir, std::string_view ext);

// Every snapshot in `dir`, sorted by file name.
absl::StatusOr<std::vector<Snapshot>> ReadSnapshotDir(const std::string& dir);
// Writes "<dir>/<id>.snap" for each snapshot.
absl::Status WriteSnapshotDir(const std::string& dir, const std::vector<Snapshot>& corpus);

}  // namespace corefuzz

#endif  // COREFUZZ_CORPUS_IO_H_
