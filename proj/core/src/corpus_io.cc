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

#include "corefuzz/corpus_io.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "absl/strings/str_cat.h"

namespace corefuzz {

absl::StatusOr<std::string> ReadFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) return absl::DataLossError(absl::StrCat("cannot read ", path));
  return ss.str();
}

absl::Status WriteFile(const std::string& path, std::string_view data) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  if (ec) return absl::InternalError(absl::StrCat("create ", p.parent_path().string(), ": ",
                                                  ec.message()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  f.close();
  if (!f) return absl::InternalError(absl::StrCat("cannot write ", path));
  return absl::OkStatus();
}

absl::StatusOr<Snapshot> ReadSnapshotFile(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  absl::StatusOr<Snapshot> s = Deserialize(*text);
  if (!s.ok()) {
    return absl::Status(s.status().code(),
                        absl::StrCat(path, ": ", std::string(s.status().message())));
  }
  return s;
}

absl::Status WriteSnapshotFile(const std::string& path, const Snapshot& s) {
  absl::StatusOr<std::string> text = Serialize(s);
  if (!text.ok()) return text.status();
  return WriteFile(path, *text + "\n");
}

absl::StatusOr<std::vector<std::string>> ListFiles(const std::string& dir, std::string_view ext) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    return absl::NotFoundError(absl::StrCat("not a directory: ", dir));
  }
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      out.push_back(entry.path().string());
    }
  }
  if (ec) return absl::InternalError(absl::StrCat("list ", dir, ": ", ec.message()));
  std::sort(out.begin(), out.end());
  return out;
}

absl::StatusOr<std::vector<Snapshot>> ReadSnapshotDir(const std::string& dir) {
  absl::StatusOr<std::vector<std::string>> files = ListFiles(dir, kSnapshotExtension);
  if (!files.ok()) return files.status();
  std::vector<Snapshot> out;
  for (const std::string& f : *files) {
    absl::StatusOr<Snapshot> s = ReadSnapshotFile(f);
    if (!s.ok()) return s.status();
    out.push_back(*std::move(s));
  }
  return out;
}

absl::Status WriteSnapshotDir(const std::string& dir, const std::vector<Snapshot>& corpus) {
  for (const Snapshot& s : corpus) {
    absl::Status st =
        WriteSnapshotFile(absl::StrCat(dir, "/", s.id, std::string(kSnapshotExtension)), s);
    if (!st.ok()) return st;
  }
  if (corpus.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return absl::InternalError(absl::StrCat("create ", dir, ": ", ec.message()));
  }
  return absl::OkStatus();
}

}  // namespace corefuzz
