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

#include "corefuzz/fuzz_engine.h"

#include <algorithm>
#include <bitset>
#include <filesystem>
#include <fstream>
#include <memory>
#include <queue>
#include <set>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "corefuzz/address_space.h"
#include "corefuzz/commands.h"
#include "nlohmann/json.hpp"

namespace corefuzz {

namespace {

constexpr std::string_view kMutationNames[] = {
    "bit_flip", "byte_replace", "byte_insert", "byte_delete",
    "duplicate_range", "dictionary_insert", "crossover",
};

constexpr size_t kMaxDuplicate = 16;

// Feature ids are a class byte plus at most 16 bits.
size_t FeatureIndex(uint32_t feature) {
  return static_cast<size_t>((feature >> 24) & 7) << 16 | (feature & 0xffff);
}

class FeatureBitmap {
 public:
  FeatureBitmap() : bits_(std::make_unique<std::bitset<8 << 16>>()) {}

  bool Has(uint32_t f) const { return (*bits_)[FeatureIndex(f)]; }
  // Returns true when `f` was new.
  bool Insert(uint32_t f) {
    auto ref = (*bits_)[FeatureIndex(f)];
    if (ref) return false;
    ref = true;
    ++size_;
    return true;
  }
  size_t size() const { return size_; }

 private:
  std::unique_ptr<std::bitset<8 << 16>> bits_;
  size_t size_ = 0;
};

size_t CountNew(const CoverageSet& c, const FeatureBitmap& covered) {
  size_t n = 0;
  for (uint32_t f : c) n += covered.Has(f) ? 0 : 1;
  return n;
}

// Offsets of the instruction boundaries in the decodable prefix of `bytes`.
std::vector<size_t> InstrBoundaries(std::span<const uint8_t> bytes) {
  std::vector<size_t> out = {0};
  size_t offset = 0;
  for (const Instr& i : DecodeProgram(bytes).instrs) {
    offset += i.length;
    out.push_back(offset);
  }
  return out;
}

// Greedy cover over `corpus` starting from `selected`; adds at most `limit`
// entries and stops once nothing adds coverage.
std::vector<size_t> GreedyCover(const std::vector<CorpusEntry>& corpus,
                                std::vector<size_t> selected, size_t limit) {
  FeatureBitmap covered;
  std::vector<bool> taken(corpus.size(), false);
  for (size_t i : selected) {
    taken[i] = true;
    for (uint32_t f : corpus[i].coverage) covered.Insert(f);
  }
  struct Candidate {
    size_t gain;
    size_t index;
  };
  // Ordered so that the heap top is the best candidate.
  auto worse = [&](const Candidate& a, const Candidate& b) {
    if (a.gain != b.gain) return a.gain < b.gain;
    const CorpusEntry& ea = corpus[a.index];
    const CorpusEntry& eb = corpus[b.index];
    if (ea.exec_cost != eb.exec_cost) return ea.exec_cost > eb.exec_cost;
    if (ea.id != eb.id) return ea.id > eb.id;
    return a.index > b.index;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (taken[i]) continue;
    const size_t gain = CountNew(corpus[i].coverage, covered);
    if (gain > 0) heap.push({gain, i});
  }
  size_t added = 0;
  while (!heap.empty() && added < limit) {
    Candidate top = heap.top();
    heap.pop();
    // Gains only shrink, so a refreshed candidate that still beats the best
    // stale bound is the true maximum.
    top.gain = CountNew(corpus[top.index].coverage, covered);
    if (top.gain == 0) continue;
    if (!heap.empty() && worse(top, heap.top())) {
      heap.push(top);
      continue;
    }
    selected.push_back(top.index);
    ++added;
    for (uint32_t f : corpus[top.index].coverage) covered.Insert(f);
  }
  return selected;
}

}  // namespace

std::string_view ProxyName(Proxy p) { return p == Proxy::kDecoder ? "DECODER" : "INTERPRETER"; }

std::optional<Proxy> ParseProxy(std::string_view name) {
  if (name == "decoder" || name == "DECODER") return Proxy::kDecoder;
  if (name == "interp" || name == "interpreter" || name == "INTERPRETER") {
    return Proxy::kInterpreter;
  }
  return std::nullopt;
}

absl::Status ValidateFuzzConfig(const FuzzConfig& config) {
  if (config.max_len < 1 || config.max_len > kPageSize - 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("max_len ", config.max_len, " outside 1..4095"));
  }
  if (config.proxy_max_instrs < 1) return absl::InvalidArgumentError("proxy_max_instrs < 1");
  for (const auto& d : config.dictionary) {
    if (d.empty()) return absl::InvalidArgumentError("empty dictionary entry");
  }
  return absl::OkStatus();
}

std::string RawId(std::span<const uint8_t> bytes) { return Sha256Hex(bytes).substr(0, 20); }

CorpusEntry MakeEntry(std::vector<uint8_t> bytes, CoverageSet coverage, uint64_t exec_cost,
                      Origin origin) {
  CorpusEntry e;
  e.id = RawId(bytes);
  e.bytes = std::move(bytes);
  e.coverage = std::move(coverage);
  e.exec_cost = exec_cost;
  e.origin = origin;
  return e;
}

CorpusEntry EntryFromSnapshot(const Snapshot& s, uint64_t max_instrs) {
  CorpusEntry e;
  e.id = s.id;
  e.origin = s.metadata.origin;
  e.quarantined = s.metadata.HasTag(kQuarantineTag);
  if (const MemoryMapping* code = s.FindMapping(s.registers.rip)) {
    size_t n = code->data.size();
    while (n > 0 && code->data[n - 1] == 0) --n;
    e.bytes.assign(code->data.begin(), code->data.begin() + n);
  }
  InterpResult r = InterpRun(s, ExecLimits{max_instrs, kDefaultCpuTimeLimitMs}, true);
  e.coverage = std::move(r.coverage);
  e.exec_cost = r.instr_count;
  return e;
}

uint32_t OperandFormFeature(const Instr& instr) {
  uint32_t form = 0;
  bool extended = false;
  for (size_t i = 0; i < instr.operands.size() && i < 2; ++i) {
    uint32_t kind = 0;
    if (const auto* r = std::get_if<RegOperand>(&instr.operands[i])) {
      kind = 1;
      extended |= r->reg >= 8;
    } else if (std::holds_alternative<ImmOperand>(instr.operands[i])) {
      kind = 2;
    } else {
      const MemOperand& m = std::get<MemOperand>(instr.operands[i]);
      kind = 3;
      uint32_t mem = m.base == kBaseRip ? 4 : m.base == kBaseNone ? 5 : m.disp_bytes == 0 ? 1
                                            : m.disp_bytes == 1 ? 2 : 3;
      form |= mem << 4;
      extended |= m.base >= 8 && m.base < 16;
    }
    form |= kind << (2 * i);
  }
  if (extended) form |= 0x80;
  return kFeatureOperandForm | static_cast<uint32_t>(instr.opcode) * 256 | form;
}

ProxyResult RunProxy(Proxy proxy, std::span<const uint8_t> bytes, uint64_t max_instrs) {
  ProxyResult out;
  if (proxy == Proxy::kDecoder) {
    const DecodedProgram p = DecodeProgram(bytes);
    for (const Instr& i : p.instrs) {
      out.coverage.push_back(InstrFeature(i));
      out.coverage.push_back(OperandFormFeature(i));
    }
    if (p.error) out.coverage.push_back(kFeatureDecodeError | static_cast<uint32_t>(p.error->kind));
    NormalizeCoverage(out.coverage);
    out.exec_cost = p.instrs.size();
    return out;
  }
  AddressSpace mem;
  std::vector<uint8_t> page(kPageSize, 0);
  const size_t n = std::min(bytes.size(), static_cast<size_t>(kPageSize - 1));
  std::copy_n(bytes.begin(), n, page.begin());
  page[n] = 0xCC;
  (void)mem.Map(kCodeAddress, kPageSize);
  (void)mem.Write(kCodeAddress, page);
  (void)mem.Protect(kCodeAddress, kPageSize, kPermR | kPermX);
  RegisterState regs;
  regs.rip = kCodeAddress;
  ExecResult r = Execute(mem, regs, max_instrs, nullptr, &out.coverage);
  out.exec_cost = r.instr_count;
  out.timed_out = r.timed_out;
  return out;
}

std::string_view MutationKindName(MutationKind k) { return kMutationNames[static_cast<int>(k)]; }

std::vector<uint8_t> Mutate(std::span<const uint8_t> bytes, Rng& rng,
                            const MutationContext& context, MutationKind* applied) {
  std::vector<MutationKind> kinds = {MutationKind::kBitFlip, MutationKind::kByteReplace,
                                     MutationKind::kByteInsert, MutationKind::kByteDelete,
                                     MutationKind::kDuplicateRange};
  if (context.dictionary != nullptr && !context.dictionary->empty()) {
    kinds.push_back(MutationKind::kDictionaryInsert);
  }
  if (context.corpus != nullptr && !context.corpus->empty()) {
    kinds.push_back(MutationKind::kCrossover);
  }
  const MutationKind kind = kinds[rng.Uniform(kinds.size())];
  if (applied != nullptr) *applied = kind;

  std::vector<uint8_t> out(bytes.begin(), bytes.end());
  const size_t len = out.size();
  auto random_byte = [&] { return static_cast<uint8_t>(rng.Uniform(256)); };
  switch (kind) {
    case MutationKind::kBitFlip:
      if (len > 0) out[rng.Uniform(len)] ^= static_cast<uint8_t>(1u << rng.Uniform(8));
      break;
    case MutationKind::kByteReplace:
      if (len > 0) out[rng.Uniform(len)] = random_byte();
      break;
    case MutationKind::kByteInsert: {
      const size_t pos = rng.Uniform(len + 1);
      out.insert(out.begin() + pos, random_byte());
      break;
    }
    case MutationKind::kByteDelete:
      if (len > 0) out.erase(out.begin() + rng.Uniform(len));
      break;
    case MutationKind::kDuplicateRange:
      if (len > 0) {
        const size_t start = rng.Uniform(len);
        const size_t n = 1 + rng.Uniform(std::min(len - start, kMaxDuplicate));
        const size_t pos = rng.Uniform(len + 1);
        std::vector<uint8_t> copy(out.begin() + start, out.begin() + start + n);
        out.insert(out.begin() + pos, copy.begin(), copy.end());
      }
      break;
    case MutationKind::kDictionaryInsert: {
      const auto& entry = (*context.dictionary)[rng.Uniform(context.dictionary->size())];
      // Entries are whole instructions; insert them between instructions.
      const std::vector<size_t> boundaries = InstrBoundaries(out);
      const size_t pos = boundaries[rng.Uniform(boundaries.size())];
      out.insert(out.begin() + pos, entry.begin(), entry.end());
      break;
    }
    case MutationKind::kCrossover: {
      const auto& other = (*context.corpus)[rng.Uniform(context.corpus->size())].bytes;
      const size_t cut = rng.Uniform(len + 1);
      const size_t from = rng.Uniform(other.size() + 1);
      out.resize(cut);
      out.insert(out.end(), other.begin() + from, other.end());
      break;
    }
  }
  if (out.size() > context.max_len) out.resize(std::max<size_t>(context.max_len, 1));
  if (out.empty()) out.push_back(random_byte());
  return out;
}

FuzzResult FuzzLoop(const FuzzConfig& config) {
  FuzzResult result;
  Rng rng(config.rng_seed);
  FeatureBitmap covered;
  const Origin origin =
      config.proxy == Proxy::kDecoder ? Origin::kFuzzProxyDecoder : Origin::kFuzzProxyInterp;
  const size_t max_len = std::clamp<size_t>(config.max_len, 1, kPageSize - 1);
  uint64_t iteration = 0;

  auto evaluate = [&](std::vector<uint8_t> bytes, std::string_view action) {
    ProxyResult r = RunProxy(config.proxy, bytes, config.proxy_max_instrs);
    ++result.executions;
    LoopLogRecord rec;
    rec.iteration = iteration++;
    rec.action = std::string(action);
    if (!r.timed_out) {
      rec.new_features = CountNew(r.coverage, covered);
      if (rec.new_features > 0) {
        for (uint32_t f : r.coverage) covered.Insert(f);
        rec.admitted = true;
        result.corpus.push_back(MakeEntry(std::move(bytes), std::move(r.coverage), r.exec_cost,
                                          origin));
        rec.id = result.corpus.back().id;
      }
    }
    result.log.push_back(std::move(rec));
    result.union_sizes.push_back(covered.size());
  };

  std::vector<std::vector<uint8_t>> seeds = config.seed_corpus;
  if (seeds.empty()) seeds.push_back({0x90});
  for (auto& seed : seeds) {
    if (seed.size() > max_len) seed.resize(max_len);
    if (!seed.empty()) evaluate(seed, "seed");
  }
  // Seeds that added nothing still serve as parents until something is
  // admitted.
  std::vector<CorpusEntry> fallback;
  for (const auto& seed : seeds) {
    if (!seed.empty()) fallback.push_back(MakeEntry(seed, {}, 0, origin));
  }
  if (fallback.empty()) fallback.push_back(MakeEntry({0x90}, {}, 0, origin));

  for (uint64_t i = 0; i < config.budget; ++i) {
    const std::vector<CorpusEntry>& pool = result.corpus.empty() ? fallback : result.corpus;
    const CorpusEntry& parent = pool[rng.Uniform(pool.size())];
    MutationKind kind;
    std::vector<uint8_t> child =
        Mutate(parent.bytes, rng, MutationContext{max_len, &config.dictionary, &pool}, &kind);
    evaluate(std::move(child), MutationKindName(kind));
  }
  return result;
}

std::string LoopLogToNdjson(const std::vector<LoopLogRecord>& log) {
  std::string out;
  for (const LoopLogRecord& r : log) {
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["action"] = r.action;
    j["admitted"] = r.admitted;
    j["new_features"] = r.new_features;
    if (r.admitted) j["id"] = r.id;
    absl::StrAppend(&out, j.dump(), "\n");
  }
  return out;
}

std::vector<std::vector<uint8_t>> BuildDictionary(
    const std::vector<std::vector<uint8_t>>& samples) {
  std::set<std::vector<uint8_t>> unique;
  for (const auto& s : samples) {
    for (const Instr& i : DecodeProgram(s).instrs) {
      if (i.opcode == Opcode::kInt3) continue;
      unique.insert(i.raw);
    }
  }
  return {unique.begin(), unique.end()};
}

absl::StatusOr<std::vector<std::vector<uint8_t>>> ParseDictionary(std::string_view text) {
  std::vector<std::vector<uint8_t>> out;
  int line_no = 0;
  for (absl::string_view line : absl::StrSplit(std::string(text), '\n')) {
    ++line_no;
    std::string compact;
    for (char c : line) {
      if (c == '#') break;
      if (!isspace(static_cast<unsigned char>(c))) compact.push_back(c);
    }
    if (compact.empty()) continue;
    auto bytes = ParseHexBytes(compact);
    if (!bytes.ok() || bytes->empty()) {
      return absl::InvalidArgumentError(absl::StrCat("dictionary line ", line_no, ": bad hex"));
    }
    out.push_back(*std::move(bytes));
  }
  return out;
}

std::string DictionaryToText(const std::vector<std::vector<uint8_t>>& dictionary) {
  std::string out;
  for (const auto& d : dictionary) absl::StrAppend(&out, HexBytes(d), "\n");
  return out;
}

CoverageSet UnionCoverage(const std::vector<CorpusEntry>& corpus) {
  CoverageSet out;
  for (const CorpusEntry& e : corpus) out.insert(out.end(), e.coverage.begin(), e.coverage.end());
  NormalizeCoverage(out);
  return out;
}

std::vector<CorpusEntry> Distill(const std::vector<CorpusEntry>& corpus) {
  std::vector<size_t> keep;
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].quarantined) keep.push_back(i);
  }
  std::vector<CorpusEntry> out;
  for (size_t i : GreedyCover(corpus, std::move(keep), corpus.size())) out.push_back(corpus[i]);
  return out;
}

std::vector<CorpusEntry> GreedyBestN(const std::vector<CorpusEntry>& corpus, size_t n) {
  std::vector<CorpusEntry> out;
  for (size_t i : GreedyCover(corpus, {}, n)) out.push_back(corpus[i]);
  return out;
}

absl::Status WriteRawCorpus(const std::string& dir, const std::vector<CorpusEntry>& corpus,
                            const std::vector<LoopLogRecord>* log) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return absl::InternalError(absl::StrCat("create ", dir, ": ", ec.message()));
  auto write = [](const std::filesystem::path& path, std::string_view data) -> absl::Status {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) return absl::InternalError(absl::StrCat("write ", path.string()));
    return absl::OkStatus();
  };
  for (const CorpusEntry& e : corpus) {
    absl::Status st = write(std::filesystem::path(dir) / absl::StrCat(e.id, ".raw"),
                            std::string_view(reinterpret_cast<const char*>(e.bytes.data()),
                                             e.bytes.size()));
    if (!st.ok()) return st;
  }
  if (log != nullptr) {
    return write(std::filesystem::path(dir) / "loop_log.ndjson", LoopLogToNdjson(*log));
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<std::vector<uint8_t>>> ReadRawCorpus(const std::string& dir) {
  std::error_code ec;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".raw") {
      files.push_back(entry.path());
    }
  }
  if (ec) return absl::NotFoundError(absl::StrCat("read ", dir, ": ", ec.message()));
  std::sort(files.begin(), files.end());
  std::vector<std::vector<uint8_t>> out;
  for (const auto& path : files) {
    std::ifstream f(path, std::ios::binary);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (!f.eof() && f.fail()) return absl::InternalError(absl::StrCat("read ", path.string()));
    out.push_back(std::move(bytes));
  }
  return out;
}

}  // namespace corefuzz
