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

#include "corefuzz/fault_backend.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "corefuzz/rng.h"
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

bool Contains(const std::vector<Opcode>& ops, Opcode op) {
  return std::find(ops.begin(), ops.end(), op) != ops.end();
}

absl::Status Invalid(const std::string& what) { return absl::InvalidArgumentError(what); }

absl::Status CheckKeys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      return Invalid(absl::StrCat("unknown key '", key, "' in ", std::string(where)));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<Opcode>> OpcodesField(const json& e, const char* key) {
  if (!e.contains(key)) return Invalid(absl::StrCat("effect needs '", key, "'"));
  const json& v = e[key];
  std::vector<Opcode> out;
  auto add = [&](const json& item) -> absl::Status {
    if (!item.is_string()) return Invalid(absl::StrCat("'", key, "' must be a string"));
    absl::StatusOr<std::vector<Opcode>> ops = ResolveOpcodes(item.get<std::string>());
    if (!ops.ok()) return ops.status();
    for (Opcode op : *ops) {
      if (!Contains(out, op)) out.push_back(op);
    }
    return absl::OkStatus();
  };
  if (v.is_array()) {
    for (const json& item : v) {
      if (absl::Status st = add(item); !st.ok()) return st;
    }
  } else if (absl::Status st = add(v); !st.ok()) {
    return st;
  }
  if (out.empty()) return Invalid(absl::StrCat("'", key, "' is empty"));
  return out;
}

absl::StatusOr<uint64_t> UintField(const json& e, const char* key) {
  if (!e.contains(key) || !e[key].is_number_unsigned()) {
    return Invalid(absl::StrCat("effect needs non-negative integer '", key, "'"));
  }
  return e[key].get<uint64_t>();
}

absl::StatusOr<FaultEffect> ParseEffect(const json& e) {
  if (!e.is_object() || !e.contains("type") || !e["type"].is_string()) {
    return Invalid("effect must be an object with a string 'type'");
  }
  const std::string type = e["type"].get<std::string>();
  if (type == "BIT_FLIP_RESULT") {
    if (absl::Status st = CheckKeys(e, {"type", "opcode", "bit_index", "trigger_clear_bit"}, type);
        !st.ok()) {
      return st;
    }
    BitFlipResult f;
    absl::StatusOr<std::vector<Opcode>> ops = OpcodesField(e, "opcode");
    if (!ops.ok()) return ops.status();
    f.opcodes = *ops;
    absl::StatusOr<uint64_t> bit = UintField(e, "bit_index");
    if (!bit.ok()) return bit.status();
    f.bit_index = static_cast<int>(std::min<uint64_t>(*bit, 1000));
    if (e.contains("trigger_clear_bit")) {
      absl::StatusOr<uint64_t> t = UintField(e, "trigger_clear_bit");
      if (!t.ok()) return t.status();
      f.trigger_clear_bit = static_cast<int>(std::min<uint64_t>(*t, 1000));
    }
    return f;
  }
  if (type == "ILLEGAL_OVERSHOOT") {
    if (absl::Status st = CheckKeys(e, {"type", "skip_len"}, type); !st.ok()) return st;
    absl::StatusOr<uint64_t> n = UintField(e, "skip_len");
    if (!n.ok()) return n.status();
    return IllegalOvershoot{*n};
  }
  if (type == "STICKY_FLAG") {
    if (absl::Status st = CheckKeys(e, {"type", "flag"}, type); !st.ok()) return st;
    if (!e.contains("flag") || !e["flag"].is_string()) return Invalid("effect needs 'flag'");
    absl::StatusOr<uint64_t> flag = ParseFlags(e["flag"].get<std::string>());
    if (!flag.ok()) return flag.status();
    return StickyFlag{*flag};
  }
  if (type == "REP_UNDERSHOOT") {
    if (absl::Status st = CheckKeys(e, {"type", "min_count"}, type); !st.ok()) return st;
    absl::StatusOr<uint64_t> n = UintField(e, "min_count");
    if (!n.ok()) return n.status();
    return RepUndershoot{*n};
  }
  if (type == "HIDDEN_STATE_MISCOMPUTE") {
    if (absl::Status st =
            CheckKeys(e, {"type", "arm_opcode", "victim_opcode", "duration"}, type);
        !st.ok()) {
      return st;
    }
    HiddenStateMiscompute h;
    absl::StatusOr<std::vector<Opcode>> arm = OpcodesField(e, "arm_opcode");
    if (!arm.ok()) return arm.status();
    absl::StatusOr<std::vector<Opcode>> victim = OpcodesField(e, "victim_opcode");
    if (!victim.ok()) return victim.status();
    absl::StatusOr<uint64_t> duration = UintField(e, "duration");
    if (!duration.ok()) return duration.status();
    h.arm_opcodes = *arm;
    h.victim_opcodes = *victim;
    h.duration = *duration;
    return h;
  }
  if (type == "SKIP_SIDE_EFFECT") {
    if (absl::Status st = CheckKeys(e, {"type", "opcode", "effect_id"}, type); !st.ok()) {
      return st;
    }
    SkipSideEffectFault s;
    absl::StatusOr<std::vector<Opcode>> ops = OpcodesField(e, "opcode");
    if (!ops.ok()) return ops.status();
    s.opcodes = *ops;
    if (!e.contains("effect_id") || !e["effect_id"].is_string()) {
      return Invalid("effect needs 'effect_id'");
    }
    std::optional<SideEffect> effect = ParseSideEffect(e["effect_id"].get<std::string>());
    if (!effect) return Invalid("unknown effect_id");
    s.effect = *effect;
    return s;
  }
  return Invalid(absl::StrCat("unknown effect type '", type, "'"));
}

absl::StatusOr<FaultProfile> ParseProfile(const json& j) {
  if (!j.is_object()) return Invalid("profile must be an object");
  if (absl::Status st =
          CheckKeys(j, {"name", "active_cores", "activation_probability", "effect"}, "profile");
      !st.ok()) {
    return st;
  }
  FaultProfile p;
  if (!j.contains("name") || !j["name"].is_string()) return Invalid("profile needs 'name'");
  p.name = j["name"].get<std::string>();
  if (!j.contains("active_cores") || !j["active_cores"].is_array()) {
    return Invalid("profile needs 'active_cores' array");
  }
  for (const json& c : j["active_cores"]) {
    if (!c.is_number_unsigned()) return Invalid("core ids must be non-negative integers");
    p.active_cores.insert(c.get<int>());
  }
  if (j.contains("activation_probability")) {
    if (!j["activation_probability"].is_number()) {
      return Invalid("'activation_probability' must be a number");
    }
    p.activation_probability = j["activation_probability"].get<double>();
  }
  if (!j.contains("effect")) return Invalid("profile needs 'effect'");
  absl::StatusOr<FaultEffect> effect = ParseEffect(j["effect"]);
  if (!effect.ok()) return effect.status();
  p.effect = *std::move(effect);
  if (absl::Status st = ValidateProfile(p); !st.ok()) return st;
  return p;
}

json OpcodesJson(const std::vector<Opcode>& ops) {
  if (ops.size() == 1) return std::string(OpcodeName(ops[0]));
  json a = json::array();
  for (Opcode op : ops) a.push_back(std::string(OpcodeName(op)));
  return a;
}

json EffectJson(const FaultEffect& e) {
  json j = json::object();
  j["type"] = std::string(EffectName(e));
  std::visit(Overloaded{
                 [&](const BitFlipResult& f) {
                   j["opcode"] = OpcodesJson(f.opcodes);
                   j["bit_index"] = f.bit_index;
                   if (f.trigger_clear_bit) j["trigger_clear_bit"] = *f.trigger_clear_bit;
                 },
                 [&](const IllegalOvershoot& f) { j["skip_len"] = f.skip_len; },
                 [&](const StickyFlag& f) { j["flag"] = FlagsToString(f.flag); },
                 [&](const RepUndershoot& f) { j["min_count"] = f.min_count; },
                 [&](const HiddenStateMiscompute& f) {
                   j["arm_opcode"] = OpcodesJson(f.arm_opcodes);
                   j["victim_opcode"] = OpcodesJson(f.victim_opcodes);
                   j["duration"] = f.duration;
                 },
                 [&](const SkipSideEffectFault& f) {
                   j["opcode"] = OpcodesJson(f.opcodes);
                   j["effect_id"] = std::string(SideEffectName(f.effect));
                 },
             },
             e);
  return j;
}

}  // namespace

std::string_view EffectName(const FaultEffect& e) {
  return std::visit(
      Overloaded{
          [](const BitFlipResult&) { return std::string_view("BIT_FLIP_RESULT"); },
          [](const IllegalOvershoot&) { return std::string_view("ILLEGAL_OVERSHOOT"); },
          [](const StickyFlag&) { return std::string_view("STICKY_FLAG"); },
          [](const RepUndershoot&) { return std::string_view("REP_UNDERSHOOT"); },
          [](const HiddenStateMiscompute&) { return std::string_view("HIDDEN_STATE_MISCOMPUTE"); },
          [](const SkipSideEffectFault&) { return std::string_view("SKIP_SIDE_EFFECT"); },
      },
      e);
}

std::set<Opcode> TargetOpcodes(const FaultEffect& e) {
  return std::visit(
      Overloaded{
          [](const BitFlipResult& f) { return std::set<Opcode>(f.opcodes.begin(), f.opcodes.end()); },
          [](const IllegalOvershoot&) { return std::set<Opcode>{Opcode::kUd2}; },
          // A sticky flag corrupts every flag writer; it conflicts with nothing
          // opcode-specific.
          [](const StickyFlag&) { return std::set<Opcode>{}; },
          [](const RepUndershoot&) { return std::set<Opcode>{Opcode::kMovsb, Opcode::kStosb}; },
          [](const HiddenStateMiscompute& f) {
            std::set<Opcode> s(f.arm_opcodes.begin(), f.arm_opcodes.end());
            s.insert(f.victim_opcodes.begin(), f.victim_opcodes.end());
            return s;
          },
          [](const SkipSideEffectFault& f) {
            return std::set<Opcode>(f.opcodes.begin(), f.opcodes.end());
          },
      },
      e);
}

absl::StatusOr<std::vector<Opcode>> ResolveOpcodes(std::string_view name) {
  if (std::optional<Opcode> op = ParseOpcode(name)) return std::vector<Opcode>{*op};
  std::vector<Opcode> out;
  const std::string prefix = absl::StrCat(std::string(name), "_");
  for (int i = 1; i < kNumOpcodes; ++i) {
    const std::string_view n = OpcodeName(static_cast<Opcode>(i));
    if (n.substr(0, prefix.size()) == prefix) out.push_back(static_cast<Opcode>(i));
  }
  if (out.empty()) return Invalid(absl::StrCat("unknown opcode '", std::string(name), "'"));
  return out;
}

absl::Status ValidateProfile(const FaultProfile& p) {
  if (p.name.empty()) return Invalid("profile name is empty");
  const std::string where = absl::StrCat("profile '", p.name, "': ");
  if (p.active_cores.empty()) return Invalid(where + "active_cores is empty");
  if (*p.active_cores.begin() < 0) return Invalid(where + "negative core id");
  if (!(p.activation_probability >= 0.0 && p.activation_probability <= 1.0)) {
    return Invalid(where + "activation_probability outside [0, 1]");
  }
  return std::visit(
      Overloaded{
          [&](const BitFlipResult& f) -> absl::Status {
            if (f.opcodes.empty()) return Invalid(where + "no target opcode");
            if (f.bit_index < 0 || f.bit_index > 63) return Invalid(where + "bit_index not in 0..63");
            if (f.trigger_clear_bit && (*f.trigger_clear_bit < 0 || *f.trigger_clear_bit > 63)) {
              return Invalid(where + "trigger bit not in 0..63");
            }
            return absl::OkStatus();
          },
          [&](const IllegalOvershoot& f) -> absl::Status {
            if (f.skip_len == 0 || f.skip_len > kMaxInstrLength) {
              return Invalid(where + "skip_len not in 1..15");
            }
            return absl::OkStatus();
          },
          [&](const StickyFlag& f) -> absl::Status {
            if (f.flag == 0 || (f.flag & (f.flag - 1)) != 0) {
              return Invalid(where + "flag must name exactly one flag");
            }
            return absl::OkStatus();
          },
          [&](const RepUndershoot& f) -> absl::Status {
            if (f.min_count < 1) return Invalid(where + "min_count must be >= 1");
            return absl::OkStatus();
          },
          [&](const HiddenStateMiscompute& f) -> absl::Status {
            if (f.arm_opcodes.empty() || f.victim_opcodes.empty()) {
              return Invalid(where + "arm and victim opcodes required");
            }
            if (f.duration < 1) return Invalid(where + "duration must be >= 1");
            return absl::OkStatus();
          },
          [&](const SkipSideEffectFault& f) -> absl::Status {
            if (f.opcodes.empty()) return Invalid(where + "no target opcode");
            return absl::OkStatus();
          },
      },
      p.effect);
}

absl::Status ValidateProfiles(const std::vector<FaultProfile>& profiles) {
  for (const FaultProfile& p : profiles) {
    if (absl::Status st = ValidateProfile(p); !st.ok()) return st;
  }
  for (size_t i = 0; i < profiles.size(); ++i) {
    const std::set<Opcode> a = TargetOpcodes(profiles[i].effect);
    for (size_t j = i + 1; j < profiles.size(); ++j) {
      const std::set<Opcode> b = TargetOpcodes(profiles[j].effect);
      bool shared_core = false;
      for (int core : profiles[i].active_cores) shared_core |= profiles[j].active_cores.count(core);
      if (!shared_core) continue;
      for (Opcode op : a) {
        if (b.count(op)) {
          return Invalid(absl::StrCat("profiles '", profiles[i].name, "' and '", profiles[j].name,
                                      "' both target ", std::string(OpcodeName(op)),
                                      " on a common core"));
        }
      }
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<FaultProfile>> ParseFaultProfiles(std::string_view json_text) {
  json j = json::parse(json_text.begin(), json_text.end(), nullptr, false);
  if (j.is_discarded()) return Invalid("fault profile file is not valid JSON");
  if (j.is_object() && j.contains("profiles")) {
    if (j.size() != 1) return Invalid("unexpected keys next to 'profiles'");
    j = json(j["profiles"]);
  }
  std::vector<FaultProfile> out;
  if (j.is_array()) {
    for (const json& item : j) {
      absl::StatusOr<FaultProfile> p = ParseProfile(item);
      if (!p.ok()) return p.status();
      out.push_back(*std::move(p));
    }
  } else {
    absl::StatusOr<FaultProfile> p = ParseProfile(j);
    if (!p.ok()) return p.status();
    out.push_back(*std::move(p));
  }
  if (absl::Status st = ValidateProfiles(out); !st.ok()) return st;
  return out;
}

absl::StatusOr<std::vector<FaultProfile>> LoadFaultProfiles(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseFaultProfiles(buf.str());
}

std::string FaultProfilesToJson(const std::vector<FaultProfile>& profiles) {
  json out = json::array();
  for (const FaultProfile& p : profiles) {
    json j = json::object();
    j["name"] = p.name;
    j["active_cores"] = std::vector<int>(p.active_cores.begin(), p.active_cores.end());
    j["activation_probability"] = p.activation_probability;
    j["effect"] = EffectJson(p.effect);
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

FaultHooks::FaultHooks(std::vector<FaultProfile> profiles, uint64_t seed, int core_id)
    : profiles_(std::move(profiles)),
      seed_(seed),
      core_id_(core_id),
      active_(profiles_.size(), false),
      broken_remaining_(profiles_.size(), 0) {}

void FaultHooks::BeginExecution() {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    const FaultProfile& p = profiles_[i];
    // One draw per (profile, execution); the draw is consumed even off-core
    // so that core scoping never shifts the sequence.
    const double draw =
        static_cast<double>(MixSeed(seed_, i, exec_counter_) >> 11) * 0x1.0p-53;
    active_[i] = p.active_cores.count(core_id_) > 0 && draw < p.activation_probability;
  }
  ++exec_counter_;
}

void FaultHooks::Reset() {
  exec_counter_ = 0;
  std::fill(active_.begin(), active_.end(), false);
  std::fill(broken_remaining_.begin(), broken_remaining_.end(), 0);
}

void FaultHooks::EndInstruction(const Instr& instr) {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    const auto* h = std::get_if<HiddenStateMiscompute>(&profiles_[i].effect);
    if (h == nullptr) continue;
    if (broken_remaining_[i] > 0) --broken_remaining_[i];
    if (active_[i] && Contains(h->arm_opcodes, instr.opcode)) broken_remaining_[i] = h->duration;
  }
}

uint64_t FaultHooks::AdjustResult(const Instr& instr, uint64_t result, uint64_t src) {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    if (const auto* f = std::get_if<BitFlipResult>(&profiles_[i].effect)) {
      if (!active_[i] || !Contains(f->opcodes, instr.opcode)) continue;
      if (f->trigger_clear_bit && ((src >> *f->trigger_clear_bit) & 1)) continue;
      result ^= uint64_t{1} << f->bit_index;
    } else if (const auto* h = std::get_if<HiddenStateMiscompute>(&profiles_[i].effect)) {
      // The broken state outlives the execution that armed it.
      if (broken_remaining_[i] > 0 && Contains(h->victim_opcodes, instr.opcode)) result ^= 1;
    }
  }
  return result;
}

uint64_t FaultHooks::AdjustFlags(const Instr& instr, uint64_t rflags) {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    const auto* f = std::get_if<StickyFlag>(&profiles_[i].effect);
    if (f != nullptr && active_[i]) rflags |= f->flag;
  }
  return rflags;
}

std::optional<uint64_t> FaultHooks::OnIllegal(const Instr& instr) {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    const auto* f = std::get_if<IllegalOvershoot>(&profiles_[i].effect);
    if (f != nullptr && active_[i]) return f->skip_len;
  }
  return std::nullopt;
}

uint64_t FaultHooks::RepIterations(const Instr& instr, uint64_t rcx) {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    const auto* f = std::get_if<RepUndershoot>(&profiles_[i].effect);
    if (f != nullptr && active_[i] && rcx >= f->min_count) return rcx - 1;
  }
  return rcx;
}

bool FaultHooks::SkipSideEffect(const Instr& instr, SideEffect effect) {
  for (size_t i = 0; i < profiles_.size(); ++i) {
    const auto* f = std::get_if<SkipSideEffectFault>(&profiles_[i].effect);
    if (f != nullptr && active_[i] && f->effect == effect && Contains(f->opcodes, instr.opcode)) {
      return true;
    }
  }
  return false;
}

FaultBackend::FaultBackend(std::vector<FaultProfile> profiles, uint64_t seed, int core_id,
                           std::string platform_id, uint64_t flags_mask)
    : FaultBackend(std::make_unique<FaultHooks>(std::move(profiles), seed, core_id), core_id,
                   std::move(platform_id), flags_mask) {}

FaultBackend::FaultBackend(std::unique_ptr<FaultHooks> hooks, int core_id,
                           std::string platform_id, uint64_t flags_mask)
    : InterpBackend(BackendDescriptor{BackendKind::kInterpFaulted, std::move(platform_id),
                                      core_id, flags_mask, {}},
                    hooks.get()),
      hooks_(std::move(hooks)) {
  executor_.set_on_exec([h = hooks_.get()] { h->BeginExecution(); });
}

absl::StatusOr<std::unique_ptr<FaultBackend>> MakeFaultBackend(
    const std::vector<FaultProfile>& profiles, uint64_t seed, int core_id,
    std::string platform_id) {
  if (absl::Status st = ValidateProfiles(profiles); !st.ok()) return st;
  return std::make_unique<FaultBackend>(profiles, seed, core_id, std::move(platform_id));
}

}  // namespace corefuzz
