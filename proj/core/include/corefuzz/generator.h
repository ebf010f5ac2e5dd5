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

#ifndef COREFUZZ_GENERATOR_H_
#define COREFUZZ_GENERATOR_H_

#include <cstdint>
#include <vector>

#include "corefuzz/isa.h"
#include "corefuzz/rng.h"

namespace corefuzz {

// Generation-based source of random valid instruction sequences.
//
// Emits between 1 and `max_instrs` instructions drawn from IsaModel (never
// INT3). Branch targets are always instruction boundaries inside the
// sequence or exactly its end. Deterministic in `seed`.
std::vector<uint8_t> GenRandomProgram(uint64_t seed, int max_instrs);

// A single random legal instruction, as used by the generator.
Instr GenRandomInstr(Rng& rng);

}  // namespace corefuzz

#endif  // COREFUZZ_GENERATOR_H_
