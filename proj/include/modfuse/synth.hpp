// modfuse/synth.hpp

// Copyright 2026  The modfuse authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MODFUSE_SYNTH_HPP_
#define MODFUSE_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "modfuse/manifest.hpp"

namespace modfuse {

// Synthetic two-modality benchmark. Each sample carries one linguistic bit
// (which keyword-family pair appears in the sentence) and one acoustic bit
// (which mel band pair carries the energy); they combine by XOR into the
// 4-class label (high bit linguistic, low bit the XOR), so either modality
// alone narrows the label to a coin flip at best.
struct SynthConfig {
  int n_train = 200;
  int n_valid = 100;
  int n_test = 0;
  std::uint64_t seed = 7;
  std::string out_dir;
};

// Class names of the generated task, "c0".."c3".
const std::vector<std::string>& synth_classes();

// Writes mel CSVs plus manifest.jsonl under out_dir and returns the
// records. Classes are balanced within each split (count/4 each, +-1) and
// the output is a pure function of the config.
std::vector<ManifestRecord> gen_synth(const SynthConfig& cfg);

}  // namespace modfuse

#endif  // MODFUSE_SYNTH_HPP_
