// modfuse/synth.cpp

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

#include "modfuse/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

namespace fs = std::filesystem;

// Two keyword families per linguistic bit; the family within a bit is free
// variation, only the bit carries label information.
const std::vector<std::vector<std::string>>& keyword_families() {
  static const std::vector<std::vector<std::string>> families = {
      {"steady", "plain", "level", "mild"},
      {"calm", "gentle", "soft", "quiet"},
      {"fierce", "storm", "blazing", "wild"},
      {"gloomy", "shadow", "murky", "harsh"},
  };
  return families;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> fillers = {
      "the", "it",    "was",   "so",    "and",  "a",       "bit",  "quite",
      "really", "kind", "of",  "today", "this", "morning", "voice", "tone"};
  return fillers;
}

std::string make_sentence(int family, Rng& rng) {
  const auto& fam = keyword_families()[static_cast<std::size_t>(family)];
  const auto& fill = filler_words();
  const int n_fill = rng.uniform_int(4, 8);
  const int n_key = rng.uniform_int(2, 3);
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(n_fill + n_key));
  for (int i = 0; i < n_fill; ++i)
    words.push_back(fill[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(fill.size()) - 1))]);
  for (int i = 0; i < n_key; ++i) {
    const std::string& kw = fam[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(fam.size()) - 1))];
    const int pos = rng.uniform_int(0, static_cast<int>(words.size()));
    words.insert(words.begin() + pos, kw);
  }
  std::string s;
  for (const std::string& w : words) {
    if (!s.empty()) s += " ";
    s += w;
  }
  return s;
}

// [T, 80] matrix with the energy concentrated in one of four 20-channel
// bands; values stay inside [0,1].
Tensor make_band_mel(int band, Rng& rng) {
  const int t = rng.uniform_int(8, 16);
  const int c = 80;
  std::vector<double> v(static_cast<std::size_t>(t) * c);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < c; ++j) {
      const bool hot = j >= band * 20 && j < (band + 1) * 20;
      const double mean = hot ? 0.75 : 0.15;
      v[static_cast<std::size_t>(i) * c + j] =
          std::clamp(rng.normal(mean, 0.05), 0.0, 1.0);
    }
  }
  return Tensor({t, c}, std::move(v));
}

void gen_split(const std::string& split, int count, Rng& rng,
               const std::string& mel_dir,
               std::vector<ManifestRecord>& records) {
  for (int i = 0; i < count; ++i) {
    const int label = i % 4;  // balanced up to the division remainder
    // Class bits: high bit = linguistic, low bit = linguistic XOR acoustic.
    // Each modality alone sees its own bit only, worth a coin flip of the
    // four classes; the pair pins the class exactly.
    const int text_bit = label >> 1;
    const int audio_bit = text_bit ^ (label & 1);
    const int family = text_bit * 2 + rng.uniform_int(0, 1);
    const int band = audio_bit * 2 + rng.uniform_int(0, 1);

    ManifestRecord r;
    char idbuf[40];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", split.c_str(), i);
    r.id = idbuf;
    r.label = synth_classes()[static_cast<std::size_t>(label)];
    r.text = make_sentence(family, rng);
    r.split = split;
    r.mel_path = (fs::path(mel_dir) / (r.id + ".csv")).string();
    write_mel_csv(r.mel_path, make_band_mel(band, rng));
    records.push_back(std::move(r));
  }
}

}  // namespace

const std::vector<std::string>& synth_classes() {
  static const std::vector<std::string> classes = {"c0", "c1", "c2", "c3"};
  return classes;
}

std::vector<ManifestRecord> gen_synth(const SynthConfig& cfg) {
  const int total = cfg.n_train + cfg.n_valid + cfg.n_test;
  if (total < 8) throw ConfigError("gen_synth: need at least 8 samples");
  if (cfg.n_train < 0 || cfg.n_valid < 0 || cfg.n_test < 0)
    throw ConfigError("gen_synth: negative split size");
  if (cfg.out_dir.empty()) throw ConfigError("gen_synth: out_dir is required");

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  const std::string mel_dir = (fs::path(cfg.out_dir) / "mel").string();
  fs::create_directories(mel_dir, ec);
  if (!fs::is_directory(mel_dir))
    throw DataError("gen_synth: cannot create output directory " + mel_dir);

  Rng rng(cfg.seed);
  std::vector<ManifestRecord> records;
  records.reserve(static_cast<std::size_t>(total));
  gen_split("train", cfg.n_train, rng, mel_dir, records);
  gen_split("valid", cfg.n_valid, rng, mel_dir, records);
  gen_split("test", cfg.n_test, rng, mel_dir, records);
  save_manifest((fs::path(cfg.out_dir) / "manifest.jsonl").string(), records);
  return records;
}

}  // namespace modfuse
