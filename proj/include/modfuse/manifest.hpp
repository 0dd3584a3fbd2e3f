// modfuse/manifest.hpp

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

#ifndef MODFUSE_MANIFEST_HPP_
#define MODFUSE_MANIFEST_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "modfuse/audio_features.hpp"
#include "modfuse/encoders.hpp"
#include "modfuse/text_features.hpp"
#include "modfuse/training.hpp"

namespace modfuse {

// One dataset record. Manifests are JSON-lines files: one object per line
// with fields id, label, text, split and optionally wav_path / mel_path.
struct ManifestRecord {
  std::string id;
  std::string label;
  std::string text;
  std::string wav_path;  // source audio, consumed by feature extraction
  std::string mel_path;  // extracted features, consumed by training/eval
  std::string split;     // train | valid | test
};

std::vector<ManifestRecord> load_manifest(const std::string& path);
void save_manifest(const std::string& path,
                   const std::vector<ManifestRecord>& records);

// Flat key=value run configuration ('#' starts a comment). Unknown keys are
// rejected. The MODFUSE_OUT_ROOT environment variable re-roots out_dir.
struct RunConfig {
  ModelConfig model;
  MelConfig mel;
  std::vector<std::string> classes;
  std::string manifest_path;
  std::string out_dir;
  std::string glove_path;
  TrainConfig train;
  int ensemble_size = 10;  // upper bound on checkpoints merged at eval

  void validate() const;
};

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});
void save_run_config(const std::string& path, const RunConfig& cfg);

// One "key = value" assignment, the unit both the file parser and CLI
// --set overrides are built from. Unknown keys are config errors.
void apply_run_config_entry(RunConfig& cfg, const std::string& key,
                            const std::string& value);

// classes -> num_classes sync, MODFUSE_OUT_ROOT re-rooting, validation.
void finalize_run_config(RunConfig& cfg);

// Tokenizes, encodes and loads mel matrices for every record; labels must
// appear in `classes` and referenced mel files must exist.
Dataset load_dataset(const std::vector<ManifestRecord>& records,
                     const std::vector<std::string>& classes,
                     const Vocabulary& vocab);

// Sentences of the train split, in manifest order (vocabulary source).
std::vector<std::string> train_sentences(
    const std::vector<ManifestRecord>& records);

struct ExtractStats {
  int extracted = 0;
  int skipped = 0;  // cache hits
  std::vector<std::pair<std::string, std::string>> failures;  // id, reason
};

// Populates mel_path for records that carry a wav_path, writing mel CSVs
// under mel_dir. Idempotent: a fingerprint sidecar (config + audio bytes)
// skips up-to-date outputs. Unreadable inputs land in the failure report
// and the run continues.
ExtractStats extract_features(std::vector<ManifestRecord>& records,
                              const MelConfig& cfg,
                              const std::string& mel_dir);

}  // namespace modfuse

#endif  // MODFUSE_MANIFEST_HPP_
