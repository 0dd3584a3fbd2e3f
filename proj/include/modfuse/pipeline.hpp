// modfuse/pipeline.hpp

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

#ifndef MODFUSE_PIPELINE_HPP_
#define MODFUSE_PIPELINE_HPP_

#include <string>
#include <vector>

#include "modfuse/manifest.hpp"
#include "modfuse/metrics.hpp"
#include "modfuse/model.hpp"
#include "modfuse/training.hpp"

namespace modfuse {

struct RunTrainOutput {
  std::string checkpoint_path;
  std::string history_path;
  std::string vocab_path;
  double best_val_acc = 0;
  int epochs_run = 0;
};

// Loads the manifest, builds the vocabulary from the train split, trains one
// model and writes checkpoint + history + vocabulary under out_dir.
RunTrainOutput run_train(const RunConfig& cfg);

struct RunEvalOutput {
  EvalReport report;
  std::string report_txt_path;
  std::string report_json_path;
  std::string confusion_csv_path;
};

// Ensemble evaluation over at most cfg.ensemble_size checkpoints: softmax
// probabilities are averaged per sample, then argmax'd into an EvalReport
// for the chosen split.
RunEvalOutput run_eval(const RunConfig& cfg,
                       const std::vector<std::string>& checkpoint_paths,
                       const std::string& split);

struct Prediction {
  std::string id;
  std::string predicted_label;
  std::vector<double> probs;
};

std::vector<Prediction> run_predict(
    const RunConfig& cfg, const std::vector<std::string>& checkpoint_paths,
    const std::string& split);

}  // namespace modfuse

#endif  // MODFUSE_PIPELINE_HPP_
