// modfuse/pipeline.cpp

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

#include "modfuse/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

namespace fs = std::filesystem;

const std::vector<Sample>& pick_split(const Dataset& ds,
                                      const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "valid") return ds.valid;
  if (split == "test") return ds.test;
  throw ConfigError("unknown split '" + split + "'");
}

}  // namespace

RunTrainOutput run_train(const RunConfig& cfg) {
  cfg.validate();
  const std::vector<ManifestRecord> records = load_manifest(cfg.manifest_path);
  const Vocabulary vocab = Vocabulary::build(train_sentences(records));
  const Dataset data = load_dataset(records, cfg.classes, vocab);

  fs::create_directories(cfg.out_dir);

  Tensor embedding_init;
  if (!cfg.glove_path.empty()) {
    Rng glove_rng(cfg.train.seed ^ 0xd1f9a5u);
    embedding_init = build_embeddings(vocab, cfg.glove_path,
                                      cfg.model.train_embeddings, glove_rng)
                         .table;
  }

  ModelConfig model_cfg = cfg.model;
  TrainResult result =
      train_model(model_cfg, vocab.size(), data, cfg.train,
                  embedding_init.defined() ? &embedding_init : nullptr);

  RunTrainOutput out;
  out.checkpoint_path = (fs::path(cfg.out_dir) / "model.ckpt").string();
  out.history_path = (fs::path(cfg.out_dir) / "history.csv").string();
  out.vocab_path = (fs::path(cfg.out_dir) / "vocab.txt").string();
  save_checkpoint(out.checkpoint_path, result.best_model, vocab, cfg.classes);
  write_history(out.history_path, result.history);
  vocab.save(out.vocab_path);
  out.best_val_acc = result.best_val_acc;
  out.epochs_run = result.epochs_run;
  return out;
}

namespace {

std::vector<std::vector<double>> member_probs(const Checkpoint& ckpt,
                                              const std::vector<Sample>& set) {
  std::vector<std::vector<double>> probs;
  probs.reserve(set.size());
  for (const Sample& s : set)
    probs.push_back(ckpt.model.predict_probs(s.tokens, s.mel));
  return probs;
}

struct EnsembleEval {
  std::vector<Sample> const* samples;
  std::vector<std::vector<double>> probs;  // averaged
  std::vector<int> predictions;
};

EnsembleEval ensemble_eval(const RunConfig& cfg,
                           const std::vector<std::string>& checkpoint_paths,
                           const std::string& split, Dataset& data_storage) {
  if (checkpoint_paths.empty())
    throw ConfigError("eval: no checkpoints given");
  if (static_cast<int>(checkpoint_paths.size()) > cfg.ensemble_size)
    throw ConfigError("eval: " + std::to_string(checkpoint_paths.size()) +
                      " checkpoints exceed the ensemble bound of " +
                      std::to_string(cfg.ensemble_size));

  const std::vector<ManifestRecord> records = load_manifest(cfg.manifest_path);

  std::vector<std::vector<std::vector<double>>> bag;
  bool first = true;
  for (const std::string& path : checkpoint_paths) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.classes != cfg.classes)
      throw DataError("eval: checkpoint " + path +
                      " was trained on a different class list");
    Dataset data = load_dataset(records, cfg.classes, ckpt.vocab);
    if (first) {
      data_storage = std::move(data);
      first = false;
      bag.push_back(member_probs(ckpt, pick_split(data_storage, split)));
    } else {
      bag.push_back(member_probs(ckpt, pick_split(data, split)));
    }
  }

  EnsembleEval out;
  out.samples = &pick_split(data_storage, split);
  out.probs = ensemble_average(bag);
  out.predictions.reserve(out.probs.size());
  for (const auto& p : out.probs) {
    int best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    out.predictions.push_back(best);
  }
  return out;
}

}  // namespace

RunEvalOutput run_eval(const RunConfig& cfg,
                       const std::vector<std::string>& checkpoint_paths,
                       const std::string& split) {
  Dataset data;
  EnsembleEval ev = ensemble_eval(cfg, checkpoint_paths, split, data);

  std::vector<int> truth;
  truth.reserve(ev.samples->size());
  for (const Sample& s : *ev.samples) truth.push_back(s.label);

  RunEvalOutput out;
  out.report = prf(confusion(truth, ev.predictions,
                             static_cast<int>(cfg.classes.size())));

  fs::create_directories(cfg.out_dir);
  out.report_txt_path =
      (fs::path(cfg.out_dir) / ("report_" + split + ".txt")).string();
  out.report_json_path =
      (fs::path(cfg.out_dir) / ("report_" + split + ".json")).string();
  out.confusion_csv_path =
      (fs::path(cfg.out_dir) / ("confusion_" + split + ".csv")).string();

  std::ofstream txt(out.report_txt_path, std::ios::binary);
  if (!txt) throw DataError("eval: cannot write " + out.report_txt_path);
  txt << render_report(out.report, cfg.classes);
  std::ofstream js(out.report_json_path, std::ios::binary);
  if (!js) throw DataError("eval: cannot write " + out.report_json_path);
  js << report_to_json(out.report, cfg.classes) << "\n";
  write_confusion_csv(out.confusion_csv_path, out.report.matrix, cfg.classes);
  return out;
}

std::vector<Prediction> run_predict(
    const RunConfig& cfg, const std::vector<std::string>& checkpoint_paths,
    const std::string& split) {
  Dataset data;
  EnsembleEval ev = ensemble_eval(cfg, checkpoint_paths, split, data);
  std::vector<Prediction> out;
  out.reserve(ev.samples->size());
  for (std::size_t i = 0; i < ev.samples->size(); ++i) {
    Prediction p;
    p.id = (*ev.samples)[i].id;
    p.predicted_label =
        cfg.classes[static_cast<std::size_t>(ev.predictions[i])];
    p.probs = ev.probs[i];
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace modfuse
