// modfuse/training.hpp

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

#ifndef MODFUSE_TRAINING_HPP_
#define MODFUSE_TRAINING_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "modfuse/model.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers mirror the parameter list they were
// created for, in the same enumeration order.
class Adam {
 public:
  Adam(const std::vector<NamedTensor>& params, AdamConfig cfg);

  // One update over the parameters' accumulated gradients. A non-finite
  // gradient aborts and names the offending parameter.
  void step(const std::vector<NamedTensor>& params, double lr);

  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales every gradient so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm);

enum class ScheduleAction { kContinue, kDecayed, kStop };

std::string schedule_action_name(ScheduleAction a);

// Plateau handling: the first non-improving epochs spend the (at most two)
// halvings; only after both are used does the early-stop counter run.
// Improvement is strict and resets the counter.
struct ScheduleState {
  double lr = 1e-4;
  double best_acc = -1.0;
  int decays_used = 0;
  int epochs_since_improve = 0;
  bool stopped = false;
};

struct ScheduleConfig {
  double decay_factor = 0.5;
  int max_decays = 2;
  int patience = 10;
};

ScheduleAction schedule_step(ScheduleState& state, double val_acc,
                             const ScheduleConfig& cfg);

// One labelled utterance, fully preprocessed.
struct Sample {
  std::string id;
  std::vector<int> tokens;
  Tensor mel;  // [T, 80]
  int label = 0;
};

struct Dataset {
  std::vector<Sample> train, valid, test;
  int num_classes = 0;
};

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 200;
  double lr = 1e-4;
  ScheduleConfig schedule;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // mean cross-entropy over the epoch's samples
  double val_acc = 0;
  double lr = 0;          // learning rate after this epoch's schedule action
  std::string action;     // continue | decayed | stop
};

struct TrainResult {
  Model best_model;  // snapshot at the best validation accuracy
  std::vector<EpochRecord> history;
  double best_val_acc = 0;
  int epochs_run = 0;
};

// Full optimization run: shuffled mini-batches, per-epoch validation
// accuracy driving the schedule, best-on-validation snapshotting.
// Deterministic given (cfg, seed). embedding_init, when given, replaces the
// random embedding table (GloVe-seeded runs).
TrainResult train_model(const ModelConfig& model_cfg, int vocab_size,
                        const Dataset& data, const TrainConfig& cfg,
                        const Tensor* embedding_init = nullptr);

double evaluate_accuracy(const Model& model, const std::vector<Sample>& set);

// History persists as one CSV line per epoch.
void write_history(const std::string& path,
                   const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history(const std::string& path);

// Arithmetic mean of per-sample probability vectors across runs. Members
// must agree on sample count and class count.
std::vector<std::vector<double>> ensemble_average(
    const std::vector<std::vector<std::vector<double>>>& bag);

}  // namespace modfuse

#endif  // MODFUSE_TRAINING_HPP_
