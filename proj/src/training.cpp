// modfuse/training.cpp

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

#include "modfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "modfuse/error.hpp"

namespace modfuse {

Adam::Adam(const std::vector<NamedTensor>& params, AdamConfig cfg)
    : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const NamedTensor& p : params) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step(const std::vector<NamedTensor>& params, double lr) {
  if (params.size() != m_.size())
    throw Error("adam: parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;  // shared handle
    const auto& g = p.grad();
    auto& values = p.values_mut();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j]))
        throw Error("adam: non-finite gradient in parameter '" +
                    params[i].name + "'");
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

double clip_grad_norm(const std::vector<NamedTensor>& params,
                      double max_norm) {
  double sq = 0.0;
  for (const NamedTensor& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const NamedTensor& p : params) {
      Tensor t = p.tensor;
      for (double& x : t.grad_mut()) x *= factor;
    }
  }
  return norm;
}

std::string schedule_action_name(ScheduleAction a) {
  switch (a) {
    case ScheduleAction::kContinue: return "continue";
    case ScheduleAction::kDecayed: return "decayed";
    case ScheduleAction::kStop: return "stop";
  }
  return "?";
}

ScheduleAction schedule_step(ScheduleState& state, double val_acc,
                             const ScheduleConfig& cfg) {
  if (state.stopped) throw Error("schedule: already stopped");
  if (val_acc > state.best_acc) {
    state.best_acc = val_acc;
    state.epochs_since_improve = 0;
    return ScheduleAction::kContinue;
  }
  if (state.decays_used < cfg.max_decays) {
    state.lr *= cfg.decay_factor;
    ++state.decays_used;
    return ScheduleAction::kDecayed;
  }
  ++state.epochs_since_improve;
  if (state.epochs_since_improve >= cfg.patience) {
    state.stopped = true;
    return ScheduleAction::kStop;
  }
  return ScheduleAction::kContinue;
}

double evaluate_accuracy(const Model& model, const std::vector<Sample>& set) {
  if (set.empty()) throw DataError("evaluate: empty sample set");
  NoGradGuard no_grad;
  int correct = 0;
  for (const Sample& s : set) {
    Tensor logits = model.forward(s.tokens, s.mel, false, nullptr);
    const auto& z = logits.values();
    int best = 0;
    for (std::size_t i = 1; i < z.size(); ++i)
      if (z[i] > z[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    if (best == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainResult train_model(const ModelConfig& model_cfg, int vocab_size,
                        const Dataset& data, const TrainConfig& cfg,
                        const Tensor* embedding_init) {
  if (data.train.empty()) throw DataError("train: empty training split");
  if (data.valid.empty()) throw DataError("train: empty validation split");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  Rng rng(cfg.seed);
  Model model = Model::init(model_cfg, vocab_size, rng);
  if (embedding_init) {
    if (embedding_init->shape() != model.embedding.table.shape())
      throw DataError("train: embedding init " +
                      shape_str(embedding_init->shape()) +
                      " does not match the table " +
                      shape_str(model.embedding.table.shape()));
    model.embedding.table.values_mut() = embedding_init->values();
  }
  std::vector<NamedTensor> params = model.named_params();
  Adam adam(params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  ScheduleState sched;
  sched.lr = cfg.lr;

  TrainResult result;
  result.best_val_acc = -1.0;
  bool have_best = false;

  std::vector<int> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fisher-Yates on the shared rng keeps the whole run reproducible.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(cursor + static_cast<std::size_t>(cfg.batch_size),
                   order.size());
      const int batch_n = static_cast<int>(batch_end - cursor);
      Tape::active().clear();
      model.zero_grads();
      Tensor batch_loss = Tensor::zeros({1});
      for (; cursor < batch_end; ++cursor) {
        const Sample& s = data.train[static_cast<std::size_t>(order[cursor])];
        Tensor logits = model.forward(s.tokens, s.mel, true, &rng);
        batch_loss = add(batch_loss, cross_entropy_with_logits(logits, s.label));
      }
      batch_loss = scale(batch_loss, 1.0 / batch_n);
      backward(batch_loss);
      clip_grad_norm(params, cfg.grad_clip_norm);
      adam.step(params, sched.lr);
      loss_sum += batch_loss.item() * batch_n;
    }
    Tape::active().clear();

    const double val_acc = evaluate_accuracy(model, data.valid);
    const double prev_best = sched.best_acc;
    const ScheduleAction action = schedule_step(sched, val_acc, cfg.schedule);
    if (val_acc > prev_best) {
      result.best_model = model.clone();
      result.best_val_acc = val_acc;
      have_best = true;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(data.train.size());
    rec.val_acc = val_acc;
    rec.lr = sched.lr;
    rec.action = schedule_action_name(action);
    result.history.push_back(rec);
    result.epochs_run = epoch;
    if (action == ScheduleAction::kStop) break;
  }
  if (!have_best) result.best_model = model.clone();  // max_epochs == 0 edge
  return result;
}

void write_history(const std::string& path,
                   const std::vector<EpochRecord>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("history: cannot write " + path);
  f << "epoch,train_loss,val_acc,lr,action\n";
  char buf[128];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%s\n", r.epoch,
                  r.train_loss, r.val_acc, r.lr, r.action.c_str());
    f << buf;
  }
}

std::vector<EpochRecord> read_history(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("history: cannot read " + path);
  std::vector<EpochRecord> out;
  std::string line;
  if (!std::getline(f, line))
    throw DataError("history: " + path + " is empty");
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    EpochRecord r;
    try {
      std::getline(is, cell, ',');
      r.epoch = std::stoi(cell);
      std::getline(is, cell, ',');
      r.train_loss = std::stod(cell);
      std::getline(is, cell, ',');
      r.val_acc = std::stod(cell);
      std::getline(is, cell, ',');
      r.lr = std::stod(cell);
      std::getline(is, r.action);
    } catch (const std::exception&) {
      throw DataError("history: malformed line in " + path);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<double>> ensemble_average(
    const std::vector<std::vector<std::vector<double>>>& bag) {
  if (bag.empty()) throw Error("ensemble: no members");
  const std::size_t n = bag[0].size();
  for (const auto& member : bag) {
    if (member.size() != n)
      throw Error("ensemble: members disagree on sample count");
    for (std::size_t i = 0; i < n; ++i)
      if (member[i].size() != bag[0][i].size())
        throw Error("ensemble: members disagree on class count");
  }
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].assign(bag[0][i].size(), 0.0);
    for (const auto& member : bag)
      for (std::size_t k = 0; k < out[i].size(); ++k)
        out[i][k] += member[i][k];
    for (double& p : out[i]) p /= static_cast<double>(bag.size());
  }
  return out;
}

}  // namespace modfuse
