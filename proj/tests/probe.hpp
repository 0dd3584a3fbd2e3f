// tests/probe.hpp

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

#ifndef MODFUSE_TESTS_PROBE_HPP_
#define MODFUSE_TESTS_PROBE_HPP_

#include <cmath>
#include <vector>

#include "modfuse/manifest.hpp"
#include "modfuse/text_features.hpp"

namespace testsupport {

// Hand-rolled softmax regression, independent of the library's autodiff.
// Full-batch gradient descent; returns accuracy on the validation rows.
inline double logistic_probe_accuracy(
    const std::vector<std::vector<double>>& train_x,
    const std::vector<int>& train_y,
    const std::vector<std::vector<double>>& valid_x,
    const std::vector<int>& valid_y, int k, int steps = 400,
    double lr = 0.5) {
  const int n = static_cast<int>(train_x.size());
  const int d = static_cast<int>(train_x[0].size());
  std::vector<double> w(static_cast<std::size_t>(d) * k, 0.0);
  std::vector<double> b(static_cast<std::size_t>(k), 0.0);

  std::vector<double> probs(static_cast<std::size_t>(k));
  auto predict = [&](const std::vector<double>& x) {
    for (int c = 0; c < k; ++c) {
      double z = b[static_cast<std::size_t>(c)];
      for (int j = 0; j < d; ++j)
        z += x[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j) * k + c];
      probs[static_cast<std::size_t>(c)] = z;
    }
    double mx = probs[0];
    for (double p : probs) mx = std::max(mx, p);
    double denom = 0.0;
    for (double& p : probs) {
      p = std::exp(p - mx);
      denom += p;
    }
    for (double& p : probs) p /= denom;
  };

  std::vector<double> gw(w.size());
  std::vector<double> gb(b.size());
  for (int step = 0; step < steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      predict(train_x[static_cast<std::size_t>(i)]);
      for (int c = 0; c < k; ++c) {
        const double err = probs[static_cast<std::size_t>(c)] -
                           (c == train_y[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
        gb[static_cast<std::size_t>(c)] += err;
        for (int j = 0; j < d; ++j)
          gw[static_cast<std::size_t>(j) * k + c] +=
              err * train_x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
    for (std::size_t idx = 0; idx < w.size(); ++idx)
      w[idx] -= lr * gw[idx] / n;
    for (std::size_t idx = 0; idx < b.size(); ++idx)
      b[idx] -= lr * gb[idx] / n;
  }

  int correct = 0;
  for (std::size_t i = 0; i < valid_x.size(); ++i) {
    predict(valid_x[i]);
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)])
        best = c;
    if (best == valid_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(valid_x.size());
}

// Bag-of-words counts over the vocabulary.
inline std::vector<double> bow_features(const std::string& text,
                                        const modfuse::Vocabulary& vocab) {
  std::vector<double> x(static_cast<std::size_t>(vocab.size()), 0.0);
  for (int idx : vocab.encode(modfuse::tokenize(text)))
    x[static_cast<std::size_t>(idx)] += 1.0;
  return x;
}

// Mean mel vector over time.
inline std::vector<double> mel_mean_features(const modfuse::Tensor& mel) {
  const int t = mel.rows(), c = mel.cols();
  std::vector<double> x(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < c; ++j) x[static_cast<std::size_t>(j)] += mel.at(i, j);
  for (double& v : x) v /= t;
  return x;
}

struct SingleModalityProbes {
  double text_acc = 0;
  double audio_acc = 0;
};

// Trains both single-modality probes on the train split and scores them on
// the validation split.
inline SingleModalityProbes run_probes(
    const std::vector<modfuse::ManifestRecord>& records,
    const std::vector<std::string>& classes) {
  modfuse::Vocabulary vocab =
      modfuse::Vocabulary::build(modfuse::train_sentences(records));
  auto label_of = [&classes](const std::string& name) {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    return -1;
  };
  std::vector<std::vector<double>> text_train, text_valid, mel_train,
      mel_valid;
  std::vector<int> y_train, y_valid;
  for (const auto& r : records) {
    if (r.split == "test") continue;
    const int label = label_of(r.label);
    const auto bow = bow_features(r.text, vocab);
    const auto melf = mel_mean_features(modfuse::read_mel_csv(r.mel_path));
    if (r.split == "train") {
      text_train.push_back(bow);
      mel_train.push_back(melf);
      y_train.push_back(label);
    } else {
      text_valid.push_back(bow);
      mel_valid.push_back(melf);
      y_valid.push_back(label);
    }
  }
  SingleModalityProbes out;
  const int k = static_cast<int>(classes.size());
  out.text_acc = logistic_probe_accuracy(text_train, y_train, text_valid,
                                         y_valid, k);
  out.audio_acc = logistic_probe_accuracy(mel_train, y_train, mel_valid,
                                          y_valid, k);
  return out;
}

}  // namespace testsupport

#endif  // MODFUSE_TESTS_PROBE_HPP_
