// modfuse/metrics.hpp

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

#ifndef MODFUSE_METRICS_HPP_
#define MODFUSE_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace modfuse {

// Row-major K x K counts; rows are true labels, columns predictions.
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::int64_t> counts;

  std::int64_t at(int true_label, int predicted) const {
    return counts[static_cast<std::size_t>(true_label) * k + predicted];
  }
  std::int64_t total() const;
  std::int64_t row_sum(int i) const;  // support of class i
  std::int64_t col_sum(int j) const;  // predictions of class j
};

ConfusionMatrix confusion(const std::vector<int>& true_labels,
                          const std::vector<int>& predicted_labels, int k);

struct ClassScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::int64_t support = 0;
  bool degenerate = false;  // zero support or zero predictions hit a 0/0
};

struct EvalReport {
  ConfusionMatrix matrix;
  std::vector<ClassScores> per_class;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
  double accuracy = 0;
};

// Per-class precision/recall/F1 plus unweighted (macro) and
// support-weighted aggregates. Division by zero scores 0 and raises the
// class's degenerate flag instead of failing.
EvalReport prf(const ConfusionMatrix& matrix);

// Aligned, human-readable table.
std::string render_report(const EvalReport& report,
                          const std::vector<std::string>& class_names);

// Machine-readable JSON record.
std::string report_to_json(const EvalReport& report,
                           const std::vector<std::string>& class_names);

void write_confusion_csv(const std::string& path,
                         const ConfusionMatrix& matrix,
                         const std::vector<std::string>& class_names);

}  // namespace modfuse

#endif  // MODFUSE_METRICS_HPP_
