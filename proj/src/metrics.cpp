// modfuse/metrics.cpp

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

#include "modfuse/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "modfuse/error.hpp"

namespace modfuse {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (std::int64_t c : counts) n += c;
  return n;
}

std::int64_t ConfusionMatrix::row_sum(int i) const {
  std::int64_t n = 0;
  for (int j = 0; j < k; ++j) n += at(i, j);
  return n;
}

std::int64_t ConfusionMatrix::col_sum(int j) const {
  std::int64_t n = 0;
  for (int i = 0; i < k; ++i) n += at(i, j);
  return n;
}

ConfusionMatrix confusion(const std::vector<int>& true_labels,
                          const std::vector<int>& predicted_labels, int k) {
  if (k < 1) throw Error("confusion: need at least one class");
  if (true_labels.size() != predicted_labels.size())
    throw Error("confusion: " + std::to_string(true_labels.size()) +
                " true labels vs " + std::to_string(predicted_labels.size()) +
                " predictions");
  ConfusionMatrix m;
  m.k = k;
  m.counts.assign(static_cast<std::size_t>(k) * k, 0);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i], p = predicted_labels[i];
    if (t < 0 || t >= k || p < 0 || p >= k)
      throw Error("confusion: label pair (" + std::to_string(t) + "," +
                  std::to_string(p) + ") out of range for " +
                  std::to_string(k) + " classes");
    ++m.counts[static_cast<std::size_t>(t) * k + p];
  }
  return m;
}

EvalReport prf(const ConfusionMatrix& matrix) {
  const int k = matrix.k;
  const std::int64_t total = matrix.total();
  if (total == 0) throw Error("prf: empty confusion matrix");

  EvalReport r;
  r.matrix = matrix;
  r.per_class.resize(static_cast<std::size_t>(k));

  std::int64_t trace = 0;
  double wp = 0.0, wf = 0.0;
  for (int i = 0; i < k; ++i) {
    ClassScores& s = r.per_class[static_cast<std::size_t>(i)];
    const std::int64_t tp = matrix.at(i, i);
    const std::int64_t support = matrix.row_sum(i);
    const std::int64_t predicted = matrix.col_sum(i);
    trace += tp;
    s.support = support;
    if (predicted > 0) {
      s.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    } else {
      s.precision = 0.0;
      s.degenerate = true;
    }
    if (support > 0) {
      s.recall = static_cast<double>(tp) / static_cast<double>(support);
    } else {
      s.recall = 0.0;
      s.degenerate = true;
    }
    if (s.precision + s.recall > 0.0) {
      s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    } else {
      s.f1 = 0.0;
      s.degenerate = true;
    }
    r.macro_precision += s.precision;
    r.macro_recall += s.recall;
    r.macro_f1 += s.f1;
    wp += static_cast<double>(support) * s.precision;
    wf += static_cast<double>(support) * s.f1;
  }
  r.macro_precision /= k;
  r.macro_recall /= k;
  r.macro_f1 /= k;
  r.weighted_precision = wp / static_cast<double>(total);
  r.weighted_f1 = wf / static_cast<double>(total);
  // The recall weights equal the recall denominators, so the weighted sum
  // telescopes to the diagonal count; evaluating it that way keeps the
  // identity with accuracy exact in floating point.
  r.weighted_recall = static_cast<double>(trace) / static_cast<double>(total);
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return r;
}

std::string render_report(const EvalReport& report,
                          const std::vector<std::string>& class_names) {
  const int k = report.matrix.k;
  if (static_cast<int>(class_names.size()) != k)
    throw Error("report: " + std::to_string(class_names.size()) +
                " class names for " + std::to_string(k) + " classes");
  std::size_t width = 8;
  for (const std::string& n : class_names) width = std::max(width, n.size());

  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %9s\n",
                static_cast<int>(width), "class", "prec", "recall", "f1",
                "support");
  os << buf;
  for (int i = 0; i < k; ++i) {
    const ClassScores& s = report.per_class[static_cast<std::size_t>(i)];
    std::snprintf(buf, sizeof(buf), "%-*s %9.4f %9.4f %9.4f %9lld%s\n",
                  static_cast<int>(width), class_names[static_cast<std::size_t>(i)].c_str(),
                  s.precision, s.recall, s.f1,
                  static_cast<long long>(s.support),
                  s.degenerate ? "  (degenerate)" : "");
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-*s %9.4f %9.4f %9.4f\n",
                static_cast<int>(width), "macro", report.macro_precision,
                report.macro_recall, report.macro_f1);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-*s %9.4f %9.4f %9.4f\n",
                static_cast<int>(width), "weighted", report.weighted_precision,
                report.weighted_recall, report.weighted_f1);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-*s %9.4f\n", static_cast<int>(width),
                "accuracy", report.accuracy);
  os << buf;

  os << "\nconfusion (rows = true, cols = predicted)\n";
  for (int i = 0; i < k; ++i) {
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(width),
                  class_names[static_cast<std::size_t>(i)].c_str());
    os << buf;
    for (int j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof(buf), " %7lld",
                    static_cast<long long>(report.matrix.at(i, j)));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string report_to_json(const EvalReport& report,
                           const std::vector<std::string>& class_names) {
  nlohmann::ordered_json j;
  j["classes"] = class_names;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (const ClassScores& s : report.per_class) {
    nlohmann::ordered_json c;
    c["precision"] = s.precision;
    c["recall"] = s.recall;
    c["f1"] = s.f1;
    c["support"] = s.support;
    c["degenerate"] = s.degenerate;
    per_class.push_back(std::move(c));
  }
  j["per_class"] = std::move(per_class);
  j["macro"] = {{"precision", report.macro_precision},
                {"recall", report.macro_recall},
                {"f1", report.macro_f1}};
  j["weighted"] = {{"precision", report.weighted_precision},
                   {"recall", report.weighted_recall},
                   {"f1", report.weighted_f1}};
  j["accuracy"] = report.accuracy;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int i = 0; i < report.matrix.k; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int jj = 0; jj < report.matrix.k; ++jj)
      row.push_back(report.matrix.at(i, jj));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  return j.dump(2);
}

void write_confusion_csv(const std::string& path,
                         const ConfusionMatrix& matrix,
                         const std::vector<std::string>& class_names) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("confusion: cannot write " + path);
  f << "true\\pred";
  for (const std::string& n : class_names) f << "," << n;
  f << "\n";
  for (int i = 0; i < matrix.k; ++i) {
    f << class_names[static_cast<std::size_t>(i)];
    for (int j = 0; j < matrix.k; ++j) f << "," << matrix.at(i, j);
    f << "\n";
  }
}

}  // namespace modfuse
