#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kstone/error.hpp"

namespace kstone {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<std::string> classes;
  // confusion[t][p]: samples of true class t predicted as p.
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<ClassMetrics> per_class;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t total = 0;
  std::vector<EvalReport> folds;
  std::map<std::string, std::string> metadata;
};

// Zero denominators give 0 (precision of a never-predicted class, F1 when
// P + R = 0). Weighted averages use the true-class support.
inline EvalReport compute_metrics(std::span<const int> y_true, std::span<const int> y_pred,
                                  const std::vector<std::string>& classes) {
  if (y_true.size() != y_pred.size()) fail(errc::kInvalidArgument, "label vectors differ in length");
  if (y_true.empty()) fail(errc::kInvalidArgument, "no samples to score");
  const std::size_t k = classes.size();
  EvalReport r;
  r.classes = classes;
  r.total = y_true.size();
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      fail(errc::kInvalidArgument, "label outside the class list at sample " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  r.per_class.resize(k);
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += r.confusion[o][c];
      fn += r.confusion[c][o];
    }
    auto& m = r.per_class[c];
    m.support = tp + fn;
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    correct += tp;
  }
  const double n = static_cast<double>(r.total);
  for (const auto& m : r.per_class) {
    const double w = static_cast<double>(m.support) / n;
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
  }
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

}  // namespace kstone
