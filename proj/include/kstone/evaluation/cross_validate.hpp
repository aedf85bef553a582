#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "kstone/dataset.hpp"
#include "kstone/error.hpp"
#include "kstone/evaluation/folds.hpp"
#include "kstone/evaluation/metrics.hpp"
#include "kstone/features.hpp"
#include "kstone/learners/ensemble.hpp"

namespace kstone {

// Class names in label-index order (WW, WD, UA, BRU).
inline std::vector<std::string> class_names() {
  std::vector<std::string> names;
  for (ClassLabel c : kAllClasses) names.emplace_back(to_string(c));
  return names;
}

struct LabeledMatrix {
  FeatureMatrix x;
  std::vector<int> y;
  std::vector<std::string> groups;  // stone ids
};

inline LabeledMatrix to_matrix(const std::vector<FeatureVector>& vectors) {
  LabeledMatrix out;
  if (vectors.empty()) return out;
  const std::size_t d = vectors.front().components.size();
  out.x = FeatureMatrix(vectors.size(), d);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].components.size() != d) fail(errc::kDimensionMismatch, "feature vectors differ in length");
    std::copy(vectors[i].components.begin(), vectors[i].components.end(),
              out.x.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    out.y.push_back(class_index(vectors[i].cls));
    out.groups.push_back(vectors[i].stone_id);
  }
  return out;
}

// Trains one model per fold on the remaining folds and scores its held-out
// fold. Every fold model uses params.seed, so the pooled report does not
// depend on fold order. Fold reports are kept in report.folds.
inline EvalReport cross_validate(const FeatureMatrix& x, std::span<const int> y,
                                 const std::vector<std::string>& classes, const EnsembleParams& params,
                                 const FoldSplit& folds, std::size_t workers = 1) {
  if (x.rows != y.size()) fail(errc::kDimensionMismatch, "feature rows and labels differ in count");
  std::vector<int> seen(x.rows, 0);
  for (const auto& f : folds.folds) {
    if (f.empty()) fail(errc::kInvalidArgument, "empty fold");
    for (std::size_t i : f) {
      if (i >= x.rows) fail(errc::kInvalidArgument, "fold index out of range");
      if (seen[i]++) fail(errc::kInvalidArgument, "folds overlap at sample " + std::to_string(i));
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    fail(errc::kInvalidArgument, "folds do not cover every sample");
  }

  std::vector<int> pooled(x.rows, -1);
  EvalReport report;
  for (const auto& test : folds.folds) {
    std::vector<std::size_t> sorted_test(test.begin(), test.end());
    std::sort(sorted_test.begin(), sorted_test.end());
    std::vector<char> in_test(x.rows, 0);
    for (std::size_t i : test) in_test[i] = 1;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < x.rows; ++i) {
      if (!in_test[i]) train_rows.push_back(i);
    }
    std::vector<int> y_train;
    for (std::size_t i : train_rows) y_train.push_back(y[i]);
    const auto model = train_ensemble(x.select_rows(train_rows), y_train, classes, params, workers);
    const auto pred = predict(model, x.select_rows(sorted_test));
    std::vector<int> y_test;
    for (std::size_t j = 0; j < sorted_test.size(); ++j) {
      pooled[sorted_test[j]] = pred[j];
      y_test.push_back(y[sorted_test[j]]);
    }
    report.folds.push_back(compute_metrics(y_test, pred, classes));
  }
  auto folds_kept = std::move(report.folds);
  report = compute_metrics(y, pooled, classes);
  report.folds = std::move(folds_kept);
  report.metadata["k"] = std::to_string(folds.folds.size());
  report.metadata["grouping"] = std::string(to_string(folds.mode));
  report.metadata["learner"] = std::string(to_string(params.kind));
  report.metadata["n_estimators"] = std::to_string(params.n_estimators);
  report.metadata["seed"] = std::to_string(params.seed);
  report.metadata["zero_division"] = "0";
  return report;
}

inline EvalReport cross_validate(const std::vector<FeatureVector>& vectors, const EnsembleParams& params,
                                 std::size_t k, GroupingMode mode, std::uint64_t fold_seed,
                                 std::size_t workers = 1) {
  const auto m = to_matrix(vectors);
  const auto folds = stratified_kfold(m.y, m.groups, k, mode, fold_seed);
  return cross_validate(m.x, m.y, class_names(), params, folds, workers);
}

}  // namespace kstone
