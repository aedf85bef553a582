#pragma once

// Tree ensembles: random forest (no bootstrap by default), bagging, SAMME
// AdaBoost and softmax gradient boosting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kstone/error.hpp"
#include "kstone/learners/tree.hpp"
#include "kstone/parallel.hpp"
#include "kstone/rng.hpp"

namespace kstone {

enum class EnsembleKind { RandomForest, Bagging, AdaBoost, GradientBoosting };

inline std::string_view to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::RandomForest: return "random_forest";
    case EnsembleKind::Bagging: return "bagging";
    case EnsembleKind::AdaBoost: return "adaboost";
    case EnsembleKind::GradientBoosting: return "gradient_boosting";
  }
  return "?";
}

inline std::optional<EnsembleKind> parse_ensemble_kind(std::string_view s) {
  for (auto k : {EnsembleKind::RandomForest, EnsembleKind::Bagging, EnsembleKind::AdaBoost,
                 EnsembleKind::GradientBoosting}) {
    if (s == to_string(k)) return k;
  }
  if (s == "rf") return EnsembleKind::RandomForest;
  if (s == "gbt" || s == "xgboost") return EnsembleKind::GradientBoosting;
  return std::nullopt;
}

// Base learner of a bagging ensemble.
enum class BaggingBase { Tree, Forest };

struct EnsembleParams {
  EnsembleKind kind = EnsembleKind::RandomForest;
  int n_estimators = 50;
  double learning_rate = 0.1;
  double base_score = 0.5;
  bool bootstrap = false;
  TreeParams tree;
  BaggingBase bagging_base = BaggingBase::Tree;
  int bagging_forest_trees = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_estimators < 1) fail(errc::kInvalidArgument, "n_estimators must be >= 1");
    if (!(learning_rate > 0.0)) fail(errc::kInvalidArgument, "learning_rate must be > 0");
    if (!(base_score > 0.0 && base_score < 1.0)) {
      fail(errc::kInvalidArgument, "base_score must lie in (0, 1)");
    }
    if (bagging_forest_trees < 1) fail(errc::kInvalidArgument, "bagging_forest_trees must be >= 1");
    tree.validate();
  }

  friend bool operator==(const EnsembleParams&, const EnsembleParams&) = default;
};

struct TreeEnsembleModel {
  EnsembleKind kind = EnsembleKind::RandomForest;
  std::vector<std::string> classes;
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  // AdaBoost stage weights (alpha); empty for the other kinds.
  std::vector<double> tree_weights;
  // Trees per voting member (bagging with a forest base); 1 otherwise.
  std::size_t group_size = 1;
  double learning_rate = 0.1;
  double base_score = 0.5;
  EnsembleParams params;
  // Gradient boosting: training log-loss before the first stage and after
  // every stage.
  std::vector<double> train_loss;

  std::size_t n_classes() const { return classes.size(); }
};

// Optional observers for training internals.
struct TrainHooks {
  // AdaBoost: called with the normalized sample weights after every round.
  std::function<void(std::size_t round, const std::vector<double>& weights)> on_adaboost_round;
};

inline constexpr double kAdaBoostErrorClamp = 1e-10;
inline constexpr double kMinHessian = 1e-16;
inline constexpr double kProbFloor = 1e-15;

namespace detail {

inline void check_labels(const FeatureMatrix& x, std::span<const int> y, std::size_t n_classes) {
  if (x.rows == 0) fail(errc::kInvalidArgument, "empty training data");
  if (x.cols == 0) fail(errc::kInvalidArgument, "zero feature dimensionality");
  if (y.size() != x.rows) fail(errc::kInvalidArgument, "feature/label count mismatch");
  std::set<int> present;
  for (int l : y) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) fail(errc::kInvalidArgument, "label out of range");
    present.insert(l);
  }
  if (present.size() < 2) fail(errc::kDegenerate, "training data holds fewer than two classes");
}

inline std::vector<std::size_t> bootstrap_rows(std::size_t n, Rng& rng) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

inline double log_loss(const std::vector<double>& proba, std::span<const int> y, std::size_t k) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    loss -= std::log(std::max(proba[i * k + static_cast<std::size_t>(y[i])], kProbFloor));
  }
  return loss / static_cast<double>(y.size());
}

inline TreeEnsembleModel empty_model(const FeatureMatrix& x, std::vector<std::string> classes,
                                     const EnsembleParams& params) {
  TreeEnsembleModel m;
  m.kind = params.kind;
  m.classes = std::move(classes);
  m.n_features = x.cols;
  m.learning_rate = params.learning_rate;
  m.base_score = params.base_score;
  m.params = params;
  return m;
}

}  // namespace detail

// Class names default to "0", "1", ... when not supplied.
inline std::vector<std::string> default_class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back(std::to_string(i));
  return names;
}

inline TreeEnsembleModel train_random_forest(const FeatureMatrix& x, std::span<const int> y,
                                             std::vector<std::string> classes,
                                             const EnsembleParams& params, std::size_t workers = 1) {
  params.validate();
  detail::check_labels(x, y, classes.size());
  auto model = detail::empty_model(x, std::move(classes), params);
  model.trees.resize(static_cast<std::size_t>(params.n_estimators));
  parallel_for(model.trees.size(), workers, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> rows;
    if (params.bootstrap) rows = detail::bootstrap_rows(x.rows, rng);
    model.trees[t] = train_classification_tree(x, y, model.n_classes(), params.tree, rng.next(), {},
                                               std::move(rows));
  });
  return model;
}

// Resample drawn for bagging member `member` (sorted row indices, with
// replacement).
inline std::vector<std::size_t> bootstrap_sample(std::size_t n, std::uint64_t seed, std::size_t member) {
  Rng rng(derive_seed(seed, member));
  return detail::bootstrap_rows(n, rng);
}

inline TreeEnsembleModel train_bagging(const FeatureMatrix& x, std::span<const int> y,
                                       std::vector<std::string> classes,
                                       const EnsembleParams& params, std::size_t workers = 1) {
  params.validate();
  detail::check_labels(x, y, classes.size());
  auto model = detail::empty_model(x, std::move(classes), params);
  const std::size_t group =
      params.bagging_base == BaggingBase::Forest ? static_cast<std::size_t>(params.bagging_forest_trees) : 1;
  model.group_size = group;
  const auto members = static_cast<std::size_t>(params.n_estimators);
  model.trees.resize(members * group);
  parallel_for(members, workers, [&](std::size_t e) {
    Rng rng(derive_seed(params.seed, e));
    std::vector<std::size_t> rows;
    if (params.bootstrap) rows = detail::bootstrap_rows(x.rows, rng);
    for (std::size_t t = 0; t < group; ++t) {
      model.trees[e * group + t] =
          train_classification_tree(x, y, model.n_classes(), params.tree, rng.next(), {}, rows);
    }
  });
  return model;
}

// Multi-class SAMME. Stage weight alpha = lr * (ln((1 - err) / err) + ln(K - 1))
// with err clamped into [1e-10, 1 - 1e-10]. Stops early after a perfect stage
// (kept) or at a stage no better than chance (dropped).
inline TreeEnsembleModel train_adaboost(const FeatureMatrix& x, std::span<const int> y,
                                        std::vector<std::string> classes,
                                        const EnsembleParams& params, const TrainHooks& hooks = {}) {
  params.validate();
  detail::check_labels(x, y, classes.size());
  auto model = detail::empty_model(x, std::move(classes), params);
  const std::size_t n = x.rows;
  const double k = static_cast<double>(model.n_classes());
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<char> wrong(n);
  for (int round = 0; round < params.n_estimators; ++round) {
    Tree tree = train_classification_tree(x, y, model.n_classes(), params.tree,
                                          derive_seed(params.seed, static_cast<std::uint64_t>(round)), w);
    double err = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wrong[i] = tree.predict_class(x.row(i)) != y[i];
      if (wrong[i]) err += w[i];
      total += w[i];
    }
    err /= total;
    if (err >= 1.0 - 1.0 / k) {
      if (model.trees.empty()) {
        fail(errc::kDegenerate, "AdaBoost base learner is no better than chance");
      }
      break;
    }
    const double clamped = std::clamp(err, kAdaBoostErrorClamp, 1.0 - kAdaBoostErrorClamp);
    const double alpha = params.learning_rate * (std::log((1.0 - clamped) / clamped) + std::log(k - 1.0));
    model.trees.push_back(std::move(tree));
    model.tree_weights.push_back(alpha);
    if (err == 0.0) break;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (wrong[i]) w[i] *= std::exp(alpha);
      sum += w[i];
    }
    for (auto& v : w) v /= sum;
    if (hooks.on_adaboost_round) hooks.on_adaboost_round(static_cast<std::size_t>(round), w);
  }
  return model;
}

// Softmax boosting with one regression tree per class per stage. Raw scores
// start at ln(base_score) for every class; each tree is fitted to the
// gradient p - y with hessian max(2p(1 - p), 1e-16), and its Newton leaf
// values are added scaled by the learning rate.
inline TreeEnsembleModel train_gradient_boosting(const FeatureMatrix& x, std::span<const int> y,
                                                 std::vector<std::string> classes,
                                                 const EnsembleParams& params,
                                                 std::size_t workers = 1) {
  params.validate();
  detail::check_labels(x, y, classes.size());
  auto model = detail::empty_model(x, std::move(classes), params);
  const std::size_t n = x.rows, k = model.n_classes();
  std::vector<double> raw(n * k, std::log(params.base_score));
  std::vector<double> proba(raw);
  auto refresh = [&] {
    proba = raw;
    for (std::size_t i = 0; i < n; ++i) detail::softmax_inplace({proba.data() + i * k, k});
  };
  refresh();
  model.train_loss.push_back(detail::log_loss(proba, y, k));
  std::vector<Tree> stage(k);
  for (int s = 0; s < params.n_estimators; ++s) {
    parallel_for(k, workers, [&](std::size_t c) {
      std::vector<double> g(n), h(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = proba[i * k + c];
        g[i] = p - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
        h[i] = std::max(2.0 * p * (1.0 - p), kMinHessian);
      }
      stage[c] = train_gradient_tree(x, g, h, params.tree,
                                     derive_seed(params.seed, static_cast<std::uint64_t>(s) * k + c));
    });
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        raw[i * k + c] += params.learning_rate * stage[c].predict_value(x.row(i));
      }
      model.trees.push_back(std::move(stage[c]));
    }
    refresh();
    model.train_loss.push_back(detail::log_loss(proba, y, k));
  }
  return model;
}

inline TreeEnsembleModel train_ensemble(const FeatureMatrix& x, std::span<const int> y,
                                        std::vector<std::string> classes,
                                        const EnsembleParams& params, std::size_t workers = 1,
                                        const TrainHooks& hooks = {}) {
  switch (params.kind) {
    case EnsembleKind::RandomForest: return train_random_forest(x, y, std::move(classes), params, workers);
    case EnsembleKind::Bagging: return train_bagging(x, y, std::move(classes), params, workers);
    case EnsembleKind::AdaBoost: return train_adaboost(x, y, std::move(classes), params, hooks);
    case EnsembleKind::GradientBoosting:
      return train_gradient_boosting(x, y, std::move(classes), params, workers);
  }
  fail(errc::kInvalidArgument, "unknown ensemble kind");
}

// ---------------------------------------------------------------------------
// Prediction

// Per-class scores for one sample; always a probability vector.
inline std::vector<double> predict_proba_row(const TreeEnsembleModel& m, std::span<const double> x) {
  if (x.size() != m.n_features) {
    fail(errc::kDimensionMismatch, "model expects " + std::to_string(m.n_features) +
                                       " features, got " + std::to_string(x.size()));
  }
  const std::size_t k = m.n_classes();
  std::vector<double> out(k, 0.0);
  switch (m.kind) {
    case EnsembleKind::RandomForest:
    case EnsembleKind::Bagging: {
      // One vote per member; a member spanning several trees votes with the
      // majority of its own trees.
      const std::size_t members = m.trees.size() / m.group_size;
      std::vector<double> inner(k);
      for (std::size_t e = 0; e < members; ++e) {
        std::fill(inner.begin(), inner.end(), 0.0);
        for (std::size_t t = 0; t < m.group_size; ++t) {
          inner[static_cast<std::size_t>(m.trees[e * m.group_size + t].predict_class(x))] += 1.0;
        }
        out[detail::argmax(inner)] += 1.0;
      }
      for (auto& v : out) v /= static_cast<double>(members);
      break;
    }
    case EnsembleKind::AdaBoost: {
      double total = 0.0;
      for (std::size_t t = 0; t < m.trees.size(); ++t) {
        out[static_cast<std::size_t>(m.trees[t].predict_class(x))] += m.tree_weights[t];
        total += m.tree_weights[t];
      }
      for (auto& v : out) v /= total;
      break;
    }
    case EnsembleKind::GradientBoosting: {
      std::fill(out.begin(), out.end(), std::log(m.base_score));
      for (std::size_t t = 0; t < m.trees.size(); ++t) {
        out[t % k] += m.learning_rate * m.trees[t].predict_value(x);
      }
      detail::softmax_inplace(out);
      break;
    }
  }
  return out;
}

// argmax of the class scores, ties to the lowest class index.
inline int predict_row(const TreeEnsembleModel& m, std::span<const double> x) {
  return static_cast<int>(detail::argmax(predict_proba_row(m, x)));
}

inline std::vector<int> predict(const TreeEnsembleModel& m, const FeatureMatrix& x) {
  if (x.cols != m.n_features) {
    fail(errc::kDimensionMismatch, "model expects " + std::to_string(m.n_features) +
                                       " features, got " + std::to_string(x.cols));
  }
  std::vector<int> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict_row(m, x.row(i));
  return out;
}

inline std::vector<std::vector<double>> predict_proba(const TreeEnsembleModel& m, const FeatureMatrix& x) {
  if (x.cols != m.n_features) {
    fail(errc::kDimensionMismatch, "model expects " + std::to_string(m.n_features) +
                                       " features, got " + std::to_string(x.cols));
  }
  std::vector<std::vector<double>> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = predict_proba_row(m, x.row(i));
  return out;
}

// Copy keeping only the first `stages` stages (boosting) or members.
inline TreeEnsembleModel truncated(const TreeEnsembleModel& m, std::size_t stages) {
  TreeEnsembleModel out = m;
  const std::size_t per_stage = m.kind == EnsembleKind::GradientBoosting ? m.n_classes() : m.group_size;
  out.trees.resize(std::min(m.trees.size(), stages * per_stage));
  if (!out.tree_weights.empty()) out.tree_weights.resize(std::min(m.tree_weights.size(), stages));
  if (!out.train_loss.empty()) out.train_loss.resize(std::min(m.train_loss.size(), stages + 1));
  return out;
}

}  // namespace kstone
