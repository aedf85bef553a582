#pragma once

// Hyperparameter presets. "paper" holds the tuned values reported for the
// mixed surface+section descriptors; "desk" scales the ensemble sizes down so
// full cross-validated runs finish in minutes.
//
// Not provided: the SVM (sigmoid kernel, C = 1.16, coef0 = 0, gamma = scale)
// and the MLP (one hidden layer of 200 units, 200 epochs of L-BFGS) from the
// same study.

#include <optional>
#include <string>
#include <string_view>

#include "kstone/error.hpp"
#include "kstone/learners/ensemble.hpp"

namespace kstone {

enum class Preset { Paper, Desk };

inline std::optional<Preset> parse_preset(std::string_view s) {
  if (s == "paper") return Preset::Paper;
  if (s == "desk") return Preset::Desk;
  return std::nullopt;
}

inline std::string_view to_string(Preset p) { return p == Preset::Paper ? "paper" : "desk"; }

inline EnsembleParams paper_params(EnsembleKind kind) {
  EnsembleParams p;
  p.kind = kind;
  switch (kind) {
    case EnsembleKind::RandomForest:
      p.n_estimators = 1800;
      p.bootstrap = false;
      p.tree.max_depth = 50;
      p.tree.min_samples_split = 5;
      p.tree.min_samples_leaf = 2;
      p.tree.features_per_split = FeatureSampling::Sqrt;
      break;
    case EnsembleKind::AdaBoost:
      p.n_estimators = 100;
      p.learning_rate = 0.1;
      p.tree.max_depth = 12;
      p.tree.features_per_split = FeatureSampling::All;
      break;
    case EnsembleKind::Bagging:
      // Same depth as AdaBoost; each member is a randomized (forest) tree.
      p.n_estimators = 160;
      p.bootstrap = true;
      p.bagging_base = BaggingBase::Tree;
      p.tree.max_depth = 12;
      p.tree.features_per_split = FeatureSampling::Sqrt;
      break;
    case EnsembleKind::GradientBoosting:
      p.n_estimators = 100;
      p.learning_rate = 0.1;
      p.base_score = 0.5;
      p.tree.max_depth = 3;
      p.tree.min_split_loss = 0.0;
      p.tree.lambda = 1.0;
      p.tree.features_per_split = FeatureSampling::All;
      break;
  }
  return p;
}

inline EnsembleParams desk_params(EnsembleKind kind) {
  EnsembleParams p = paper_params(kind);
  switch (kind) {
    case EnsembleKind::RandomForest: p.n_estimators = 50; break;
    case EnsembleKind::AdaBoost: p.n_estimators = 25; break;
    case EnsembleKind::Bagging: p.n_estimators = 40; break;
    case EnsembleKind::GradientBoosting: p.n_estimators = 25; break;
  }
  return p;
}

inline EnsembleParams preset_params(Preset preset, EnsembleKind kind, std::uint64_t seed = 0) {
  EnsembleParams p = preset == Preset::Paper ? paper_params(kind) : desk_params(kind);
  p.seed = seed;
  return p;
}

}  // namespace kstone
