#pragma once

// Versioned JSON model files and hyperparameter (de)serialization.
//
// Model file, top-level fields:
//   format        "kstone-model"
//   version       integer, currently 1
//   kind          random_forest | bagging | adaboost | gradient_boosting
//   classes       class names, index order
//   n_features    input dimensionality
//   group_size    trees per voting member (bagging with a forest base)
//   learning_rate, base_score
//   params        training hyperparameters (see params_to_json)
//   train_loss    boosting log-loss per stage, first entry before any stage
//   tree_weights  AdaBoost stage weights
//   trees         [{ "nodes": [ {feature, threshold, left, right} | {leaf: [..]} ] }]
// Doubles are written in shortest round-trip form, so a reload predicts
// bit-identically.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "kstone/error.hpp"
#include "kstone/learners/ensemble.hpp"

namespace kstone {

inline constexpr const char* kModelFormat = "kstone-model";
inline constexpr int kModelVersion = 1;

using nlohmann::json;

inline std::string_view to_string(FeatureSampling s) { return s == FeatureSampling::All ? "all" : "sqrt"; }
inline std::string_view to_string(BaggingBase b) { return b == BaggingBase::Tree ? "tree" : "forest"; }

inline json params_to_json(const EnsembleParams& p) {
  return json{{"kind", to_string(p.kind)},
              {"n_estimators", p.n_estimators},
              {"learning_rate", p.learning_rate},
              {"base_score", p.base_score},
              {"bootstrap", p.bootstrap},
              {"bagging_base", to_string(p.bagging_base)},
              {"bagging_forest_trees", p.bagging_forest_trees},
              {"seed", p.seed},
              {"tree",
               {{"max_depth", p.tree.max_depth},
                {"min_samples_split", p.tree.min_samples_split},
                {"min_samples_leaf", p.tree.min_samples_leaf},
                {"features_per_split", to_string(p.tree.features_per_split)},
                {"min_split_loss", p.tree.min_split_loss},
                {"lambda", p.tree.lambda}}}};
}

// Missing fields keep their defaults, so preset files may be partial.
inline EnsembleParams params_from_json(const json& j, EnsembleParams p = {}) {
  try {
    if (j.contains("kind")) {
      auto k = parse_ensemble_kind(j.at("kind").get<std::string>());
      if (!k) fail(errc::kUnknownToken, "unknown ensemble kind " + j.at("kind").dump());
      p.kind = *k;
    }
    if (j.contains("n_estimators")) p.n_estimators = j.at("n_estimators").get<int>();
    if (j.contains("learning_rate")) p.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("base_score")) p.base_score = j.at("base_score").get<double>();
    if (j.contains("bootstrap")) p.bootstrap = j.at("bootstrap").get<bool>();
    if (j.contains("bagging_base")) {
      const auto b = j.at("bagging_base").get<std::string>();
      if (b != "tree" && b != "forest") fail(errc::kUnknownToken, "unknown bagging base " + b);
      p.bagging_base = b == "tree" ? BaggingBase::Tree : BaggingBase::Forest;
    }
    if (j.contains("bagging_forest_trees")) p.bagging_forest_trees = j.at("bagging_forest_trees").get<int>();
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tree")) {
      const auto& t = j.at("tree");
      if (t.contains("max_depth")) p.tree.max_depth = t.at("max_depth").get<int>();
      if (t.contains("min_samples_split")) p.tree.min_samples_split = t.at("min_samples_split").get<int>();
      if (t.contains("min_samples_leaf")) p.tree.min_samples_leaf = t.at("min_samples_leaf").get<int>();
      if (t.contains("features_per_split")) {
        const auto f = t.at("features_per_split").get<std::string>();
        if (f != "all" && f != "sqrt") fail(errc::kUnknownToken, "unknown features_per_split " + f);
        p.tree.features_per_split = f == "all" ? FeatureSampling::All : FeatureSampling::Sqrt;
      }
      if (t.contains("min_split_loss")) p.tree.min_split_loss = t.at("min_split_loss").get<double>();
      if (t.contains("lambda")) p.tree.lambda = t.at("lambda").get<double>();
    }
  } catch (const json::exception& e) {
    fail(errc::kCorrupt, std::string("bad hyperparameter record: ") + e.what());
  }
  return p;
}

inline json model_to_json(const TreeEnsembleModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return json{{"format", kModelFormat},
              {"version", kModelVersion},
              {"kind", to_string(m.kind)},
              {"classes", m.classes},
              {"n_features", m.n_features},
              {"group_size", m.group_size},
              {"learning_rate", m.learning_rate},
              {"base_score", m.base_score},
              {"params", params_to_json(m.params)},
              {"train_loss", m.train_loss},
              {"tree_weights", m.tree_weights},
              {"trees", std::move(trees)}};
}

inline TreeEnsembleModel model_from_json(const json& j) {
  TreeEnsembleModel m;
  try {
    if (!j.is_object() || j.value("format", "") != kModelFormat) fail(errc::kCorrupt, "not a kstone model");
    const int version = j.at("version").get<int>();
    if (version != kModelVersion) {
      fail(errc::kVersion, "model version " + std::to_string(version) + " unsupported (expected " +
                               std::to_string(kModelVersion) + ")");
    }
    auto kind = parse_ensemble_kind(j.at("kind").get<std::string>());
    if (!kind) fail(errc::kCorrupt, "unknown model kind");
    m.kind = *kind;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.group_size = j.at("group_size").get<std::size_t>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.base_score = j.at("base_score").get<double>();
    m.params = params_from_json(j.at("params"));
    m.train_loss = j.at("train_loss").get<std::vector<double>>();
    m.tree_weights = j.at("tree_weights").get<std::vector<double>>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt.at("nodes")) {
        TreeNode n;
        if (jn.contains("leaf")) {
          n.value = jn.at("leaf").get<std::vector<double>>();
        } else {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        }
        t.nodes.push_back(std::move(n));
      }
      m.trees.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(errc::kCorrupt, std::string("malformed model: ") + e.what());
  }

  // Structural checks.
  if (m.classes.size() < 2) fail(errc::kCorrupt, "model has fewer than two classes");
  if (m.trees.empty()) fail(errc::kCorrupt, "model has no trees");
  if (m.group_size == 0 || m.trees.size() % m.group_size != 0) fail(errc::kCorrupt, "bad group size");
  if (m.kind == EnsembleKind::AdaBoost && m.tree_weights.size() != m.trees.size()) {
    fail(errc::kCorrupt, "AdaBoost weight count differs from tree count");
  }
  if (m.kind == EnsembleKind::GradientBoosting && m.trees.size() % m.classes.size() != 0) {
    fail(errc::kCorrupt, "boosting tree count is not a multiple of the class count");
  }
  for (double w : m.tree_weights) {
    if (!std::isfinite(w)) fail(errc::kCorrupt, "non-finite stage weight");
  }
  const std::size_t leaf_width = m.kind == EnsembleKind::GradientBoosting ? 1 : m.classes.size();
  for (const auto& t : m.trees) {
    if (t.nodes.empty()) fail(errc::kCorrupt, "empty tree");
    const int count = static_cast<int>(t.nodes.size());
    for (int i = 0; i < count; ++i) {
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) {
        if (n.value.size() != leaf_width) fail(errc::kCorrupt, "leaf value has the wrong width");
        continue;
      }
      if (static_cast<std::size_t>(n.feature) >= m.n_features) fail(errc::kCorrupt, "feature index out of range");
      // Children always follow their parent, which also rules out cycles.
      if (n.left <= i || n.right <= i || n.left >= count || n.right >= count) {
        fail(errc::kCorrupt, "dangling child index");
      }
    }
  }
  return m;
}

inline std::string serialize_model(const TreeEnsembleModel& m) { return model_to_json(m).dump() + "\n"; }

inline TreeEnsembleModel deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(errc::kCorrupt, std::string("corrupt model file: ") + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const TreeEnsembleModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::kIo, "cannot write " + path.string());
  out << serialize_model(m);
  if (!out) fail(errc::kIo, "write failed: " + path.string());
}

inline TreeEnsembleModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::kIo, "cannot open model " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace kstone
