#pragma once

// Greedy binary decision trees: weighted-Gini classification trees and
// second-order (gradient/hessian) regression trees for boosting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kstone/error.hpp"
#include "kstone/rng.hpp"

namespace kstone {

// Dense row-major sample matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }

  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows_in) {
    FeatureMatrix m(rows_in.size(), rows_in.empty() ? 0 : rows_in.front().size());
    for (std::size_t i = 0; i < m.rows; ++i) {
      if (rows_in[i].size() != m.cols) fail(errc::kInvalidArgument, "ragged feature rows");
      std::copy(rows_in[i].begin(), rows_in[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    }
    return m;
  }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix m(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols), cols,
                  m.data.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
    return m;
  }
};

enum class FeatureSampling { All, Sqrt };

struct TreeParams {
  int max_depth = 50;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  FeatureSampling features_per_split = FeatureSampling::All;
  double min_split_loss = 0.0;  // gamma, boosting trees only
  double lambda = 1.0;          // L2 on Newton leaf values, boosting trees only

  void validate() const {
    if (max_depth < 1) fail(errc::kInvalidArgument, "max_depth must be >= 1");
    if (min_samples_split < 2) fail(errc::kInvalidArgument, "min_samples_split must be >= 2");
    if (min_samples_leaf < 1) fail(errc::kInvalidArgument, "min_samples_leaf must be >= 1");
    if (!(min_split_loss >= 0.0)) fail(errc::kInvalidArgument, "min_split_loss must be >= 0");
    if (!(lambda >= 0.0)) fail(errc::kInvalidArgument, "lambda must be >= 0");
  }

  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

// Gains closer than this count as equal; the earlier candidate (lower feature
// index, then lower threshold) wins.
inline constexpr double kGainTieTolerance = 1e-12;

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> value;  // class distribution, or one boosting score

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const {
    const TreeNode* n = &nodes.front();
    while (!n->is_leaf()) {
      n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right)];
    }
    return *n;
  }

  // Index of the largest entry of the leaf value; ties go to the lowest index.
  int predict_class(std::span<const double> x) const {
    const auto& v = leaf_for(x).value;
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  }

  double predict_value(std::span<const double> x) const { return leaf_for(x).value.front(); }

  int depth() const {
    int best = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const auto& n = nodes[static_cast<std::size_t>(i)];
      if (!n.is_leaf()) {
        stack.emplace_back(n.left, d + 1);
        stack.emplace_back(n.right, d + 1);
      }
    }
    return best;
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

namespace detail {

// Midpoint between two consecutive distinct sorted values, never equal to the
// upper one (so the upper value always routes right).
inline double midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) / 2.0;
  return m < hi ? m : lo;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Shared recursive builder. `Scorer` knows how to summarise a set of rows, to
// score a candidate split and to produce a leaf value.
template <typename Scorer>
class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, const TreeParams& params, Scorer& scorer, Rng& rng)
      : x_(x), params_(params), scorer_(scorer), rng_(rng) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, rows, 0);
    return tree;
  }

 private:
  int grow(Tree& tree, std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto stats = scorer_.summarize(rows);
    SplitChoice best;
    if (depth < params_.max_depth && static_cast<int>(rows.size()) >= params_.min_samples_split &&
        !scorer_.pure(stats)) {
      best = find_split(rows, stats);
    }
    if (best.feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = scorer_.leaf(stats);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (x_(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  SplitChoice find_split(const std::vector<std::size_t>& rows, const typename Scorer::Stats& stats) {
    const std::size_t d = x_.cols;
    SplitChoice best;
    best.gain = scorer_.min_gain();
    if (params_.features_per_split == FeatureSampling::All) {
      for (std::size_t f = 0; f < d; ++f) scan_feature(rows, stats, f, best);
      return best;
    }
    // Draw floor(sqrt(d)) features, scanned in ascending index order. If none
    // of them varies over the node, keep drawing until one does.
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    const auto perm = rng_.permutation(d);
    std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(m, d)));
    std::sort(chosen.begin(), chosen.end());
    bool any_varies = false;
    for (std::size_t f : chosen) any_varies |= scan_feature(rows, stats, f, best);
    for (std::size_t k = chosen.size(); k < d && !any_varies; ++k) {
      any_varies = scan_feature(rows, stats, perm[k], best);
    }
    return best;
  }

  // Returns whether the feature takes more than one value over the rows.
  bool scan_feature(const std::vector<std::size_t>& rows, const typename Scorer::Stats& total,
                    std::size_t f, SplitChoice& best) {
    sorted_.clear();
    for (std::size_t r : rows) sorted_.emplace_back(x_(r, f), r);
    std::sort(sorted_.begin(), sorted_.end());
    if (sorted_.front().first == sorted_.back().first) return false;
    auto left = scorer_.empty_stats();
    const std::size_t n = sorted_.size();
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      scorer_.add(left, sorted_[i].second);
      if (sorted_[i].first == sorted_[i + 1].first) continue;
      if (i + 1 < min_leaf || n - i - 1 < min_leaf) continue;
      const double gain = scorer_.gain(total, left);
      if (gain > best.gain + kGainTieTolerance) {
        best.feature = static_cast<int>(f);
        best.threshold = midpoint(sorted_[i].first, sorted_[i + 1].first);
        best.gain = gain;
      }
    }
    return true;
  }

  const FeatureMatrix& x_;
  const TreeParams& params_;
  Scorer& scorer_;
  Rng& rng_;
  std::vector<std::pair<double, std::size_t>> sorted_;
};

struct GiniScorer {
  struct Stats {
    std::vector<double> weight;  // per class
    double total = 0.0;
  };

  std::span<const int> labels;
  std::span<const double> weights;  // empty: unit weights
  std::size_t n_classes;

  double w(std::size_t r) const { return weights.empty() ? 1.0 : weights[r]; }

  Stats empty_stats() const { return {std::vector<double>(n_classes, 0.0), 0.0}; }

  void add(Stats& s, std::size_t r) const {
    const double wr = w(r);
    s.weight[static_cast<std::size_t>(labels[r])] += wr;
    s.total += wr;
  }

  Stats summarize(const std::vector<std::size_t>& rows) const {
    Stats s = empty_stats();
    for (std::size_t r : rows) add(s, r);
    return s;
  }

  static double gini(const std::vector<double>& weight, double total) {
    if (total <= 0.0) return 0.0;
    double sum_sq = 0.0;
    for (double v : weight) sum_sq += (v / total) * (v / total);
    return 1.0 - sum_sq;
  }

  bool pure(const Stats& s) const {
    return std::count_if(s.weight.begin(), s.weight.end(), [](double v) { return v > 0.0; }) <= 1;
  }

  // Any split must reduce impurity by more than the tie tolerance.
  double min_gain() const { return 0.0; }

  // gini(parent) - wl/W * gini(left) - wr/W * gini(right)
  double gain(const Stats& total, const Stats& left) const {
    const double wl = left.total, wr = total.total - left.total;
    if (!(wl > 0.0) || !(wr > 0.0)) return 0.0;
    double sq_l = 0.0, sq_r = 0.0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      const double l = left.weight[k], r = total.weight[k] - l;
      sq_l += l * l;
      sq_r += r * r;
    }
    const double wt = total.total;
    return gini(total.weight, wt) - (wl / wt) * (1.0 - sq_l / (wl * wl)) -
           (wr / wt) * (1.0 - sq_r / (wr * wr));
  }

  std::vector<double> leaf(const Stats& s) const {
    std::vector<double> p(n_classes, 0.0);
    for (std::size_t k = 0; k < n_classes; ++k) p[k] = s.total > 0.0 ? s.weight[k] / s.total : 0.0;
    return p;
  }
};

struct NewtonScorer {
  struct Stats {
    double g = 0.0;
    double h = 0.0;
  };

  std::span<const double> grad;
  std::span<const double> hess;
  double lambda;
  double gamma;

  Stats empty_stats() const { return {}; }
  void add(Stats& s, std::size_t r) const {
    s.g += grad[r];
    s.h += hess[r];
  }
  Stats summarize(const std::vector<std::size_t>& rows) const {
    Stats s;
    for (std::size_t r : rows) add(s, r);
    return s;
  }
  bool pure(const Stats&) const { return false; }
  double min_gain() const { return gamma; }

  double score(double g, double h) const { return g * g / (h + lambda); }

  // Loss reduction of the split, before subtracting gamma; the builder only
  // accepts it when it exceeds gamma.
  double gain(const Stats& total, const Stats& left) const {
    const double gr = total.g - left.g, hr = total.h - left.h;
    return 0.5 * (score(left.g, left.h) + score(gr, hr) - score(total.g, total.h));
  }

  std::vector<double> leaf(const Stats& s) const { return {-s.g / (s.h + lambda)}; }
};

inline void check_training_input(const FeatureMatrix& x, std::size_t n_targets,
                                 std::span<const std::size_t> rows) {
  if (x.rows == 0 || rows.empty()) fail(errc::kInvalidArgument, "cannot train a tree on empty data");
  if (x.cols == 0) fail(errc::kInvalidArgument, "cannot train a tree on zero features");
  if (n_targets != x.rows) fail(errc::kInvalidArgument, "feature/target count mismatch");
  for (double v : x.data) {
    if (std::isnan(v)) fail(errc::kInvalidArgument, "NaN feature value");
  }
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

// Classification tree over the given rows (duplicates allowed, as in a
// bootstrap resample). Labels are class indices in [0, n_classes). Weights,
// when given, are per matrix row.
inline Tree train_classification_tree(const FeatureMatrix& x, std::span<const int> labels,
                                      std::size_t n_classes, const TreeParams& params,
                                      std::uint64_t seed, std::span<const double> weights = {},
                                      std::vector<std::size_t> rows = {}) {
  params.validate();
  if (rows.empty()) rows = detail::all_rows(x.rows);
  detail::check_training_input(x, labels.size(), rows);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) fail(errc::kInvalidArgument, "label out of range");
  }
  if (!weights.empty() && weights.size() != x.rows) fail(errc::kInvalidArgument, "weight count mismatch");
  detail::GiniScorer scorer{labels, weights, n_classes};
  Rng rng(seed);
  detail::TreeBuilder builder(x, params, scorer, rng);
  return builder.build(std::move(rows));
}

// Boosting tree: leaves hold -G/(H + lambda); a split is kept only when its
// loss reduction exceeds params.min_split_loss.
inline Tree train_gradient_tree(const FeatureMatrix& x, std::span<const double> grad,
                                std::span<const double> hess, const TreeParams& params,
                                std::uint64_t seed) {
  params.validate();
  auto rows = detail::all_rows(x.rows);
  detail::check_training_input(x, grad.size(), rows);
  if (hess.size() != grad.size()) fail(errc::kInvalidArgument, "gradient/hessian size mismatch");
  detail::NewtonScorer scorer{grad, hess, params.lambda, params.min_split_loss};
  Rng rng(seed);
  detail::TreeBuilder builder(x, params, scorer, rng);
  return builder.build(std::move(rows));
}

}  // namespace kstone
