#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "kstone/evaluation/ablation.hpp"
#include "kstone/evaluation/pca.hpp"
#include "kstone/evaluation/report_io.hpp"
#include "kstone/learners/presets.hpp"
#include "kstone/synthcorpus.hpp"

using namespace kstone;

namespace {

const std::vector<std::string> kFour{"WW", "WD", "UA", "BRU"};

std::vector<int> labels_by_class(const std::vector<std::size_t>& counts) {
  std::vector<int> y;
  for (std::size_t c = 0; c < counts.size(); ++c) y.insert(y.end(), counts[c], static_cast<int>(c));
  return y;
}

void expect_partition(const FoldSplit& s, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& f : s.folds) {
    EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
    for (std::size_t i : f) ++seen[i];
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << i;
}

struct Clusters {
  FeatureMatrix x;
  std::vector<int> y;
};

Clusters noisy_clusters(std::size_t per_class, double spread, std::uint64_t seed) {
  Rng rng(seed);
  Clusters out;
  out.x = FeatureMatrix(4 * per_class, 6);
  for (std::size_t i = 0; i < 4 * per_class; ++i) {
    const int c = static_cast<int>(i / per_class);
    for (std::size_t j = 0; j < 6; ++j) out.x(i, j) = (static_cast<int>(j % 4) == c ? 2.0 : 0.0) + spread * rng.normal();
    out.y.push_back(c);
  }
  return out;
}

EnsembleParams rf(int n) {
  auto p = desk_params(EnsembleKind::RandomForest);
  p.n_estimators = n;
  p.seed = 17;
  return p;
}

ImageStore synthetic_store(int size, int per_class_view, std::uint64_t seed) {
  ImageStore store;
  for (const auto& r : standard_recipes()) {
    for (ViewKind view : kAllViews) {
      for (int i = 0; i < per_class_view; ++i) {
        const std::string stone = std::string(to_string(r.cls)) + "-" + std::to_string(i);
        auto pair = generate_image(r, view, size, derive_seed(seed, stone + std::string(to_string(view))));
        pair.mask = BinaryMask(size, size, true);
        store.push_back({{r.cls, view, stone}, std::move(pair)});
      }
    }
  }
  return store;
}

}  // namespace

TEST(Folds, ExactDivisibility) {
  const auto y = labels_by_class({10, 10, 10, 10});
  const auto s = stratified_kfold(y, {}, 5, GroupingMode::PerPatch, 3);
  ASSERT_EQ(s.folds.size(), 5u);
  expect_partition(s, 40);
  for (const auto& f : s.folds) {
    std::array<int, 4> per{};
    for (std::size_t i : f) ++per[static_cast<std::size_t>(y[i])];
    EXPECT_EQ(per, (std::array<int, 4>{2, 2, 2, 2}));
  }
  EXPECT_EQ(stratified_kfold(y, {}, 5, GroupingMode::PerPatch, 3).folds, s.folds);
  EXPECT_NE(stratified_kfold(y, {}, 5, GroupingMode::PerPatch, 4).folds, s.folds);
}

TEST(Folds, StratificationWithinOne) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::size_t> counts;
    const std::size_t k = 2 + rng.below(6);
    for (int c = 0; c < 4; ++c) counts.push_back(k + rng.below(40));
    const auto y = labels_by_class(counts);
    const auto s = stratified_kfold(y, {}, k, GroupingMode::PerPatch, static_cast<std::uint64_t>(t));
    expect_partition(s, y.size());
    for (const auto& f : s.folds) {
      std::array<double, 4> per{};
      for (std::size_t i : f) per[static_cast<std::size_t>(y[i])] += 1;
      for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_LE(std::abs(per[c] - static_cast<double>(counts[c]) / static_cast<double>(k)), 1.0);
      }
    }
  }
}

TEST(Folds, Errors) {
  const std::vector<int> y{0, 0, 0, 1};
  EXPECT_THROW(stratified_kfold(y, {}, 2, GroupingMode::PerPatch, 0), Error);
  EXPECT_THROW(stratified_kfold(labels_by_class({5, 5}), {}, 1, GroupingMode::PerPatch, 0), Error);
  const std::vector<std::string> groups{"a", "a", "b", "b"};
  EXPECT_THROW(stratified_kfold(labels_by_class({2, 2}), groups, 2, GroupingMode::PerStone, 0), Error);
  const std::vector<std::string> mixed{"a", "b", "b", "c"};
  EXPECT_THROW(stratified_kfold(std::vector<int>{0, 0, 1, 1}, mixed, 2, GroupingMode::PerStone, 0), Error);
}

TEST(Folds, PerStoneKeepsStonesTogether) {
  std::vector<int> y;
  std::vector<std::string> groups;
  Rng rng(6);
  for (int c = 0; c < 4; ++c) {
    for (int s = 0; s < 8; ++s) {
      const int patches = s == 0 ? 7 : 1 + static_cast<int>(rng.below(6));
      for (int p = 0; p < patches; ++p) {
        y.push_back(c);
        groups.push_back("C" + std::to_string(c) + "-" + std::to_string(s));
      }
    }
  }
  const auto split = stratified_kfold(y, groups, 5, GroupingMode::PerStone, 9);
  expect_partition(split, y.size());
  std::map<std::string, std::set<std::size_t>> fold_of;
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    for (std::size_t i : split.folds[f]) fold_of[groups[i]].insert(f);
  }
  for (const auto& [stone, folds] : fold_of) EXPECT_EQ(folds.size(), 1u) << stone;
  for (std::size_t f = 0; f < 5; ++f) {
    const auto train = split.train_indices(f);
    EXPECT_EQ(train.size() + split.folds[f].size(), y.size());
  }
}

TEST(Metrics, PerfectPredictions) {
  const auto y = labels_by_class({3, 1, 2, 5});
  const auto r = compute_metrics(y, y, kFour);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.weighted_f1, 1.0);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(r.confusion[t][p], t == p ? r.per_class[t].support : 0u);
  }
}

TEST(Metrics, AllOneClassPredictor) {
  const auto y = labels_by_class({5, 5, 5, 5});
  const std::vector<int> pred(20, 2);
  const auto r = compute_metrics(y, pred, kFour);
  EXPECT_EQ(r.weighted_recall, 0.25);
  EXPECT_EQ(r.accuracy, 0.25);
  EXPECT_EQ(r.per_class[2].recall, 1.0);
  EXPECT_EQ(r.per_class[2].precision, 0.25);
  EXPECT_DOUBLE_EQ(r.per_class[2].f1, 0.4);
  for (std::size_t c : {0u, 1u, 3u}) {
    EXPECT_EQ(r.per_class[c].recall, 0.0);
    EXPECT_EQ(r.per_class[c].precision, 0.0);
    EXPECT_EQ(r.per_class[c].f1, 0.0);
  }
  EXPECT_DOUBLE_EQ(r.weighted_precision, 0.0625);
  EXPECT_DOUBLE_EQ(r.weighted_f1, 0.1);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(r.confusion[t][2], 5u);
}

TEST(Metrics, WeightedRecallEqualsAccuracyAndRelabeling) {
  Rng rng(10);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> yt(n), yp(n);
    for (std::size_t i = 0; i < n; ++i) {
      yt[i] = static_cast<int>(rng.below(4));
      yp[i] = rng.below(3) ? yt[i] : static_cast<int>(rng.below(4));
    }
    const auto r = compute_metrics(yt, yp, kFour);
    EXPECT_NEAR(r.weighted_recall, r.accuracy, 1e-12);
    std::size_t trace = 0, rows = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      trace += r.confusion[c][c];
      rows = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
      EXPECT_EQ(rows, r.per_class[c].support);
    }
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / static_cast<double>(n));
    for (double v : {r.weighted_precision, r.weighted_recall, r.weighted_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    // Consistent relabeling permutes the per-class rows, weighted values stay.
    const std::array<int, 4> perm{2, 0, 3, 1};
    std::vector<int> pt(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) {
      pt[i] = perm[static_cast<std::size_t>(yt[i])];
      pp[i] = perm[static_cast<std::size_t>(yp[i])];
    }
    const auto q = compute_metrics(pt, pp, kFour);
    EXPECT_NEAR(q.weighted_f1, r.weighted_f1, 1e-12);
    EXPECT_NEAR(q.weighted_precision, r.weighted_precision, 1e-12);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(q.per_class[static_cast<std::size_t>(perm[c])].f1, r.per_class[c].f1);
  }
}

TEST(Metrics, Errors) {
  EXPECT_THROW(compute_metrics(std::vector<int>{0}, std::vector<int>{0, 1}, kFour), Error);
  EXPECT_THROW(compute_metrics(std::vector<int>{}, std::vector<int>{}, kFour), Error);
  EXPECT_THROW(compute_metrics(std::vector<int>{0}, std::vector<int>{4}, kFour), Error);
}

TEST(CrossValidate, SeparableClusters) {
  const auto d = noisy_clusters(25, 0.3, 1);
  const auto folds = stratified_kfold(d.y, {}, 5, GroupingMode::PerPatch, 2);
  const auto r = cross_validate(d.x, d.y, kFour, rf(20), folds);
  EXPECT_GE(r.weighted_f1, 0.95);
  EXPECT_EQ(r.total, 100u);
  EXPECT_EQ(r.folds.size(), 5u);
  EXPECT_EQ(r.metadata.at("k"), "5");
  EXPECT_EQ(r.metadata.at("zero_division"), "0");
  std::size_t pooled = 0;
  for (const auto& f : r.folds) pooled += f.total;
  EXPECT_EQ(pooled, 100u);
  EXPECT_EQ(cross_validate(d.x, d.y, kFour, rf(20), folds, 4).confusion, r.confusion);
}

TEST(CrossValidate, DuplicateHalvesGiveIdenticalFolds) {
  const auto half = noisy_clusters(6, 1.5, 4);
  FeatureMatrix x(48, 6);
  std::vector<int> y;
  for (std::size_t i = 0; i < 48; ++i) {
    for (std::size_t j = 0; j < 6; ++j) x(i, j) = half.x(i % 24, j);
    y.push_back(half.y[i % 24]);
  }
  FoldSplit split;
  split.k = 2;
  split.folds.resize(2);
  for (std::size_t i = 0; i < 48; ++i) split.folds[i / 24].push_back(i);
  const auto r = cross_validate(x, y, kFour, rf(15), split);
  ASSERT_EQ(r.folds.size(), 2u);
  EXPECT_EQ(r.folds[0].confusion, r.folds[1].confusion);
  EXPECT_EQ(r.folds[0].weighted_f1, r.folds[1].weighted_f1);
}

TEST(CrossValidate, FoldOrderAndRowOrderDoNotMatter) {
  const auto d = noisy_clusters(15, 1.2, 8);
  const auto folds = stratified_kfold(d.y, {}, 3, GroupingMode::PerPatch, 5);
  const auto base = cross_validate(d.x, d.y, kFour, rf(15), folds);

  auto reordered = folds;
  std::reverse(reordered.folds.begin(), reordered.folds.end());
  EXPECT_EQ(cross_validate(d.x, d.y, kFour, rf(15), reordered).confusion, base.confusion);

  // Same samples in a shuffled row order, folds mapped along.
  Rng rng(3);
  const auto perm = rng.permutation(d.x.rows);  // new row i holds old row perm[i]
  std::vector<std::size_t> where(d.x.rows);
  FeatureMatrix x(d.x.rows, d.x.cols);
  std::vector<int> y(d.x.rows);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    where[perm[i]] = i;
    for (std::size_t j = 0; j < d.x.cols; ++j) x(i, j) = d.x(perm[i], j);
    y[i] = d.y[perm[i]];
  }
  FoldSplit mapped = folds;
  for (auto& f : mapped.folds) {
    for (auto& i : f) i = where[i];
    std::sort(f.begin(), f.end());
  }
  EXPECT_EQ(cross_validate(x, y, kFour, rf(15), mapped).confusion, base.confusion);
}

TEST(CrossValidate, RejectsBadPartitions) {
  const auto d = noisy_clusters(5, 1.0, 1);
  FoldSplit s;
  s.k = 2;
  s.folds = {{0, 1, 2}, {2, 3}};
  EXPECT_THROW(cross_validate(d.x, d.y, kFour, rf(2), s), Error);
  s.folds = {{0, 1}, {2, 3}};
  EXPECT_THROW(cross_validate(d.x, d.y, kFour, rf(2), s), Error);
}

TEST(Pca, ExactSubspaceRecovery) {
  Rng rng(4);
  std::vector<std::vector<double>> basis(3, std::vector<double>(40));
  for (auto& b : basis) {
    for (auto& v : b) v = rng.normal();
  }
  std::vector<double> offset(40);
  for (auto& v : offset) v = rng.uniform(-3, 3);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 60; ++i) {
    std::vector<double> r = offset;
    for (const auto& b : basis) {
      const double a = rng.normal() * 2;
      for (std::size_t j = 0; j < 40; ++j) r[j] += a * b[j];
    }
    rows.push_back(r);
  }
  const auto x = FeatureMatrix::from_rows(rows);
  const auto e = pca_project(x, 3);
  EXPECT_EQ(e.rank, 3u);
  EXPECT_FALSE(e.rank_deficient);
  double worst = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto back = pca_reconstruct(e, i);
    for (std::size_t j = 0; j < 40; ++j) worst = std::max(worst, std::abs(back[j] - rows[i][j]));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_NEAR(std::accumulate(e.explained_variance.begin(), e.explained_variance.end(), 0.0), 1.0, 1e-9);
  for (std::size_t c = 1; c < 3; ++c) EXPECT_LE(e.explained_variance[c], e.explained_variance[c - 1]);
  // Sign convention and row-order invariance.
  for (std::size_t c = 0; c < 3; ++c) {
    double big = 0;
    for (std::size_t j = 0; j < 40; ++j) {
      if (std::abs(e.components(c, j)) > std::abs(big)) big = e.components(c, j);
    }
    EXPECT_GT(big, 0);
  }
  auto reversed = rows;
  std::reverse(reversed.begin(), reversed.end());
  const auto er = pca_project(FeatureMatrix::from_rows(reversed), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(er.coords(rows.size() - 1 - i, c), e.coords(i, c), 1e-8);
  }
}

TEST(Pca, IsotropicDataSplitsVarianceEvenly) {
  Rng rng(12);
  FeatureMatrix x(6000, 3);
  for (auto& v : x.data) v = rng.normal();
  const auto e = pca_project(x, 3);
  for (double r : e.explained_variance) EXPECT_NEAR(r, 1.0 / 3.0, 0.03);
}

TEST(Pca, DuplicatePointsFlagRank) {
  FeatureMatrix x = FeatureMatrix::from_rows(std::vector<std::vector<double>>(10, std::vector<double>{1, 2, 3, 4}));
  const auto e = pca_project(x, 3);
  EXPECT_TRUE(e.rank_deficient);
  EXPECT_EQ(e.rank, 0u);
  for (double v : e.coords.data) EXPECT_EQ(v, 0.0);
  // Collinear data: one real component, two padded.
  std::vector<std::vector<double>> line;
  for (int i = 0; i < 10; ++i) line.push_back({double(i), 2.0 * i, 0, 1});
  const auto l = pca_project(FeatureMatrix::from_rows(line), 3);
  EXPECT_EQ(l.rank, 1u);
  EXPECT_TRUE(l.rank_deficient);
  EXPECT_NEAR(l.explained_variance[0], 1.0, 1e-12);
  EXPECT_EQ(l.explained_variance[1], 0.0);
  EXPECT_THROW(pca_project(FeatureMatrix(3, 5), 3), Error);
  EXPECT_THROW(pca_project(FeatureMatrix(10, 2), 3), Error);
}

TEST(Ablation, ComboAxisOnSyntheticCorpus) {
  const auto store = synthetic_store(192, 6, 5);
  AblationConfig cfg;
  cfg.params = rf(15);
  cfg.seed = 1;
  AblationAxes axes{{parse_combo("eH"), parse_combo("LBP"), parse_combo("LBP+eHSV")}, {128}, {FeatureView::Surface}};
  std::size_t calls = 0;
  const auto cells = run_ablation(store, axes, cfg, [&](const AblationCell&) { ++calls; });
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(calls, 3u);
  const double full = cells[2].report.weighted_f1;
  EXPECT_GE(full, cells[0].report.weighted_f1 - 0.05);
  EXPECT_GE(full, cells[1].report.weighted_f1 - 0.05);
  EXPECT_EQ(cells[0].report.metadata.at("combo"), "eH");
  EXPECT_EQ(cells[2].report.metadata.at("patch_side"), "128");

  // The table round-trips through the report format.
  const auto text = format_report_table(rows_from_cells(cells), {{"learner", "random_forest"}});
  const auto table = parse_report_table(text);
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[1].at("combo"), "LBP");
  EXPECT_EQ(table.metadata.at("learner"), "random_forest");
  EXPECT_NEAR(std::stod(table.rows[2].at("weighted_f1")), full, 1e-6);
}

TEST(Ablation, PatchSideAndViewAxes) {
  const auto store = synthetic_store(288, 5, 9);
  AblationConfig cfg;
  cfg.params = rf(10);
  AblationAxes axes{{parse_combo("LBP+eHSV")}, {64, 256}, {FeatureView::Surface, FeatureView::Mixed}};
  const auto cells = run_ablation(store, axes, cfg);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].patch_side, 64);
  EXPECT_EQ(cells[1].view, FeatureView::Mixed);
  EXPECT_EQ(cells[2].patch_side, 256);
  for (const auto& c : cells) {
    EXPECT_GT(c.report.total, 0u);
    EXPECT_NEAR(c.report.weighted_recall, c.report.accuracy, 1e-12);
  }
  EXPECT_FALSE(svg_patch_size_plot(cells).empty());
}

TEST(Ablation, Errors) {
  const auto store = synthetic_store(96, 1, 1);
  AblationConfig cfg;
  cfg.params = rf(2);
  EXPECT_THROW(run_ablation(store, {{}, {64}, {FeatureView::Surface}}, cfg), Error);
  EXPECT_THROW(run_ablation(store, {{parse_combo("eH")}, {}, {FeatureView::Surface}}, cfg), Error);
  EXPECT_THROW(run_ablation(store, {{parse_combo("eH")}, {64}, {}}, cfg), Error);
  EXPECT_THROW(run_ablation({}, {{parse_combo("eH")}, {64}, {FeatureView::Surface}}, cfg), Error);
  EXPECT_THROW(run_ablation(store, {{parse_combo("eH")}, {100}, {FeatureView::Surface}}, cfg), Error);
  EXPECT_EQ(descriptor_table_combos().size(), 7u);
  EXPECT_EQ(to_string(descriptor_table_combos()[6]), "LBP+eHSV");
}

TEST(ReportIo, EmbeddingHeader) {
  FeatureMatrix x(6, 4);
  Rng rng(1);
  for (auto& v : x.data) v = rng.normal();
  const auto text = format_embedding(pca_project(x, 3));
  EXPECT_EQ(text.rfind(std::string(kEmbeddingMagic), 0), 0u);
  EXPECT_NE(text.find("method=pca"), std::string::npos);
}
