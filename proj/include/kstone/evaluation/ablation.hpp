#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kstone/error.hpp"
#include "kstone/evaluation/cross_validate.hpp"
#include "kstone/features.hpp"
#include "kstone/patching.hpp"

namespace kstone {

struct AblationAxes {
  std::vector<FeatureCombo> combos;
  std::vector<int> patch_sides;
  std::vector<FeatureView> views;
};

// Descriptor rows eH, eS, eV, eHSV, LBP, LBP+eH, LBP+eHSV.
inline std::vector<FeatureCombo> descriptor_table_combos() {
  std::vector<FeatureCombo> out;
  for (const char* name : {"eH", "eS", "eV", "eHSV", "LBP", "LBP+eH", "LBP+eHSV"}) {
    out.push_back(parse_combo(name));
  }
  return out;
}

struct AblationConfig {
  GridParams grid;  // patch_side is overridden per cell
  LbpParams lbp;
  EnsembleParams params;
  std::size_t k = 5;
  GroupingMode grouping = GroupingMode::PerPatch;
  std::uint64_t seed = 0;  // folds and mixed pairing
  std::optional<BalanceMode> balance;
  std::size_t workers = 1;
};

struct AblationCell {
  FeatureCombo combo;
  int patch_side = 0;
  FeatureView view = FeatureView::Surface;
  EvalReport report;
};

// Feature vectors of every patch extracted from the store at one side.
inline std::vector<FeatureVector> featurize_store(const ImageStore& store, const GridParams& grid,
                                                  const LbpParams& lbp, std::optional<BalanceMode> balance_mode,
                                                  std::size_t workers) {
  std::vector<PatchRecord> records;
  for (const auto& src : store) {
    auto patches = extract_patch_grid(src.pair.image, src.pair.mask, grid, src.meta);
    records.insert(records.end(), std::make_move_iterator(patches.begin()),
                   std::make_move_iterator(patches.end()));
  }
  if (balance_mode) records = balance(records, *balance_mode, store, grid);
  return featurize_all(records, lbp, workers);
}

inline std::vector<FeatureVector> vectors_for_view(const std::vector<FeatureVector>& all, FeatureView view,
                                                   std::uint64_t seed) {
  std::vector<FeatureVector> surface, section;
  for (const auto& v : all) (v.view == FeatureView::Surface ? surface : section).push_back(v);
  switch (view) {
    case FeatureView::Surface: return surface;
    case FeatureView::Section: return section;
    case FeatureView::Mixed: return pair_mixed(surface, section, seed);
  }
  return {};
}

using AblationProgress = std::function<void(const AblationCell&)>;

// One cross-validated report per (patch side, view, combo) cell, in that
// nesting order.
inline std::vector<AblationCell> run_ablation(const ImageStore& store, const AblationAxes& axes,
                                              const AblationConfig& config,
                                              const AblationProgress& progress = {}) {
  if (axes.combos.empty()) fail(errc::kInvalidArgument, "ablation has no feature combos");
  if (axes.patch_sides.empty()) fail(errc::kInvalidArgument, "ablation has no patch sides");
  if (axes.views.empty()) fail(errc::kInvalidArgument, "ablation has no view modes");
  if (store.empty()) fail(errc::kInvalidArgument, "ablation corpus is empty");
  config.params.validate();
  for (int side : axes.patch_sides) {
    GridParams g = config.grid;
    g.patch_side = side;
    g.validate();
  }

  std::vector<AblationCell> cells;
  for (int side : axes.patch_sides) {
    GridParams grid = config.grid;
    grid.patch_side = side;
    const auto all = featurize_store(store, grid, config.lbp, config.balance, config.workers);
    for (FeatureView view : axes.views) {
      const auto vectors = vectors_for_view(all, view, config.seed);
      if (vectors.empty()) {
        fail(errc::kInvalidArgument, "no " + std::string(to_string(view)) + " patches at side " +
                                         std::to_string(side));
      }
      for (FeatureCombo combo : axes.combos) {
        std::vector<FeatureVector> selected;
        selected.reserve(vectors.size());
        for (const auto& v : vectors) selected.push_back(select_features(v, combo));
        AblationCell cell{combo, side, view, {}};
        cell.report = cross_validate(selected, config.params, config.k, config.grouping, config.seed,
                                     config.workers);
        cell.report.metadata["combo"] = to_string(combo);
        cell.report.metadata["patch_side"] = std::to_string(side);
        cell.report.metadata["view"] = std::string(to_string(view));
        cell.report.metadata["lbp_window"] = std::to_string(config.lbp.window_side);
        cell.report.metadata["fold_seed"] = std::to_string(config.seed);
        if (progress) progress(cell);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace kstone
