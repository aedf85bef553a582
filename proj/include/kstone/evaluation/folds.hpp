#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kstone/error.hpp"
#include "kstone/rng.hpp"

namespace kstone {

enum class GroupingMode { PerPatch, PerStone };

inline std::string_view to_string(GroupingMode g) {
  return g == GroupingMode::PerPatch ? "per-patch" : "per-stone";
}

inline std::optional<GroupingMode> parse_grouping(std::string_view s) {
  if (s == "per-patch") return GroupingMode::PerPatch;
  if (s == "per-stone") return GroupingMode::PerStone;
  return std::nullopt;
}

struct FoldSplit {
  std::size_t k = 0;
  GroupingMode mode = GroupingMode::PerPatch;
  std::vector<std::vector<std::size_t>> folds;  // test indices, ascending

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& f : folds) n += f.size();
    return n;
  }

  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

// Stratified k-fold split. Per-patch: each class's shuffled samples are dealt
// round-robin, so every fold holds floor or ceil of (class count / k) of
// each class. Per-stone: whole stones are dealt, largest first, to the fold
// holding the fewest samples of that class, so a stone never straddles folds.
inline FoldSplit stratified_kfold(std::span<const int> labels, std::span<const std::string> groups,
                                  std::size_t k, GroupingMode mode, std::uint64_t seed) {
  if (k < 2) fail(errc::kInvalidArgument, "k must be >= 2");
  if (mode == GroupingMode::PerStone && groups.size() != labels.size()) {
    fail(errc::kInvalidArgument, "per-stone folds need one group id per sample");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (mode == GroupingMode::PerStone) {
    std::map<std::string_view, int> stone_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = stone_class.emplace(groups[i], labels[i]);
      if (!inserted && it->second != labels[i]) {
        fail(errc::kInvalidArgument, "stone " + groups[i] + " carries more than one class");
      }
    }
  }

  FoldSplit split;
  split.k = k;
  split.mode = mode;
  split.folds.assign(k, {});
  std::size_t offset = 0;
  for (const auto& [cls, idx] : by_class) {
    Rng rng(derive_seed(seed, "fold/" + std::to_string(cls)));
    if (mode == GroupingMode::PerPatch) {
      if (idx.size() < k) {
        fail(errc::kInvalidArgument, "class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                                         " samples, fewer than k = " + std::to_string(k));
      }
      auto order = idx;
      rng.shuffle(order);
      for (std::size_t j = 0; j < order.size(); ++j) split.folds[(offset + j) % k].push_back(order[j]);
      offset = (offset + order.size()) % k;
      continue;
    }
    std::map<std::string, std::vector<std::size_t>> stones;
    for (std::size_t i : idx) stones[groups[i]].push_back(i);
    if (stones.size() < k) {
      fail(errc::kInvalidArgument, "class " + std::to_string(cls) + " has " + std::to_string(stones.size()) +
                                       " stones, fewer than k = " + std::to_string(k));
    }
    std::vector<const std::vector<std::size_t>*> members;
    for (const auto& [id, rows] : stones) members.push_back(&rows);
    rng.shuffle(members);
    std::stable_sort(members.begin(), members.end(),
                     [](const auto* a, const auto* b) { return a->size() > b->size(); });
    std::vector<std::size_t> load(k, 0);
    for (std::size_t m = 0; m < members.size(); ++m) {
      std::size_t best = offset % k;
      for (std::size_t step = 0; step < k; ++step) {
        const std::size_t f = (offset + step) % k;
        if (load[f] < load[best]) best = f;
      }
      load[best] += members[m]->size();
      split.folds[best].insert(split.folds[best].end(), members[m]->begin(), members[m]->end());
    }
    offset = (offset + 1) % k;
  }
  for (auto& f : split.folds) std::sort(f.begin(), f.end());
  return split;
}

}  // namespace kstone
