#pragma once

// Patch grid extraction over masked stone images, instrument rejection,
// class balancing, the eight-way augmentation and per-patch whitening.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "kstone/dataset.hpp"
#include "kstone/error.hpp"
#include "kstone/rng.hpp"

namespace kstone {

inline constexpr std::array<int, 5> kAllowedPatchSides{64, 128, 200, 256, 512};

struct GridParams {
  int patch_side = 256;
  int max_overlap = 20;
  double max_non_stone_fraction = 0.10;
  std::uint64_t seed = 0;

  int stride() const { return patch_side - max_overlap; }

  void validate() const {
    if (std::find(kAllowedPatchSides.begin(), kAllowedPatchSides.end(), patch_side) ==
        kAllowedPatchSides.end()) {
      fail(errc::kInvalidArgument, "patch side " + std::to_string(patch_side) +
                                       " not in {64, 128, 200, 256, 512}");
    }
    if (max_overlap < 0 || max_overlap >= patch_side) {
      fail(errc::kInvalidArgument, "max overlap must satisfy 0 <= overlap < patch side");
    }
    if (!(max_non_stone_fraction >= 0.0 && max_non_stone_fraction <= 1.0)) {
      fail(errc::kInvalidArgument, "max non-stone fraction must lie in [0, 1]");
    }
  }
};

struct PatchMeta {
  ClassLabel cls = ClassLabel::WW;
  ViewKind view = ViewKind::Surface;
  std::string stone_id;
};

// Fraction of blue-dominant pixels (B > R and B > G). Tissue and stone are
// red/green dominated, endoscopic instruments are not.
inline double detect_instrument(const RgbImage& patch) {
  std::size_t blue = 0;
  for (std::size_t i = 0; i < patch.pixels.size(); i += 3) {
    const auto r = patch.pixels[i], g = patch.pixels[i + 1], b = patch.pixels[i + 2];
    if (b > r && b > g) ++blue;
  }
  return static_cast<double>(blue) / static_cast<double>(patch.pixel_count());
}

// Crops a side x side window; pixels beyond the raster are black and non-stone.
inline RgbImage crop_padded(const RgbImage& image, int x0, int y0, int side) {
  RgbImage out(side, side);
  for (int y = 0; y < side; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= image.height) continue;
    for (int x = 0; x < side; ++x) {
      const int sx = x0 + x;
      if (sx < 0 || sx >= image.width) continue;
      const auto src = image.offset(sx, sy);
      const auto dst = out.offset(x, y);
      out.pixels[dst] = image.pixels[src];
      out.pixels[dst + 1] = image.pixels[src + 1];
      out.pixels[dst + 2] = image.pixels[src + 2];
    }
  }
  return out;
}

// Summed-area table over the stone mask for O(1) window counts.
class StoneCounter {
 public:
  explicit StoneCounter(const BinaryMask& mask)
      : w_(mask.width), h_(mask.height),
        sums_(static_cast<std::size_t>(w_ + 1) * static_cast<std::size_t>(h_ + 1), 0) {
    for (int y = 0; y < h_; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < w_; ++x) {
        row += mask.stone(x, y) ? 1 : 0;
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  // Stone pixels in [x0, x0+side) x [y0, y0+side), clipped to the raster.
  std::int64_t count(int x0, int y0, int side) const {
    const int xa = std::clamp(x0, 0, w_), xb = std::clamp(x0 + side, 0, w_);
    const int ya = std::clamp(y0, 0, h_), yb = std::clamp(y0 + side, 0, h_);
    return at(xb, yb) - at(xa, yb) - at(xb, ya) + at(xa, ya);
  }

  double non_stone_fraction(int x0, int y0, int side) const {
    const double total = static_cast<double>(side) * static_cast<double>(side);
    return (total - static_cast<double>(count(x0, y0, side))) / total;
  }

 private:
  std::int64_t& at(int x, int y) {
    return sums_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_ + 1) +
                 static_cast<std::size_t>(x)];
  }
  std::int64_t at(int x, int y) const {
    return sums_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_ + 1) +
                 static_cast<std::size_t>(x)];
  }

  int w_, h_;
  std::vector<std::int64_t> sums_;
};

struct BoundingBox {
  int x0, y0, x1, y1;  // inclusive
};

inline std::optional<BoundingBox> stone_bounding_box(const BinaryMask& mask) {
  BoundingBox b{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.stone(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  if (b.x1 < 0) return std::nullopt;
  return b;
}

// Grid anchors along one axis of the stone extent [lo, hi]. Strided anchors
// start at lo and advance by `stride` while the patch stays inside the extent;
// if the last one stops short of hi, one more anchor sits flush against hi.
struct AxisAnchors {
  std::vector<int> positions;
  bool has_flush = false;
};

inline AxisAnchors grid_anchors(int lo, int hi, int side, int stride) {
  AxisAnchors a;
  const int end = hi + 1;
  if (end - lo <= side) {
    a.positions.push_back(lo);
    return a;
  }
  for (int p = lo; p + side <= end; p += stride) a.positions.push_back(p);
  if (a.positions.back() + side < end) {
    a.positions.push_back(end - side);
    a.has_flush = true;
  }
  return a;
}

inline std::vector<PatchRecord> extract_patch_grid(const RgbImage& image, const BinaryMask& mask,
                                                   const GridParams& params,
                                                   const PatchMeta& meta) {
  params.validate();
  if (image.width != mask.width || image.height != mask.height) {
    fail(errc::kDimensionMismatch, "image and mask dimensions differ");
  }
  std::vector<PatchRecord> out;
  const auto box = stone_bounding_box(mask);
  if (!box) return out;

  const int side = params.patch_side;
  const AxisAnchors xs = grid_anchors(box->x0, box->x1, side, params.stride());
  const AxisAnchors ys = grid_anchors(box->y0, box->y1, side, params.stride());
  const StoneCounter counter(mask);

  for (std::size_t row = 0; row < ys.positions.size(); ++row) {
    for (std::size_t col = 0; col < xs.positions.size(); ++col) {
      const int x = xs.positions[col], y = ys.positions[row];
      if (counter.non_stone_fraction(x, y, side) > params.max_non_stone_fraction) continue;
      RgbImage patch = crop_padded(image, x, y, side);
      if (detect_instrument(patch) > params.max_non_stone_fraction) continue;
      PatchRecord r;
      r.patch = std::move(patch);
      r.origin_x = x;
      r.origin_y = y;
      r.cls = meta.cls;
      r.view = meta.view;
      r.stone_id = meta.stone_id;
      r.grid_col = static_cast<int>(col);
      r.grid_row = static_cast<int>(row);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Class balancing

enum class BalanceMode { OverSample, UnderSample };

inline std::string_view to_string(BalanceMode m) {
  return m == BalanceMode::OverSample ? "over" : "under";
}

struct SourceImage {
  PatchMeta meta;
  ImagePair pair;
};

// Source rasters available for drawing extra off-grid patches.
using ImageStore = std::vector<SourceImage>;

inline ImageStore build_image_store(const CorpusManifest& manifest) {
  ImageStore store;
  store.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    store.push_back({{e.cls, e.view, e.stone_id}, load_image_pair(e, manifest.base_dir)});
  }
  return store;
}

inline constexpr int kOversampleAttemptsPerPatch = 100;

// Per-view target count: the largest (OverSample) or smallest (UnderSample)
// class count among the classes present in that view.
inline std::map<ViewKind, std::size_t> balance_targets(const std::vector<PatchRecord>& records,
                                                        BalanceMode mode) {
  std::map<std::pair<ViewKind, ClassLabel>, std::size_t> counts;
  for (const auto& r : records) ++counts[{r.view, r.cls}];
  std::map<ViewKind, std::size_t> targets;
  for (const auto& [key, n] : counts) {
    auto [it, inserted] = targets.emplace(key.first, n);
    if (!inserted) {
      it->second = mode == BalanceMode::OverSample ? std::max(it->second, n)
                                                   : std::min(it->second, n);
    }
  }
  return targets;
}

inline std::vector<PatchRecord> balance(const std::vector<PatchRecord>& records, BalanceMode mode,
                                        const ImageStore& store, const GridParams& params) {
  params.validate();
  const auto targets = balance_targets(records, mode);

  std::map<std::pair<ViewKind, ClassLabel>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[{records[i].view, records[i].cls}].push_back(i);
  }

  if (mode == BalanceMode::UnderSample) {
    std::vector<bool> keep(records.size(), true);
    for (const auto& [key, idx] : groups) {
      const std::size_t target = targets.at(key.first);
      if (idx.size() <= target) continue;
      Rng rng(derive_seed(params.seed, "under/" + std::string(to_string(key.first)) + "/" +
                                           std::string(to_string(key.second))));
      const auto perm = rng.permutation(idx.size());
      for (std::size_t j = target; j < perm.size(); ++j) keep[idx[perm[j]]] = false;
    }
    std::vector<PatchRecord> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (keep[i]) out.push_back(records[i]);
    }
    return out;
  }

  std::vector<PatchRecord> out = records;
  const int side = params.patch_side;
  for (const auto& [key, idx] : groups) {
    const auto [view, cls] = key;
    const std::size_t target = targets.at(view);
    if (idx.size() >= target) continue;
    for (std::size_t i : idx) {
      if (records[i].side() != side) {
        fail(errc::kInvalidArgument, "record patch side differs from grid patch side");
      }
    }

    std::vector<const SourceImage*> sources;
    for (const auto& s : store) {
      if (s.meta.cls == cls && s.meta.view == view && s.pair.image.width >= side &&
          s.pair.image.height >= side) {
        sources.push_back(&s);
      }
    }
    const std::string label = std::string(to_string(cls)) + "/" + std::string(to_string(view));
    if (sources.empty()) {
      fail(errc::kOversample, "cannot over-sample class " + label + ": no source image large enough");
    }
    // Existing grid cells per stone, which off-grid draws must avoid.
    std::set<std::tuple<std::string, int, int>> grid_cells;
    for (std::size_t i : idx) {
      if (records[i].grid_col >= 0) {
        grid_cells.emplace(records[i].stone_id, records[i].origin_x, records[i].origin_y);
      }
    }
    std::vector<StoneCounter> counters;
    counters.reserve(sources.size());
    for (const auto* s : sources) counters.emplace_back(s->pair.mask);

    Rng rng(derive_seed(params.seed, "over/" + label));
    const std::size_t need = target - idx.size();
    for (std::size_t n = 0; n < need; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < kOversampleAttemptsPerPatch && !placed; ++attempt) {
        const std::size_t si = static_cast<std::size_t>(rng.below(sources.size()));
        const auto& src = *sources[si];
        const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.pair.image.width - side + 1)));
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.pair.image.height - side + 1)));
        if (grid_cells.count({src.meta.stone_id, x, y})) continue;
        if (counters[si].non_stone_fraction(x, y, side) > params.max_non_stone_fraction) continue;
        RgbImage patch = crop_padded(src.pair.image, x, y, side);
        if (detect_instrument(patch) > params.max_non_stone_fraction) continue;
        PatchRecord r;
        r.patch = std::move(patch);
        r.origin_x = x;
        r.origin_y = y;
        r.cls = cls;
        r.view = view;
        r.stone_id = src.meta.stone_id;
        r.synthetic = true;
        out.push_back(std::move(r));
        placed = true;
      }
      if (!placed) {
        fail(errc::kOversample, "cannot over-sample class " + label + ": no valid off-grid position after " +
                                    std::to_string(kOversampleAttemptsPerPatch) + " attempts");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

inline constexpr double kPerspectiveJitter = 0.05;
inline constexpr double kShear = 0.1;
inline constexpr std::size_t kAugmentMultiplicity = 8;

enum class Augmentation { Identity, HFlip, VFlip, Perspective, Rot90, Rot180, Rot270, Shear };

inline constexpr std::array<Augmentation, kAugmentMultiplicity> kAllAugmentations{
    Augmentation::Identity, Augmentation::HFlip,  Augmentation::VFlip,  Augmentation::Perspective,
    Augmentation::Rot90,    Augmentation::Rot180, Augmentation::Rot270, Augmentation::Shear};

inline RgbImage apply_augmentation(const RgbImage& patch, Augmentation kind) {
  if (patch.width != patch.height) fail(errc::kInvalidArgument, "augmentation needs a square patch");
  const cv::Mat src = to_bgr_mat(patch);
  cv::Mat dst;
  const auto s = static_cast<float>(patch.width - 1);
  switch (kind) {
    case Augmentation::Identity: return patch;
    case Augmentation::HFlip: cv::flip(src, dst, 1); break;
    case Augmentation::VFlip: cv::flip(src, dst, 0); break;
    case Augmentation::Rot90: cv::rotate(src, dst, cv::ROTATE_90_CLOCKWISE); break;
    case Augmentation::Rot180: cv::rotate(src, dst, cv::ROTATE_180); break;
    case Augmentation::Rot270: cv::rotate(src, dst, cv::ROTATE_90_COUNTERCLOCKWISE); break;
    case Augmentation::Perspective: {
      // Keystone: the top edge is pulled inwards by the jitter on both sides.
      const auto j = static_cast<float>(kPerspectiveJitter * patch.width);
      const cv::Point2f from[4] = {{0, 0}, {s, 0}, {s, s}, {0, s}};
      const cv::Point2f to[4] = {{j, 0}, {s - j, 0}, {s, s}, {0, s}};
      const cv::Mat h = cv::getPerspectiveTransform(from, to);
      cv::warpPerspective(src, dst, h, src.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
      break;
    }
    case Augmentation::Shear: {
      const cv::Mat a = (cv::Mat_<double>(2, 3) << 1.0, kShear, -kShear * s / 2.0, 0.0, 1.0, 0.0);
      cv::warpAffine(src, dst, a, src.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
      break;
    }
  }
  return from_bgr_mat(dst);
}

// [original, hflip, vflip, perspective, rot90, rot180, rot270, shear]; all but
// the first are flagged synthetic.
inline std::vector<PatchRecord> augment(const PatchRecord& record) {
  std::vector<PatchRecord> out;
  out.reserve(kAugmentMultiplicity);
  for (Augmentation kind : kAllAugmentations) {
    PatchRecord r = record;
    if (kind != Augmentation::Identity) {
      r.patch = apply_augmentation(record.patch, kind);
      r.synthetic = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whitening

inline constexpr double kWhitenSigmaFloor = 1e-12;

// Real-valued interleaved 3-channel raster.
struct RealRaster {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y, int c) const {
    return values[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)];
  }
};

namespace detail {
template <typename T>
RealRaster whiten_channels(const std::vector<T>& interleaved, int width, int height) {
  RealRaster out{width, height, std::vector<double>(interleaved.size(), 0.0)};
  const std::size_t n = interleaved.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += static_cast<double>(interleaved[i * 3 + c]);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(interleaved[i * 3 + c]) - mean;
      var += d * d;
    }
    const double sigma = std::sqrt(var / static_cast<double>(n));
    if (sigma < kWhitenSigmaFloor) continue;
    for (std::size_t i = 0; i < n; ++i) {
      out.values[i * 3 + c] = (static_cast<double>(interleaved[i * 3 + c]) - mean) / sigma;
    }
  }
  return out;
}
}  // namespace detail

// Per-channel standardization with the channel's own mean and population std.
inline RealRaster whiten(const RgbImage& patch) {
  return detail::whiten_channels(patch.pixels, patch.width, patch.height);
}

inline RealRaster whiten(const RealRaster& raster) {
  return detail::whiten_channels(raster.values, raster.width, raster.height);
}

}  // namespace kstone
