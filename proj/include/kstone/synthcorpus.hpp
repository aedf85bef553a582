#pragma once

// Synthetic four-class corpus with known, separable colour and texture
// statistics. Every class has its own hue and texture kind; surface and
// section images of one stone share a stone id. Output is byte-identical per
// seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kstone/dataset.hpp"
#include "kstone/error.hpp"
#include "kstone/evaluation/cross_validate.hpp"
#include "kstone/evaluation/metrics.hpp"
#include "kstone/parallel.hpp"
#include "kstone/rng.hpp"

namespace kstone {

enum class TextureKind { Smooth, FineGrain, Blotchy, Striped };

inline std::string_view to_string(TextureKind t) {
  switch (t) {
    case TextureKind::Smooth: return "smooth";
    case TextureKind::FineGrain: return "fine-grain";
    case TextureKind::Blotchy: return "blotchy";
    case TextureKind::Striped: return "striped";
  }
  return "?";
}

struct ClassRecipe {
  ClassLabel cls = ClassLabel::WW;
  double base_hue = 0.0;    // degrees
  double hue_jitter = 6.0;  // per-image offset, degrees
  double hue_swing = 6.0;   // texture-driven variation inside an image, degrees
  double sat_lo = 0.35, sat_hi = 0.65;
  double val_lo = 0.45, val_hi = 0.85;
  TextureKind texture = TextureKind::Smooth;
  double texture_scale = 32.0;  // pixels
  double value_noise = 0.02;    // per-pixel Gaussian sigma on V
  // Image counts per view; negative means "use the corpus-wide count".
  int surface_count = -1;
  int section_count = -1;
};

inline std::vector<ClassRecipe> standard_recipes() {
  std::vector<ClassRecipe> r(4);
  r[0] = {ClassLabel::WW, 20.0, 6.0, 6.0, 0.35, 0.65, 0.40, 0.80, TextureKind::Smooth, 40.0, 0.02};
  r[1] = {ClassLabel::WD, 60.0, 6.0, 6.0, 0.40, 0.70, 0.50, 0.90, TextureKind::FineGrain, 6.0, 0.02};
  r[2] = {ClassLabel::UA, 100.0, 6.0, 6.0, 0.35, 0.70, 0.45, 0.85, TextureKind::Blotchy, 16.0, 0.02};
  r[3] = {ClassLabel::BRU, 140.0, 6.0, 6.0, 0.30, 0.60, 0.45, 0.90, TextureKind::Striped, 10.0, 0.02};
  return r;
}

// Four classes drawn from one and the same recipe; no classifier can beat
// chance on them.
inline std::vector<ClassRecipe> identical_recipes() {
  auto r = standard_recipes();
  for (std::size_t i = 1; i < r.size(); ++i) {
    const auto cls = r[i].cls;
    r[i] = r[0];
    r[i].cls = cls;
  }
  return r;
}

inline void validate_recipes(const std::vector<ClassRecipe>& recipes, bool require_separable = true) {
  if (recipes.empty()) fail(errc::kInvalidArgument, "no class recipes");
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    const auto& r = recipes[i];
    if (!(r.sat_lo >= 0 && r.sat_lo <= r.sat_hi && r.sat_hi <= 1) ||
        !(r.val_lo >= 0 && r.val_lo <= r.val_hi && r.val_hi <= 1)) {
      fail(errc::kInvalidArgument, "recipe ranges must lie in [0, 1]");
    }
    if (!(r.texture_scale >= 1.0)) fail(errc::kInvalidArgument, "texture scale must be >= 1 pixel");
    if (!(r.hue_jitter >= 0 && r.hue_swing >= 0 && r.value_noise >= 0)) {
      fail(errc::kInvalidArgument, "recipe jitter and noise must be non-negative");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (recipes[j].cls == r.cls) fail(errc::kInvalidArgument, "two recipes for one class");
      if (!require_separable) continue;
      double d = std::fmod(std::abs(recipes[j].base_hue - r.base_hue), 360.0);
      d = std::min(d, 360.0 - d);
      if (d < 40.0 && recipes[j].texture == r.texture) {
        fail(errc::kInvalidArgument, "recipes " + std::string(to_string(recipes[j].cls)) + " and " +
                                         std::string(to_string(r.cls)) +
                                         " are closer than 40 degrees and share a texture");
      }
    }
  }
}

struct SynthOptions {
  // Probability that an image gets a blue instrument bar across the stone.
  double instrument_probability = 0.0;
  std::size_t workers = 1;
};

namespace detail {

// Single-octave value noise on a lattice of `scale` pixels with smoothstep
// interpolation; output in [0, 1].
class ValueNoise {
 public:
  ValueNoise(int width, int height, double scale, Rng& rng)
      : scale_(scale),
        cols_(static_cast<int>(std::ceil(width / scale)) + 2),
        rows_(static_cast<int>(std::ceil(height / scale)) + 2),
        ox_(rng.uniform()),
        oy_(rng.uniform()) {
    lattice_.resize(static_cast<std::size_t>(cols_) * static_cast<std::size_t>(rows_));
    for (auto& v : lattice_) v = rng.uniform();
  }

  double at(int x, int y) const {
    const double fx = x / scale_ + ox_, fy = y / scale_ + oy_;
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
    const double tx = smooth(fx - ix), ty = smooth(fy - iy);
    const double a = node(ix, iy), b = node(ix + 1, iy), c = node(ix, iy + 1), d = node(ix + 1, iy + 1);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double node(int x, int y) const {
    return lattice_[static_cast<std::size_t>(y) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(x)];
  }

  double scale_;
  int cols_, rows_;
  double ox_, oy_;
  std::vector<double> lattice_;
};

inline std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  s = std::clamp(s, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  auto q = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
  return {q(r + m), q(g + m), q(b + m)};
}

inline BinaryMask ellipse_mask(int size, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double cx = size * (0.5 + rng.uniform(-0.04, 0.04));
    const double cy = size * (0.5 + rng.uniform(-0.04, 0.04));
    const double a = size * rng.uniform(0.44, 0.54);
    const double b = size * rng.uniform(0.44, 0.54);
    const double th = rng.uniform(0.0, 3.14159265358979323846);
    const double ct = std::cos(th), st = std::sin(th);
    BinaryMask m;
    m.width = m.height = size;
    m.values.assign(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
        if (u * u + v * v <= 1.0) m.set(x, y, true);
      }
    }
    const double cover = static_cast<double>(m.stone_count()) / static_cast<double>(m.values.size());
    if (cover >= 0.6 && cover <= 0.9) return m;
  }
  fail(errc::kDegenerate, "could not draw a stone mask covering 60-90% of the image");
}

}  // namespace detail

// Renders one image/mask pair. Section views use a finer texture scale and a
// darker value range than surface views of the same class.
inline ImagePair generate_image(const ClassRecipe& recipe, ViewKind view, int size, std::uint64_t seed,
                                bool instrument = false) {
  if (size < 16) fail(errc::kInvalidArgument, "synthetic images must be at least 16 pixels wide");
  Rng rng(seed);
  ImagePair out;
  out.mask = detail::ellipse_mask(size, rng);
  out.image = RgbImage(size, size);

  const bool section = view == ViewKind::Section;
  const double scale = recipe.texture_scale * (section ? 0.7 : 1.0) * rng.uniform(0.85, 1.15);
  const double hue = recipe.base_hue + rng.uniform(-recipe.hue_jitter, recipe.hue_jitter);
  const double vmul = section ? 0.85 : 1.0;
  const double angle = rng.uniform(0.0, 3.14159265358979323846);
  const double ca = std::cos(angle), sa = std::sin(angle);
  detail::ValueNoise tissue(size, size, 48.0, rng);
  detail::ValueNoise texture(size, size, scale, rng);
  detail::ValueNoise drift(size, size, 4.0 * scale, rng);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!out.mask.stone(x, y)) {
        // Pink tissue: red stays the dominant channel.
        const double t = tissue.at(x, y);
        const double n = rng.uniform(-4.0, 4.0);
        out.image.set(x, y, static_cast<std::uint8_t>(std::lround(185 + 40 * t + n)),
                      static_cast<std::uint8_t>(std::lround(90 + 30 * t + n)),
                      static_cast<std::uint8_t>(std::lround(100 + 30 * t + n)));
        continue;
      }
      double t = 0.0;
      switch (recipe.texture) {
        case TextureKind::Smooth: t = texture.at(x, y); break;
        case TextureKind::FineGrain: t = 0.35 * drift.at(x, y) + 0.65 * rng.uniform(); break;
        case TextureKind::Blotchy: t = std::clamp((texture.at(x, y) - 0.5) * 4.0 + 0.5, 0.0, 1.0); break;
        case TextureKind::Striped: {
          const double phase = (x * ca + y * sa) / scale;
          t = 0.5 + 0.4 * std::sin(2 * 3.14159265358979323846 * phase) + 0.1 * (drift.at(x, y) - 0.5);
          break;
        }
      }
      t = std::clamp(t, 0.0, 1.0);
      const double h = hue + recipe.hue_swing * (2 * t - 1);
      const double s = recipe.sat_lo + (recipe.sat_hi - recipe.sat_lo) * t;
      const double v = vmul * (recipe.val_lo + (recipe.val_hi - recipe.val_lo) * t) + recipe.value_noise * rng.normal();
      const auto rgb = detail::hsv_to_rgb(h, s, v);
      out.image.set(x, y, rgb[0], rgb[1], rgb[2]);
    }
  }

  if (instrument) {
    const int w = std::max(4, size / 8);
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - w)));
    for (int y = 0; y < size; ++y) {
      for (int x = x0; x < x0 + w; ++x) out.image.set(x, y, 40, 70, 210);
    }
  }
  return out;
}

// Writes images/<CLASS>_<VIEW>_<nn>.png, masks/<...>.png and manifest.tsv
// under out_dir. Stone ids are <CLASS>-<nn>, shared by both views.
inline CorpusManifest generate_corpus(const std::vector<ClassRecipe>& recipes, int image_size,
                                      int n_per_class_per_view, std::uint64_t seed, const fs::path& out_dir,
                                      const SynthOptions& options = {}) {
  validate_recipes(recipes, false);
  if (n_per_class_per_view < 0) fail(errc::kInvalidArgument, "image count must be >= 0");
  if (image_size < 16) fail(errc::kInvalidArgument, "synthetic images must be at least 16 pixels wide");

  struct Job {
    const ClassRecipe* recipe;
    ViewKind view;
    int index;
  };
  std::vector<Job> jobs;
  for (const auto& r : recipes) {
    for (ViewKind v : kAllViews) {
      const int own = v == ViewKind::Surface ? r.surface_count : r.section_count;
      const int n = own >= 0 ? own : n_per_class_per_view;
      for (int i = 0; i < n; ++i) jobs.push_back({&r, v, i});
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec || !fs::is_directory(out_dir / "images")) fail(errc::kIo, "cannot create corpus directory " + out_dir.string());

  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  manifest.entries.resize(jobs.size());
  parallel_for(jobs.size(), options.workers, [&](std::size_t j) {
    const auto& job = jobs[j];
    const std::string cls(to_string(job.recipe->cls));
    const std::string view(to_string(job.view));
    char num[16];
    std::snprintf(num, sizeof num, "%02d", job.index);
    const std::string stem = cls + "_" + view + "_" + num;
    const std::uint64_t s = derive_seed(seed, "image/" + stem);
    const bool instrument =
        options.instrument_probability > 0.0 &&
        Rng(derive_seed(s, "instrument")).uniform() < options.instrument_probability;
    const auto pair = generate_image(*job.recipe, job.view, image_size, s, instrument);
    write_png(out_dir / "images" / (stem + ".png"), pair.image);
    write_mask_png(out_dir / "masks" / (stem + ".png"), pair.mask);
    manifest.entries[j] = {"images/" + stem + ".png", "masks/" + stem + ".png", job.recipe->cls, job.view,
                           cls + "-" + num};
  });
  write_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

// ---------------------------------------------------------------------------
// Leave-one-out nearest-class-centroid classifier: a simple baseline on
// feature space. A held-out sample is compared with the centroid of its own
// class computed without it; classes left empty are skipped. Ties go to the
// lowest class index.
inline EvalReport nearest_centroid_oracle(const FeatureMatrix& x, std::span<const int> y,
                                          const std::vector<std::string>& classes) {
  if (x.rows != y.size()) fail(errc::kDimensionMismatch, "feature rows and labels differ in count");
  const std::size_t k = classes.size(), d = x.cols;
  std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k) fail(errc::kInvalidArgument, "label outside class list");
    const auto c = static_cast<std::size_t>(y[i]);
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) sums[c][j] += x(i, j);
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }) < 2) {
    fail(errc::kInvalidArgument, "nearest-centroid baseline needs at least two classes");
  }
  std::vector<int> pred(x.rows, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto own = static_cast<std::size_t>(y[i]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t n = counts[c] - (c == own ? 1 : 0);
      if (n == 0) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double s = sums[c][j] - (c == own ? x(i, j) : 0.0);
        const double diff = x(i, j) - s / static_cast<double>(n);
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        pred[i] = static_cast<int>(c);
      }
    }
  }
  auto report = compute_metrics(y, pred, classes);
  report.metadata["learner"] = "nearest_centroid_loo";
  return report;
}

inline EvalReport nearest_centroid_oracle(const std::vector<FeatureVector>& vectors) {
  const auto m = to_matrix(vectors);
  return nearest_centroid_oracle(m.x, m.y, class_names());
}

}  // namespace kstone
