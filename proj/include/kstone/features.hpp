#pragma once

// Handcrafted colour/texture descriptor: HSV conversion, per-channel
// central-difference energy histograms, rotation-invariant uniform LBP
// histograms, and the 40/80-component vectors built from them.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iterator>
#include <optional>
#include <map>
#include <string>
#include <vector>

#include "kstone/dataset.hpp"
#include "kstone/error.hpp"
#include "kstone/parallel.hpp"
#include "kstone/rng.hpp"

namespace kstone {

inline constexpr std::size_t kHistBins = 10;
inline constexpr std::size_t kBlocksPerView = 4;
inline constexpr std::size_t kViewDim = kHistBins * kBlocksPerView;  // 40
inline constexpr std::size_t kMixedDim = 2 * kViewDim;              // 80

using Histogram = std::array<double, kHistBins>;

struct HsvPixel {
  double h = 0.0;  // degrees, [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // input channel scale
};

// Achromatic pixels (R = G = B) get H = 0, S = 0. When V is reached by more
// than one channel the R branch wins over G, and G over B.
inline HsvPixel rgb_to_hsv(double r, double g, double b) {
  const double v = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  HsvPixel p;
  p.v = v;
  if (v == mn) return p;
  p.s = v != 0.0 ? 1.0 - mn / v : 0.0;
  const double span = v - mn;
  double h;
  if (v == r) {
    h = 60.0 * (g - b) / span;
  } else if (v == g) {
    h = 120.0 + 60.0 * (b - r) / span;
  } else {
    h = 240.0 + 60.0 * (r - g) / span;
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  p.h = h;
  return p;
}

// Single-channel real raster.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Raster() = default;
  Raster(int w, int h, double fill = 0.0)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

struct HsvPlanes {
  Raster h, s, v;
};

inline HsvPlanes to_hsv_planes(const RgbImage& img) {
  HsvPlanes planes{Raster(img.width, img.height), Raster(img.width, img.height),
                   Raster(img.width, img.height)};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto p = rgb_to_hsv(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      planes.h.at(x, y) = p.h;
      planes.s.at(x, y) = p.s;
      planes.v.at(x, y) = p.v;
    }
  }
  return planes;
}

// Gradient magnitude from central differences, interior pixels only: the
// result is (width-2) x (height-2). Hue is differenced as a plain number.
using EnergyMap = Raster;

inline EnergyMap channel_energy(const Raster& channel) {
  if (channel.width < 3 || channel.height < 3) {
    fail(errc::kInvalidArgument, "energy needs a raster of at least 3x3");
  }
  EnergyMap e(channel.width - 2, channel.height - 2);
  for (int y = 1; y + 1 < channel.height; ++y) {
    for (int x = 1; x + 1 < channel.width; ++x) {
      const double gx = channel.at(x + 1, y) - channel.at(x - 1, y);
      const double gy = channel.at(x, y + 1) - channel.at(x, y - 1);
      e.at(x - 1, y - 1) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return e;
}

enum class ChannelKind { Hue, Saturation, Value };

// Largest central-difference magnitude the channel's scale allows.
inline double energy_range(ChannelKind kind) {
  const double root8 = 2.0 * std::sqrt(2.0);
  switch (kind) {
    case ChannelKind::Hue: return root8 * 360.0;
    case ChannelKind::Saturation: return root8 * 1.0;
    case ChannelKind::Value: return root8 * 255.0;
  }
  return 0.0;
}

inline std::size_t energy_bin(double e, ChannelKind kind) {
  const double width = energy_range(kind) / static_cast<double>(kHistBins);
  const double b = std::floor(e / width);
  if (b <= 0.0) return 0;
  return std::min(kHistBins - 1, static_cast<std::size_t>(b));
}

inline Histogram energy_histogram(const EnergyMap& map, ChannelKind kind) {
  if (map.values.empty()) fail(errc::kInvalidArgument, "energy histogram of an empty map");
  Histogram h{};
  for (double e : map.values) h[energy_bin(e, kind)] += 1.0;
  const double n = static_cast<double>(map.values.size());
  for (auto& v : h) v /= n;
  return h;
}

// ---------------------------------------------------------------------------
// Local binary patterns, P = 8 neighbours on a circle, riu2 mapping.

struct LbpParams {
  int window_side = 5;

  int radius() const { return (window_side - 1) / 2; }

  void validate() const {
    if (window_side != 5 && window_side != 7 && window_side != 9) {
      fail(errc::kInvalidArgument,
           "LBP window side must be 5, 7 or 9, got " + std::to_string(window_side));
    }
  }
};

inline constexpr int kLbpPoints = 8;
inline constexpr std::size_t kRiu2NonUniform = kLbpPoints + 1;  // bin 9

// A neighbour counts as set when (neighbour - centre) >= -kLbpTieTolerance.
// Pixel values are integers and the bilinear weights are fixed, so any
// difference that is not exactly zero in exact arithmetic is far larger than
// this; the tolerance only absorbs rounding on exact ties.
inline constexpr double kLbpTieTolerance = 1e-9;

// riu2 label of an 8-bit circular code: number of set bits for codes with at
// most two 0/1 transitions, kRiu2NonUniform otherwise.
constexpr std::size_t riu2_label(unsigned code) {
  const unsigned rotated = ((code >> 1) | (code << 7)) & 0xffu;
  const int transitions = std::popcount((code ^ rotated) & 0xffu);
  if (transitions <= 2) return static_cast<std::size_t>(std::popcount(code & 0xffu));
  return kRiu2NonUniform;
}

namespace detail {

// Neighbour p sits at angle 2*pi*p/8, counter-clockwise with y pointing down.
// Axial neighbours land on pixel centres; diagonal ones use one shared offset
// magnitude so the sampling pattern maps onto itself under quarter turns.
struct LbpSampler {
  int r;
  int near;      // floor of the diagonal offset
  double w_near, w_mid, w_far;

  explicit LbpSampler(int radius) : r(radius) {
    const double a = radius * 0.70710678118654752440;
    near = static_cast<int>(std::floor(a));
    const double f = a - near;
    w_near = (1.0 - f) * (1.0 - f);
    w_mid = f * (1.0 - f);
    w_far = f * f;
  }

  unsigned code(const Raster& g, int x, int y) const {
    const double c = g.at(x, y);
    static constexpr int kAxial[4][3] = {{0, 1, 0}, {2, 0, -1}, {4, -1, 0}, {6, 0, 1}};
    static constexpr int kDiag[4][3] = {{1, 1, -1}, {3, -1, -1}, {5, -1, 1}, {7, 1, 1}};
    unsigned bits = 0;
    for (const auto& a : kAxial) {
      const double d = g.at(x + a[1] * r, y + a[2] * r) - c;
      if (d >= -kLbpTieTolerance) bits |= 1u << a[0];
    }
    for (const auto& a : kDiag) {
      const int sx = a[1], sy = a[2];
      const int x0 = x + sx * near, x1 = x + sx * (near + 1);
      const int y0 = y + sy * near, y1 = y + sy * (near + 1);
      const double d = w_near * (g.at(x0, y0) - c) +
                       (w_mid * (g.at(x1, y0) - c) + w_mid * (g.at(x0, y1) - c)) +
                       w_far * (g.at(x1, y1) - c);
      if (d >= -kLbpTieTolerance) bits |= 1u << a[0];
    }
    return bits;
  }
};

}  // namespace detail

inline Histogram lbp_histogram(const Raster& grey, const LbpParams& params) {
  params.validate();
  if (grey.width < params.window_side || grey.height < params.window_side) {
    fail(errc::kInvalidArgument, "raster smaller than the LBP window");
  }
  const detail::LbpSampler sampler(params.radius());
  const int r = params.radius();
  Histogram h{};
  std::size_t n = 0;
  for (int y = r; y + r < grey.height; ++y) {
    for (int x = r; x + r < grey.width; ++x) {
      h[riu2_label(sampler.code(grey, x, y))] += 1.0;
      ++n;
    }
  }
  for (auto& v : h) v /= static_cast<double>(n);
  return h;
}

// ---------------------------------------------------------------------------
// Feature vectors

enum class FeatureView { Surface, Section, Mixed };

inline std::string_view to_string(FeatureView v) {
  switch (v) {
    case FeatureView::Surface: return "SURFACE";
    case FeatureView::Section: return "SECTION";
    case FeatureView::Mixed: return "MIXED";
  }
  return "?";
}

inline std::optional<FeatureView> parse_feature_view(std::string_view token) {
  const std::string t = to_upper(token);
  for (auto v : {FeatureView::Surface, FeatureView::Section, FeatureView::Mixed}) {
    if (t == to_string(v)) return v;
  }
  return std::nullopt;
}

inline FeatureView feature_view(ViewKind v) {
  return v == ViewKind::Surface ? FeatureView::Surface : FeatureView::Section;
}

struct FeatureVector {
  std::vector<double> components;
  FeatureView view = FeatureView::Surface;
  ClassLabel cls = ClassLabel::WW;
  std::string stone_id;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Descriptor blocks in assembly order.
enum class Block : unsigned { eH = 0, eS = 1, eV = 2, LBP = 3 };

// Subset of the four blocks; bit i set means Block(i) is selected.
struct FeatureCombo {
  unsigned mask = 0b1111;

  static FeatureCombo all() { return {0b1111}; }
  bool has(Block b) const { return (mask >> static_cast<unsigned>(b)) & 1u; }
  std::size_t block_count() const { return static_cast<std::size_t>(std::popcount(mask)); }
  bool empty() const { return mask == 0; }

  friend bool operator==(const FeatureCombo&, const FeatureCombo&) = default;
};

// Canonical name, e.g. "LBP+eHSV", "LBP+eH", "eS".
inline std::string to_string(FeatureCombo c) {
  std::vector<std::string> parts;
  if (c.has(Block::LBP)) parts.emplace_back("LBP");
  if (c.has(Block::eH) && c.has(Block::eS) && c.has(Block::eV)) {
    parts.emplace_back("eHSV");
  } else {
    if (c.has(Block::eH)) parts.emplace_back("eH");
    if (c.has(Block::eS)) parts.emplace_back("eS");
    if (c.has(Block::eV)) parts.emplace_back("eV");
  }
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
  return out.empty() ? "none" : out;
}

// Accepts '+' or ',' separated block names (eH, eS, eV, eHSV, LBP), any case.
inline FeatureCombo parse_combo(std::string_view text) {
  FeatureCombo c{0};
  std::string token;
  auto flush = [&] {
    const std::string t = to_upper(token);
    token.clear();
    if (t.empty()) return;
    if (t == "EH") c.mask |= 1u << 0;
    else if (t == "ES") c.mask |= 1u << 1;
    else if (t == "EV") c.mask |= 1u << 2;
    else if (t == "LBP") c.mask |= 1u << 3;
    else if (t == "EHSV") c.mask |= 0b0111;
    else if (t == "ALL") c.mask |= 0b1111;
    else fail(errc::kUnknownToken, "unknown feature block '" + t + "'");
  };
  for (char ch : text) {
    if (ch == '+' || ch == ',') flush();
    else if (!std::isspace(static_cast<unsigned char>(ch))) token += ch;
  }
  flush();
  if (c.empty()) fail(errc::kInvalidArgument, "feature combo is empty");
  return c;
}

// [eH | eS | eV | LBP], ten bins each.
inline FeatureVector feature_vector(const PatchRecord& record, const LbpParams& lbp) {
  lbp.validate();
  const int min_side = std::max(3, lbp.window_side);
  if (record.patch.width < min_side || record.patch.height < min_side) {
    fail(errc::kInvalidArgument, "patch side " + std::to_string(record.patch.width) +
                                     " below feature minimum " + std::to_string(min_side));
  }
  const HsvPlanes planes = to_hsv_planes(record.patch);
  FeatureVector fv;
  fv.components.reserve(kViewDim);
  const std::pair<const Raster*, ChannelKind> channels[3] = {
      {&planes.h, ChannelKind::Hue}, {&planes.s, ChannelKind::Saturation},
      {&planes.v, ChannelKind::Value}};
  for (const auto& [plane, kind] : channels) {
    const Histogram h = energy_histogram(channel_energy(*plane), kind);
    fv.components.insert(fv.components.end(), h.begin(), h.end());
  }
  const Histogram t = lbp_histogram(planes.v, lbp);
  fv.components.insert(fv.components.end(), t.begin(), t.end());
  fv.view = feature_view(record.view);
  fv.cls = record.cls;
  fv.stone_id = record.stone_id;
  return fv;
}

inline std::vector<FeatureVector> featurize_all(const std::vector<PatchRecord>& records,
                                                const LbpParams& lbp, std::size_t workers = 1) {
  std::vector<FeatureVector> out(records.size());
  parallel_for(records.size(), workers,
               [&](std::size_t i) { out[i] = feature_vector(records[i], lbp); });
  return out;
}

inline FeatureVector mixed_vector(const FeatureVector& surface, const FeatureVector& section) {
  if (surface.components.size() != kViewDim || section.components.size() != kViewDim) {
    fail(errc::kInvalidArgument, "mixed vectors need two 40-component inputs");
  }
  if (surface.view != FeatureView::Surface || section.view != FeatureView::Section) {
    fail(errc::kInvalidArgument, "mixed vectors need a surface and a section vector");
  }
  if (surface.cls != section.cls) {
    fail(errc::kInvalidArgument, "cannot mix class " + std::string(to_string(surface.cls)) +
                                     " with class " + std::string(to_string(section.cls)));
  }
  FeatureVector out;
  out.components = surface.components;
  out.components.insert(out.components.end(), section.components.begin(),
                        section.components.end());
  out.view = FeatureView::Mixed;
  out.cls = surface.cls;
  out.stone_id = surface.stone_id == section.stone_id
                     ? surface.stone_id
                     : surface.stone_id + "+" + section.stone_id;
  return out;
}

namespace detail {
// Shuffles both lists and pairs position i with (i mod size) on each side, so
// the shorter list is cycled through in a fresh random order.
inline void pair_lists(std::vector<const FeatureVector*> a, std::vector<const FeatureVector*> b,
                       Rng& rng, std::vector<FeatureVector>& out) {
  if (a.empty() || b.empty()) return;
  rng.shuffle(a);
  rng.shuffle(b);
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) out.push_back(mixed_vector(*a[i % a.size()], *b[i % b.size()]));
}
}  // namespace detail

// Builds 80-component vectors per class. Patches of one stone seen in both
// views are paired with each other (max(m, n) vectors per stone); patches of
// stones seen in one view only are paired within the class. A class present
// in only one view is an error.
inline std::vector<FeatureVector> pair_mixed(const std::vector<FeatureVector>& surface,
                                             const std::vector<FeatureVector>& section,
                                             std::uint64_t seed) {
  std::vector<FeatureVector> out;
  for (ClassLabel cls : kAllClasses) {
    std::map<std::string, std::pair<std::vector<const FeatureVector*>, std::vector<const FeatureVector*>>>
        by_stone;
    std::vector<const FeatureVector*> all_surface, all_section;
    for (const auto& v : surface) {
      if (v.cls != cls) continue;
      by_stone[v.stone_id].first.push_back(&v);
      all_surface.push_back(&v);
    }
    for (const auto& v : section) {
      if (v.cls != cls) continue;
      by_stone[v.stone_id].second.push_back(&v);
      all_section.push_back(&v);
    }
    if (all_surface.empty() && all_section.empty()) continue;
    if (all_surface.empty() || all_section.empty()) {
      fail(errc::kDegenerate, "class " + std::string(to_string(cls)) +
                                  " lacks one of the two views; cannot build mixed vectors");
    }
    std::vector<const FeatureVector*> lone_surface, lone_section;
    for (const auto& [stone, lists] : by_stone) {
      if (!lists.first.empty() && !lists.second.empty()) {
        Rng rng(derive_seed(seed, "pair/" + std::string(to_string(cls)) + "/" + stone));
        detail::pair_lists(lists.first, lists.second, rng, out);
      } else {
        lone_surface.insert(lone_surface.end(), lists.first.begin(), lists.first.end());
        lone_section.insert(lone_section.end(), lists.second.begin(), lists.second.end());
      }
    }
    Rng rng(derive_seed(seed, "pair/" + std::string(to_string(cls))));
    if (!lone_surface.empty() && !lone_section.empty()) {
      detail::pair_lists(lone_surface, lone_section, rng, out);
    } else if (!lone_surface.empty() || !lone_section.empty()) {
      // Leftovers of one view borrow partners from the whole class. The first
      // |leftover| pairs use every leftover exactly once.
      std::vector<FeatureVector> tmp;
      if (!lone_surface.empty()) {
        detail::pair_lists(lone_surface, all_section, rng, tmp);
        tmp.resize(lone_surface.size());
      } else {
        detail::pair_lists(all_surface, lone_section, rng, tmp);
        tmp.resize(lone_section.size());
      }
      out.insert(out.end(), std::make_move_iterator(tmp.begin()), std::make_move_iterator(tmp.end()));
    }
  }
  return out;
}

// Keeps only the requested blocks, in eH, eS, eV, LBP order, per view half.
inline FeatureVector select_features(const FeatureVector& v, FeatureCombo combo) {
  if (combo.empty()) fail(errc::kInvalidArgument, "feature combo is empty");
  const std::size_t n = v.components.size();
  if (n != kViewDim && n != kMixedDim) {
    fail(errc::kInvalidArgument, "select_features expects a 40- or 80-component vector, got " +
                                     std::to_string(n));
  }
  FeatureVector out;
  out.view = v.view;
  out.cls = v.cls;
  out.stone_id = v.stone_id;
  for (std::size_t half = 0; half < n / kViewDim; ++half) {
    for (unsigned b = 0; b < kBlocksPerView; ++b) {
      if (!combo.has(static_cast<Block>(b))) continue;
      const auto first = v.components.begin() +
                         static_cast<std::ptrdiff_t>(half * kViewDim + b * kHistBins);
      out.components.insert(out.components.end(), first,
                            first + static_cast<std::ptrdiff_t>(kHistBins));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature file: one header line, then CLASS<TAB>VIEW<TAB>stone_id<TAB>c0,c1,...
// with every component printed to nine significant digits.

inline constexpr std::string_view kFeatureFileMagic = "# kstone-features v1";

struct FeatureSet {
  FeatureCombo combo;
  LbpParams lbp;
  std::vector<FeatureVector> vectors;

  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().components.size(); }
};

inline std::string format_component(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string format_features(const FeatureSet& set) {
  std::string out(kFeatureFileMagic);
  out += " combo=" + to_string(set.combo) + " dim=" + std::to_string(set.dim()) +
         " lbp_window=" + std::to_string(set.lbp.window_side) +
         " lbp_points=" + std::to_string(kLbpPoints) + " lbp_mapping=riu2\n";
  for (const auto& v : set.vectors) {
    if (v.components.size() != set.dim()) {
      fail(errc::kInvalidArgument, "feature vectors of mixed dimensionality");
    }
    out += std::string(to_string(v.cls)) + '\t' + std::string(to_string(v.view)) + '\t' +
           v.stone_id + '\t';
    for (std::size_t i = 0; i < v.components.size(); ++i) {
      if (i) out += ',';
      out += format_component(v.components[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_features(const FeatureSet& set, const fs::path& path) {
  detail::write_text(path, format_features(set));
}

inline FeatureSet parse_features(std::string_view text, const std::string& origin = "<features>") {
  FeatureSet set;
  std::size_t line_no = 0;
  std::size_t start = 0;
  std::size_t declared_dim = 0;
  bool header = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = detail::trim_cr(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line_no == 1) {
      if (line.substr(0, kFeatureFileMagic.size()) != kFeatureFileMagic) {
        fail(errc::kCorrupt, where + ": not a feature file");
      }
      for (const auto& kv : detail::split(line.substr(kFeatureFileMagic.size()), ' ')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "combo") set.combo = parse_combo(value == "none" ? "" : value);
        else if (key == "dim") declared_dim = static_cast<std::size_t>(detail::parse_int(value, errc::kCorrupt, where));
        else if (key == "lbp_window") set.lbp.window_side = detail::parse_int(value, errc::kCorrupt, where);
      }
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 4) fail(errc::kCorrupt, where + ": expected 4 tab-separated fields");
    FeatureVector v;
    auto cls = parse_class(f[0]);
    auto view = parse_feature_view(f[1]);
    if (!cls || !view) fail(errc::kCorrupt, where + ": bad class/view token");
    v.cls = *cls;
    v.view = *view;
    v.stone_id = f[2];
    for (const auto& c : detail::split(f[3], ',')) {
      char* endp = nullptr;
      const double d = std::strtod(c.c_str(), &endp);
      if (c.empty() || endp != c.c_str() + c.size() || !std::isfinite(d)) {
        fail(errc::kCorrupt, where + ": bad component '" + c + "'");
      }
      v.components.push_back(d);
    }
    if (v.components.size() != declared_dim) {
      fail(errc::kCorrupt, where + ": expected " + std::to_string(declared_dim) + " components");
    }
    set.vectors.push_back(std::move(v));
  }
  if (!header) fail(errc::kCorrupt, origin + ": empty feature file");
  return set;
}

inline FeatureSet read_features(const fs::path& path) {
  if (!fs::exists(path)) fail(errc::kIo, "feature file not found: " + path.string());
  return parse_features(detail::read_text(path), path.string());
}

}  // namespace kstone
