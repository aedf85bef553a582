#pragma once

// Corpus data model: class/view tokens, raster types, the tab-separated
// manifest, image/mask loading and the on-disk patch directory.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "kstone/error.hpp"

namespace kstone {

namespace fs = std::filesystem;

enum class ClassLabel : int { WW = 0, WD = 1, UA = 2, BRU = 3 };
inline constexpr std::array<ClassLabel, 4> kAllClasses{ClassLabel::WW, ClassLabel::WD,
                                                       ClassLabel::UA, ClassLabel::BRU};
inline constexpr std::size_t kNumClasses = kAllClasses.size();

enum class ViewKind : int { Surface = 0, Section = 1 };
inline constexpr std::array<ViewKind, 2> kAllViews{ViewKind::Surface, ViewKind::Section};

inline std::string_view to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::WW: return "WW";
    case ClassLabel::WD: return "WD";
    case ClassLabel::UA: return "UA";
    case ClassLabel::BRU: return "BRU";
  }
  return "?";
}

// Morpho-constitutional type code.
inline std::string_view morpho_code(ClassLabel c) {
  switch (c) {
    case ClassLabel::WW: return "Ia";
    case ClassLabel::WD: return "IIb";
    case ClassLabel::UA: return "IIIb";
    case ClassLabel::BRU: return "IVd";
  }
  return "?";
}

inline std::string_view to_string(ViewKind v) {
  return v == ViewKind::Surface ? "SURFACE" : "SECTION";
}

inline std::string to_upper(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

// Accepts the class name or its morphological code, any case.
inline std::optional<ClassLabel> parse_class(std::string_view token) {
  const std::string t = to_upper(token);
  for (ClassLabel c : kAllClasses) {
    if (t == to_string(c) || t == to_upper(morpho_code(c))) return c;
  }
  return std::nullopt;
}

inline std::optional<ViewKind> parse_view(std::string_view token) {
  const std::string t = to_upper(token);
  for (ViewKind v : kAllViews) {
    if (t == to_string(v)) return v;
  }
  return std::nullopt;
}

inline ClassLabel class_from_index(int i) {
  if (i < 0 || i >= static_cast<int>(kNumClasses)) {
    fail(errc::kInvalidArgument, "class index out of range: " + std::to_string(i));
  }
  return kAllClasses[static_cast<std::size_t>(i)];
}

inline int class_index(ClassLabel c) { return static_cast<int>(c); }

// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
    if (w < 1 || h < 1) {
      fail(errc::kInvalidArgument,
           "image dimensions must be >= 1, got " + std::to_string(w) + "x" + std::to_string(h));
    }
    pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill);
  }

  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) * 3;
  }
  std::uint8_t& at(int x, int y, int c) { return pixels[offset(x, y) + static_cast<std::size_t>(c)]; }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[offset(x, y) + static_cast<std::size_t>(c)];
  }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const auto o = offset(x, y);
    pixels[o] = r;
    pixels[o + 1] = g;
    pixels[o + 2] = b;
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Per-pixel stone (1) / non-stone (0).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool stone = false) : width(w), height(h) {
    if (w < 1 || h < 1) fail(errc::kInvalidArgument, "mask dimensions must be >= 1");
    values.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), stone ? 1 : 0);
  }

  bool stone(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)] != 0;
  }
  void set(int x, int y, bool s) {
    values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x)] = s ? 1 : 0;
  }
  std::size_t stone_count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct ManifestEntry {
  std::string image_path;
  std::string mask_path;
  ClassLabel cls = ClassLabel::WW;
  ViewKind view = ViewKind::Surface;
  std::string stone_id;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  // Relative entry paths resolve against this directory.
  fs::path base_dir;
};

struct PatchRecord {
  RgbImage patch;
  int origin_x = 0;
  int origin_y = 0;
  ClassLabel cls = ClassLabel::WW;
  ViewKind view = ViewKind::Surface;
  std::string stone_id;
  bool synthetic = false;
  // Grid cell of a regular-grid patch; -1 for off-grid (over-sampled) patches.
  int grid_col = -1;
  int grid_row = -1;

  int side() const { return patch.width; }

  friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

namespace detail {

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(errc::kIo, "write failed: " + path.string());
}

inline bool valid_field(std::string_view s) {
  return s.find_first_of("\t\n\r") == std::string_view::npos;
}

inline int parse_int(const std::string& s, const char* code, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(code, what + ": not an integer: '" + s + "'");
  }
}

}  // namespace detail

// Parses manifest text. `origin` names the source in error messages.
inline CorpusManifest parse_manifest(std::string_view text, const std::string& origin = "<manifest>",
                                     std::ostream* log = &std::clog) {
  CorpusManifest m;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = detail::trim_cr(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty() || line.front() == '#' || detail::is_blank(line)) {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = detail::split(line, '\t');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() != 5) {
      fail(errc::kParse, where + ": expected 5 tab-separated fields, got " +
                             std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.image_path = fields[0];
    e.mask_path = fields[1];
    auto cls = parse_class(fields[2]);
    if (!cls) fail(errc::kUnknownToken, where + ": unknown class token '" + fields[2] + "'");
    auto view = parse_view(fields[3]);
    if (!view) fail(errc::kUnknownToken, where + ": unknown view token '" + fields[3] + "'");
    e.cls = *cls;
    e.view = *view;
    e.stone_id = fields[4];
    if (e.image_path.empty() || e.mask_path.empty()) {
      fail(errc::kParse, where + ": empty image or mask path");
    }
    if (e.stone_id.empty()) fail(errc::kParse, where + ": empty stone_id");
    m.entries.push_back(std::move(e));
    if (end == text.size()) break;
  }
  if (m.entries.empty() && log) *log << "warning: manifest " << origin << " has no entries\n";
  return m;
}

inline CorpusManifest load_manifest(const fs::path& path, std::ostream* log = &std::clog) {
  if (!fs::exists(path)) fail(errc::kIo, "manifest not found: " + path.string());
  CorpusManifest m = parse_manifest(detail::read_text(path), path.string(), log);
  m.base_dir = path.parent_path();
  return m;
}

inline std::string format_manifest(const CorpusManifest& m) {
  std::string out = "# image\tmask\tclass\tview\tstone_id\n";
  for (const auto& e : m.entries) {
    for (const auto* f : {&e.image_path, &e.mask_path, &e.stone_id}) {
      if (!detail::valid_field(*f)) {
        fail(errc::kInvalidArgument, "manifest field contains tab or newline: " + *f);
      }
    }
    out += e.image_path;
    out += '\t';
    out += e.mask_path;
    out += '\t';
    out += to_string(e.cls);
    out += '\t';
    out += to_string(e.view);
    out += '\t';
    out += e.stone_id;
    out += '\n';
  }
  return out;
}

inline void write_manifest(const CorpusManifest& m, const fs::path& path) {
  detail::write_text(path, format_manifest(m));
}

// ---------------------------------------------------------------------------
// Raster I/O (any format OpenCV decodes; written as PNG).

inline RgbImage from_bgr_mat(const cv::Mat& mat) {
  RgbImage img(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) img.set(x, y, row[x][2], row[x][1], row[x][0]);
  }
  return img;
}

inline cv::Mat to_bgr_mat(const RgbImage& img) {
  cv::Mat mat(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x] = cv::Vec3b(img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0));
    }
  }
  return mat;
}

inline RgbImage read_rgb(const fs::path& path) {
  if (!fs::exists(path)) fail(errc::kIo, "image not found: " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) fail(errc::kIo, "unreadable image: " + path.string());
  return from_bgr_mat(mat);
}

// Any non-zero grey value counts as stone.
inline BinaryMask read_mask(const fs::path& path) {
  if (!fs::exists(path)) fail(errc::kIo, "mask not found: " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (mat.empty()) fail(errc::kIo, "unreadable mask: " + path.string());
  BinaryMask mask(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) mask.set(x, y, row[x] != 0);
  }
  return mask;
}

inline void write_png(const fs::path& path, const RgbImage& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_bgr_mat(img))) fail(errc::kIo, "cannot write " + path.string());
}

inline void write_mask_png(const fs::path& path, const BinaryMask& mask) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  cv::Mat mat(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) row[x] = mask.stone(x, y) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), mat)) fail(errc::kIo, "cannot write " + path.string());
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

struct ImagePair {
  RgbImage image;
  BinaryMask mask;
};

inline ImagePair load_image_pair(const ManifestEntry& entry, const fs::path& base_dir = {}) {
  ImagePair pair{read_rgb(resolve(base_dir, entry.image_path)),
                 read_mask(resolve(base_dir, entry.mask_path))};
  if (pair.image.width != pair.mask.width || pair.image.height != pair.mask.height) {
    fail(errc::kDimensionMismatch,
         "image " + entry.image_path + " is " + std::to_string(pair.image.width) + "x" +
             std::to_string(pair.image.height) + " but mask " + entry.mask_path + " is " +
             std::to_string(pair.mask.width) + "x" + std::to_string(pair.mask.height));
  }
  return pair;
}

// ---------------------------------------------------------------------------
// Patch directory: <dir>/<CLASS>/<VIEW>/<stone_id>_<n>.png plus <dir>/index.tsv.

inline constexpr std::string_view kPatchIndexHeader = "# kstone-patches v1";
inline constexpr std::string_view kPatchIndexName = "index.tsv";

namespace detail {
inline std::string file_safe(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    out += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
  }
  return out;
}
}  // namespace detail

inline std::size_t save_patches(const std::vector<PatchRecord>& records, const fs::path& dir) {
  fs::create_directories(dir);
  std::map<std::tuple<int, int, std::string>, int> counters;
  std::string index(kPatchIndexHeader);
  index += "\n# path\tclass\tview\tstone_id\tx\ty\tside\tcol\trow\tsynthetic\n";
  for (const auto& r : records) {
    if (!detail::valid_field(r.stone_id) || r.stone_id.empty()) {
      fail(errc::kInvalidArgument, "invalid stone_id for patch: '" + r.stone_id + "'");
    }
    if (r.patch.width != r.patch.height) fail(errc::kInvalidArgument, "patch is not square");
    const int n = counters[{class_index(r.cls), static_cast<int>(r.view), r.stone_id}]++;
    const fs::path rel = fs::path(std::string(to_string(r.cls))) /
                         std::string(to_string(r.view)) /
                         (detail::file_safe(r.stone_id) + "_" + std::to_string(n) + ".png");
    write_png(dir / rel, r.patch);
    std::ostringstream line;
    line << rel.generic_string() << '\t' << to_string(r.cls) << '\t' << to_string(r.view) << '\t'
         << r.stone_id << '\t' << r.origin_x << '\t' << r.origin_y << '\t' << r.side() << '\t'
         << r.grid_col << '\t' << r.grid_row << '\t' << (r.synthetic ? 1 : 0) << '\n';
    index += line.str();
  }
  detail::write_text(dir / kPatchIndexName, index);
  return records.size();
}

inline std::vector<PatchRecord> load_patches(const fs::path& dir) {
  const fs::path index_path = dir / kPatchIndexName;
  if (!fs::exists(index_path)) fail(errc::kIo, "patch index not found: " + index_path.string());
  const std::string text = detail::read_text(index_path);
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::vector<PatchRecord> out;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim_cr(raw);
    if (line_no == 1) {
      if (line != kPatchIndexHeader) {
        fail(errc::kCorrupt, index_path.string() + ": missing header '" +
                                 std::string(kPatchIndexHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const std::string where = index_path.string() + ":" + std::to_string(line_no);
    const auto f = detail::split(line, '\t');
    if (f.size() != 10) fail(errc::kCorrupt, where + ": expected 10 fields");
    PatchRecord r;
    auto cls = parse_class(f[1]);
    auto view = parse_view(f[2]);
    if (!cls || !view) fail(errc::kCorrupt, where + ": bad class/view token");
    r.cls = *cls;
    r.view = *view;
    r.stone_id = f[3];
    r.origin_x = detail::parse_int(f[4], errc::kCorrupt, where);
    r.origin_y = detail::parse_int(f[5], errc::kCorrupt, where);
    const int side = detail::parse_int(f[6], errc::kCorrupt, where);
    r.grid_col = detail::parse_int(f[7], errc::kCorrupt, where);
    r.grid_row = detail::parse_int(f[8], errc::kCorrupt, where);
    if (f[9] != "0" && f[9] != "1") fail(errc::kCorrupt, where + ": synthetic flag must be 0/1");
    r.synthetic = f[9] == "1";
    const fs::path file = dir / f[0];
    if (!fs::exists(file)) fail(errc::kIo, where + ": patch file missing: " + file.string());
    r.patch = read_rgb(file);
    if (r.patch.width != side || r.patch.height != side) {
      fail(errc::kCorrupt, where + ": patch " + file.string() + " is not " + std::to_string(side) +
                               "x" + std::to_string(side));
    }
    out.push_back(std::move(r));
  }
  if (!header_seen) fail(errc::kCorrupt, index_path.string() + ": empty index");
  return out;
}

}  // namespace kstone
