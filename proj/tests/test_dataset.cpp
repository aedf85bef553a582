#include <sstream>

#include <gtest/gtest.h>

#include "kstone/dataset.hpp"
#include "test_support.hpp"

using namespace kstone;
using kstone::testing::TempDir;

namespace {

std::string error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(ClassLabel, FourValuesWithFixedCodes) {
  ASSERT_EQ(kNumClasses, 4u);
  EXPECT_EQ(morpho_code(ClassLabel::WW), "Ia");
  EXPECT_EQ(morpho_code(ClassLabel::WD), "IIb");
  EXPECT_EQ(morpho_code(ClassLabel::UA), "IIIb");
  EXPECT_EQ(morpho_code(ClassLabel::BRU), "IVd");
  for (ClassLabel c : kAllClasses) {
    EXPECT_EQ(parse_class(to_string(c)), c);
    EXPECT_EQ(parse_class(morpho_code(c)), c);
    EXPECT_EQ(class_from_index(class_index(c)), c);
  }
  EXPECT_EQ(parse_class("ww"), ClassLabel::WW);
  EXPECT_EQ(parse_class("Bru"), ClassLabel::BRU);
  EXPECT_FALSE(parse_class("XYZ"));
}

TEST(ViewKind, TwoValuesCaseInsensitive) {
  ASSERT_EQ(kAllViews.size(), 2u);
  EXPECT_EQ(parse_view("surface"), ViewKind::Surface);
  EXPECT_EQ(parse_view("SECTION"), ViewKind::Section);
  EXPECT_FALSE(parse_view("side"));
}

TEST(Manifest, TwoValidRows) {
  std::ostringstream log;
  const auto m = parse_manifest("# comment\na.png\ta_mask.png\tWW\tsurface\ts1\n\nb.png\tb_mask.png\tiib\tSection\ts2\n",
                                "m.tsv", &log);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].image_path, "a.png");
  EXPECT_EQ(m.entries[0].cls, ClassLabel::WW);
  EXPECT_EQ(m.entries[1].cls, ClassLabel::WD);
  EXPECT_EQ(m.entries[1].view, ViewKind::Section);
  EXPECT_EQ(m.entries[1].stone_id, "s2");
  EXPECT_TRUE(log.str().empty());
}

TEST(Manifest, UnknownClassNamesTheRow) {
  try {
    parse_manifest("a.png\tm.png\tWW\tSURFACE\ts1\nb.png\tm.png\tXYZ\tSURFACE\ts2\n", "m.tsv", nullptr);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kUnknownToken);
    EXPECT_NE(std::string(e.what()).find("m.tsv:2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("XYZ"), std::string::npos);
  }
}

TEST(Manifest, MalformedRowReportsLine) {
  try {
    parse_manifest("\n\na.png\tm.png\tWW\n", "bad.tsv", nullptr);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kParse);
    EXPECT_NE(std::string(e.what()).find("bad.tsv:3"), std::string::npos);
  }
}

TEST(Manifest, EmptyFileWarns) {
  std::ostringstream log;
  const auto m = parse_manifest("", "empty.tsv", &log);
  EXPECT_TRUE(m.entries.empty());
  EXPECT_NE(log.str().find("warning"), std::string::npos);
}

TEST(Manifest, MissingFileIsIoError) {
  EXPECT_EQ(error_code_of([] { load_manifest("/nonexistent/manifest.tsv", nullptr); }), errc::kIo);
}

TEST(Manifest, CanonicalRoundTripIsByteIdentical) {
  TempDir dir("manifest");
  const auto m = parse_manifest("x/a.png\tx/a_m.png\tua\tsurface\tstone 7\nb.png\tb_m.png\tIVd\tsection\tk2\n", "in",
                                nullptr);
  const std::string canonical = format_manifest(m);
  write_manifest(m, dir / "m.tsv");
  const auto reread = load_manifest(dir / "m.tsv", nullptr);
  EXPECT_EQ(format_manifest(reread), canonical);
  EXPECT_EQ(detail::read_text(dir / "m.tsv"), canonical);
  EXPECT_NE(canonical.find("\tUA\tSURFACE\t"), std::string::npos);
  EXPECT_NE(canonical.find("\tBRU\tSECTION\t"), std::string::npos);
}

TEST(ImagePair, MatchingDimensions) {
  TempDir dir("pair");
  Rng rng(1);
  const auto img = kstone::testing::random_image(512, 512, rng);
  BinaryMask mask(512, 512, true);
  write_png(dir / "i.png", img);
  write_mask_png(dir / "m.png", mask);
  const auto pair = load_image_pair({"i.png", "m.png", ClassLabel::WW, ViewKind::Surface, "s"}, dir.path());
  EXPECT_EQ(pair.image, img);
  EXPECT_EQ(pair.mask, mask);
}

TEST(ImagePair, DimensionMismatch) {
  TempDir dir("pair");
  write_png(dir / "i.png", RgbImage(512, 512));
  write_mask_png(dir / "m.png", BinaryMask(256, 256, true));
  EXPECT_EQ(error_code_of([&] {
              load_image_pair({"i.png", "m.png", ClassLabel::WW, ViewKind::Surface, "s"}, dir.path());
            }),
            errc::kDimensionMismatch);
}

TEST(ImagePair, EmptyMaskLoads) {
  TempDir dir("pair");
  write_png(dir / "i.png", RgbImage(64, 48));
  write_mask_png(dir / "m.png", BinaryMask(64, 48, false));
  const auto pair = load_image_pair({"i.png", "m.png", ClassLabel::UA, ViewKind::Section, "s"}, dir.path());
  EXPECT_EQ(pair.mask.stone_count(), 0u);
  EXPECT_EQ(pair.image.width, 64);
  EXPECT_EQ(pair.image.height, 48);
}

TEST(ImagePair, UnreadableFile) {
  TempDir dir("pair");
  detail::write_text(dir / "i.png", "not a png");
  write_mask_png(dir / "m.png", BinaryMask(4, 4, true));
  EXPECT_EQ(error_code_of([&] {
              load_image_pair({"i.png", "m.png", ClassLabel::UA, ViewKind::Section, "s"}, dir.path());
            }),
            errc::kIo);
}

TEST(RgbImage, RejectsZeroDimensions) {
  EXPECT_THROW(RgbImage(0, 5), Error);
  EXPECT_THROW(BinaryMask(5, 0), Error);
}

TEST(Patches, TenRecordsRoundTrip) {
  TempDir dir("patches");
  Rng rng(3);
  std::vector<PatchRecord> recs;
  for (int i = 0; i < 10; ++i) {
    PatchRecord r;
    r.patch = kstone::testing::random_image(16, 16, rng);
    r.origin_x = i * 7 - 3;
    r.origin_y = 100 - i;
    r.cls = class_from_index(i % 4);
    r.view = i % 3 ? ViewKind::Surface : ViewKind::Section;
    r.stone_id = i < 5 ? "stone/a" : "stone b";
    r.synthetic = i % 2 == 1;
    if (!r.synthetic) {
      r.grid_col = i;
      r.grid_row = i + 1;
    }
    recs.push_back(r);
  }
  EXPECT_EQ(save_patches(recs, dir.path()), 10u);
  std::size_t pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 10u);
  EXPECT_EQ(load_patches(dir.path()), recs);
}

TEST(Patches, EmptyListGivesEmptyIndex) {
  TempDir dir("patches");
  EXPECT_EQ(save_patches({}, dir.path()), 0u);
  EXPECT_TRUE(fs::exists(dir / "index.tsv"));
  EXPECT_TRUE(load_patches(dir.path()).empty());
}

TEST(Patches, MissingFileIsNamed) {
  TempDir dir("patches");
  PatchRecord r;
  r.patch = RgbImage(8, 8);
  r.stone_id = "s1";
  save_patches({r}, dir.path());
  const fs::path victim = dir.path() / "WW" / "SURFACE" / "s1_0.png";
  ASSERT_TRUE(fs::exists(victim));
  fs::remove(victim);
  try {
    load_patches(dir.path());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("s1_0.png"), std::string::npos);
  }
}

TEST(Patches, CorruptIndex) {
  TempDir dir("patches");
  detail::write_text(dir / "index.tsv", "something else\n");
  EXPECT_EQ(error_code_of([&] { load_patches(dir.path()); }), errc::kCorrupt);
  detail::write_text(dir / "index.tsv", std::string(kPatchIndexHeader) + "\na\tWW\n");
  EXPECT_EQ(error_code_of([&] { load_patches(dir.path()); }), errc::kCorrupt);
}
