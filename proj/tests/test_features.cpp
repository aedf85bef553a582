#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "kstone/features.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kstone;
using kstone::testing::random_image;
using kstone::testing::solid;
using kstone::testing::TempDir;

namespace {

PatchRecord record_of(RgbImage img, ClassLabel cls = ClassLabel::UA, ViewKind view = ViewKind::Surface,
                      std::string stone = "UA-01") {
  PatchRecord r;
  r.patch = std::move(img);
  r.cls = cls;
  r.view = view;
  r.stone_id = std::move(stone);
  return r;
}

FeatureVector fake_vector(ClassLabel cls, FeatureView view, const std::string& stone, double tag) {
  FeatureVector v;
  v.cls = cls;
  v.view = view;
  v.stone_id = stone;
  v.components.assign(kViewDim, 0.0);
  for (std::size_t b = 0; b < kBlocksPerView; ++b) v.components[b * kHistBins] = 1.0;
  v.components[1] = tag;  // identifies the source in pairing tests
  return v;
}

void expect_blocks_are_distributions(const FeatureVector& v) {
  ASSERT_EQ(v.components.size() % kHistBins, 0u);
  for (std::size_t b = 0; b < v.components.size() / kHistBins; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < kHistBins; ++i) {
      EXPECT_GE(v.components[b * kHistBins + i], 0.0);
      s += v.components[b * kHistBins + i];
    }
    EXPECT_NEAR(s, 1.0, 1e-9) << "block " << b;
  }
}

}  // namespace

TEST(Hsv, Examples) {
  auto p = rgb_to_hsv(100, 100, 100);
  EXPECT_EQ(p.v, 100);
  EXPECT_EQ(p.s, 0);
  EXPECT_EQ(p.h, 0);
  p = rgb_to_hsv(255, 0, 0);
  EXPECT_EQ(p.v, 255);
  EXPECT_EQ(p.s, 1);
  EXPECT_EQ(p.h, 0);
  // V reached by G and B: the G branch gives 120 + 60 * (128 - 0) / 128.
  p = rgb_to_hsv(0, 128, 128);
  EXPECT_EQ(p.v, 128);
  EXPECT_EQ(p.s, 1);
  EXPECT_DOUBLE_EQ(p.h, 180);
  EXPECT_DOUBLE_EQ(rgb_to_hsv(0, 0, 255).h, 240);
  EXPECT_DOUBLE_EQ(rgb_to_hsv(255, 0, 255).h, 300);  // R branch, -60 wrapped
  EXPECT_DOUBLE_EQ(rgb_to_hsv(200, 100, 50).s, 0.75);
}

TEST(Hsv, RangesOnRandomPixels) {
  Rng rng(1);
  for (int i = 0; i < 20000; ++i) {
    const double r = static_cast<double>(rng.below(256)), g = static_cast<double>(rng.below(256)),
                 b = static_cast<double>(rng.below(256));
    const auto p = rgb_to_hsv(r, g, b);
    EXPECT_GE(p.h, 0);
    EXPECT_LT(p.h, 360);
    EXPECT_GE(p.s, 0);
    EXPECT_LE(p.s, 1);
    EXPECT_EQ(p.v, std::max({r, g, b}));
    if (r == g && g == b) {
      EXPECT_EQ(p.s, 0);
    }
  }
}

TEST(Energy, ConstantAndRamp) {
  const auto zero = channel_energy(Raster(6, 5, 3.0));
  EXPECT_EQ(zero.width, 4);
  EXPECT_EQ(zero.height, 3);
  for (double e : zero.values) EXPECT_EQ(e, 0.0);
  Raster ramp(7, 7);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 7; ++x) ramp.at(x, y) = x;
  }
  const auto e = channel_energy(ramp);
  for (double v : e.values) EXPECT_EQ(v, 2.0);
  const auto h = energy_histogram(e, ChannelKind::Value);
  EXPECT_EQ(h[0], 1.0);
  EXPECT_THROW(channel_energy(Raster(2, 5)), Error);
}

TEST(Energy, SingleBrightPixelMatchesHandEvaluation) {
  Raster g(5, 5, 0.0);
  g.at(2, 2) = 9.0;
  const auto e = channel_energy(g);  // interior 3x3, (i, j) -> pixel (i+1, j+1)
  // The bright pixel's own gradient is zero; its four axial neighbours see
  // one difference of magnitude 9; diagonal interior pixels see none.
  const double want[3][3] = {{0, 9, 0}, {9, 0, 9}, {0, 9, 0}};
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 3; ++i) EXPECT_EQ(e.at(i, j), want[j][i]) << i << "," << j;
  }
}

TEST(Energy, HistogramBinning) {
  EXPECT_THROW(energy_histogram(EnergyMap{}, ChannelKind::Hue), Error);
  const double emax = 2 * std::sqrt(2.0) * 255;
  EXPECT_EQ(energy_bin(0.0, ChannelKind::Value), 0u);
  EXPECT_EQ(energy_bin(emax, ChannelKind::Value), 9u);
  EXPECT_EQ(energy_bin(emax * 3, ChannelKind::Value), 9u);
  EXPECT_EQ(energy_bin(emax * 0.55, ChannelKind::Value), 5u);
  // Evenly spread energies land about 0.1 in each bin.
  Rng rng(3);
  EnergyMap m(100, 100);
  for (auto& v : m.values) v = rng.uniform(0.0, 2 * std::sqrt(2.0));
  const auto h = energy_histogram(m, ChannelKind::Saturation);
  for (double v : h) EXPECT_NEAR(v, 0.1, 0.015);
  EXPECT_NEAR(std::accumulate(h.begin(), h.end(), 0.0), 1.0, 1e-12);
}

TEST(Lbp, Riu2Table) {
  EXPECT_EQ(riu2_label(0x00), 0u);
  EXPECT_EQ(riu2_label(0xff), 8u);
  EXPECT_EQ(riu2_label(0x07), 3u);
  EXPECT_EQ(riu2_label(0x81), 2u);   // wraps around: still uniform
  EXPECT_EQ(riu2_label(0x05), 9u);   // four transitions
  std::size_t uniform = 0;
  for (unsigned c = 0; c < 256; ++c) {
    std::array<int, 8> bits{};
    for (int p = 0; p < 8; ++p) bits[static_cast<std::size_t>(p)] = (c >> p) & 1;
    EXPECT_EQ(static_cast<int>(riu2_label(c)), oracle::riu2(bits)) << c;
    uniform += riu2_label(c) != 9;
  }
  EXPECT_EQ(uniform, 58u);  // 8 * 7 + 2 uniform 8-bit patterns
}

TEST(Lbp, ConstantRasterAllOnes) {
  const auto h = lbp_histogram(Raster(9, 9, 42.0), LbpParams{});
  EXPECT_EQ(h[8], 1.0);
  EXPECT_THROW(lbp_histogram(Raster(4, 9), LbpParams{}), Error);
  EXPECT_THROW(LbpParams{6}.validate(), Error);
}

TEST(Lbp, MatchesNaiveOracle) {
  Rng rng(77);
  for (int window : {5, 7, 9}) {
    for (int t = 0; t < 20; ++t) {
      // Few grey levels make exact ties common.
      const auto g = oracle::random_raster(16, 16, rng, t % 2 ? 256 : 4);
      const auto got = lbp_histogram(g, LbpParams{window});
      const auto want = oracle::lbp_histogram(g, window);
      for (std::size_t b = 0; b < 10; ++b) EXPECT_EQ(got[b], want[b]) << "window " << window << " trial " << t;
    }
  }
}

TEST(Lbp, QuarterTurnInvariance) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    auto g = oracle::random_raster(17, 13, rng, t % 3 ? 256 : 3);
    const auto h0 = lbp_histogram(g, LbpParams{5});
    for (int k = 0; k < 3; ++k) {
      g = oracle::rotate90(g);
      EXPECT_EQ(lbp_histogram(g, LbpParams{5}), h0);
    }
  }
}

TEST(FeatureVector, ConstantGreyPatch) {
  const auto v = feature_vector(record_of(solid(8, 8, 90, 90, 90)), LbpParams{});
  ASSERT_EQ(v.components.size(), 40u);
  std::vector<double> want(40, 0.0);
  want[0] = want[10] = want[20] = want[38] = 1.0;
  EXPECT_EQ(v.components, want);
  EXPECT_EQ(v.cls, ClassLabel::UA);
  EXPECT_EQ(v.view, FeatureView::Surface);
  EXPECT_EQ(v.stone_id, "UA-01");
}

TEST(FeatureVector, BlocksAreDistributionsAndDeterministic) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto img = random_image(12 + t, 12 + t, rng);
    const auto a = feature_vector(record_of(img), LbpParams{});
    expect_blocks_are_distributions(a);
    EXPECT_EQ(a.components, feature_vector(record_of(img), LbpParams{}).components);
  }
  EXPECT_THROW(feature_vector(record_of(solid(4, 4, 1, 2, 3)), LbpParams{}), Error);
  EXPECT_NO_THROW(feature_vector(record_of(solid(5, 5, 1, 2, 3)), LbpParams{}));
  EXPECT_THROW(feature_vector(record_of(solid(5, 5, 1, 2, 3)), LbpParams{7}), Error);
}

TEST(FeatureVector, HueSaturationScaleInvariance) {
  Rng rng(21);
  for (double k : {0.5, 0.8}) {
    std::size_t pixels = 0, crossings = 0;
    for (int t = 0; t < 5; ++t) {
      const auto img = oracle::decimal_image(64, 64, rng);
      const auto small = oracle::scaled(img, k);
      crossings += oracle::bin_crossings(img, small, ChannelKind::Hue);
      crossings += oracle::bin_crossings(img, small, ChannelKind::Saturation);
      pixels += 2 * img.pixel_count();
      const auto a = feature_vector(record_of(img), LbpParams{});
      const auto b = feature_vector(record_of(small), LbpParams{});
      for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(a.components[i], b.components[i], 2.0 / (62 * 62));
    }
    EXPECT_LE(static_cast<double>(crossings) / static_cast<double>(pixels), 1e-3) << "k=" << k;
  }
}

TEST(Mixed, ConcatenationAndErrors) {
  const auto s = fake_vector(ClassLabel::WD, FeatureView::Surface, "WD-01", 0.25);
  const auto c = fake_vector(ClassLabel::WD, FeatureView::Section, "WD-01", 0.5);
  const auto m = mixed_vector(s, c);
  ASSERT_EQ(m.components.size(), 80u);
  EXPECT_TRUE(std::equal(s.components.begin(), s.components.end(), m.components.begin()));
  EXPECT_TRUE(std::equal(c.components.begin(), c.components.end(), m.components.begin() + 40));
  EXPECT_EQ(m.view, FeatureView::Mixed);
  EXPECT_EQ(m.stone_id, "WD-01");
  EXPECT_THROW(mixed_vector(fake_vector(ClassLabel::WW, FeatureView::Surface, "a", 0),
                            fake_vector(ClassLabel::WD, FeatureView::Section, "b", 0)),
               Error);
  EXPECT_THROW(mixed_vector(c, s), Error);
}

TEST(Mixed, PairingCountsAndReuse) {
  // One class, one stone, 5 surface and 3 section patches: 5 vectors, every
  // surface used once, every section used at least once.
  std::vector<FeatureVector> surf, sec;
  for (int i = 0; i < 5; ++i) surf.push_back(fake_vector(ClassLabel::BRU, FeatureView::Surface, "BRU-01", i));
  for (int i = 0; i < 3; ++i) sec.push_back(fake_vector(ClassLabel::BRU, FeatureView::Section, "BRU-01", 10 + i));
  const auto out = pair_mixed(surf, sec, 4);
  ASSERT_EQ(out.size(), 5u);
  std::multiset<double> s_used, c_used;
  for (const auto& m : out) {
    s_used.insert(m.components[1]);
    c_used.insert(m.components[41]);
  }
  EXPECT_EQ(s_used, (std::multiset<double>{0, 1, 2, 3, 4}));
  for (double t : {10.0, 11.0, 12.0}) EXPECT_GE(c_used.count(t), 1u);
  EXPECT_EQ(pair_mixed(surf, sec, 4).size(), out.size());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].components, pair_mixed(surf, sec, 4)[i].components);

  // Stones seen in one view only pair within the class.
  std::vector<FeatureVector> s2, c2;
  for (int i = 0; i < 4; ++i) s2.push_back(fake_vector(ClassLabel::WW, FeatureView::Surface, "WW-0" + std::to_string(i), i));
  for (int i = 0; i < 2; ++i) c2.push_back(fake_vector(ClassLabel::WW, FeatureView::Section, "WW-9" + std::to_string(i), i));
  EXPECT_EQ(pair_mixed(s2, c2, 1).size(), 4u);

  // A class present in a single view cannot be mixed.
  c2.clear();
  EXPECT_THROW(pair_mixed(s2, c2, 1), Error);
}

TEST(Mixed, SameStonePreferredWithLeftovers) {
  // Stone A has both views; stone B only a surface patch, which borrows a
  // section partner from the class.
  std::vector<FeatureVector> surf{fake_vector(ClassLabel::UA, FeatureView::Surface, "A", 1),
                                  fake_vector(ClassLabel::UA, FeatureView::Surface, "B", 2)};
  std::vector<FeatureVector> sec{fake_vector(ClassLabel::UA, FeatureView::Section, "A", 3)};
  const auto out = pair_mixed(surf, sec, 0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].stone_id, "A");
  EXPECT_EQ(out[1].stone_id, "B+A");
}

TEST(Select, BlockIndexing) {
  FeatureVector v;
  v.components.resize(80);
  std::iota(v.components.begin(), v.components.end(), 0.0);
  auto first40 = v;
  first40.components.resize(40);
  const auto eh = select_features(first40, parse_combo("eH"));
  ASSERT_EQ(eh.components.size(), 10u);
  EXPECT_EQ(eh.components.front(), 0);
  EXPECT_EQ(eh.components.back(), 9);
  EXPECT_EQ(select_features(first40, parse_combo("LBP+eH+eS+eV")).components, first40.components);
  const auto lh = select_features(v, parse_combo("LBP+eH"));
  ASSERT_EQ(lh.components.size(), 40u);
  std::vector<double> want;
  for (int base : {0, 30, 40, 70}) {
    for (int i = 0; i < 10; ++i) want.push_back(base + i);
  }
  EXPECT_EQ(lh.components, want);
  EXPECT_THROW(select_features(first40, FeatureCombo{0}), Error);
  auto bad = first40;
  bad.components.resize(30);
  EXPECT_THROW(select_features(bad, parse_combo("eH")), Error);
}

TEST(Combo, ParseAndPrint) {
  EXPECT_EQ(to_string(parse_combo("eV+LBP+eS+eH")), "LBP+eHSV");
  EXPECT_EQ(to_string(parse_combo("eH+LBP")), to_string(parse_combo("LBP+eH")));
  EXPECT_EQ(parse_combo("eHSV").block_count(), 3u);
  EXPECT_EQ(parse_combo("LBP").block_count(), 1u);
  EXPECT_THROW(parse_combo("eX"), Error);
  EXPECT_THROW(parse_combo(""), Error);
}

TEST(FeatureFile, RoundTripAndCorruption) {
  Rng rng(12);
  FeatureSet set;
  set.combo = parse_combo("LBP+eHSV");
  for (int i = 0; i < 6; ++i) {
    auto v = feature_vector(record_of(random_image(10, 10, rng), class_from_index(i % 4),
                                      i % 2 ? ViewKind::Section : ViewKind::Surface, "S-" + std::to_string(i)),
                            set.lbp);
    set.vectors.push_back(v);
  }
  TempDir dir("features");
  write_features(set, dir / "f.tsv");
  const auto back = read_features(dir / "f.tsv");
  ASSERT_EQ(back.vectors.size(), 6u);
  EXPECT_EQ(to_string(back.combo), to_string(set.combo));
  EXPECT_EQ(back.lbp.window_side, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.vectors[i].cls, set.vectors[i].cls);
    EXPECT_EQ(back.vectors[i].view, set.vectors[i].view);
    EXPECT_EQ(back.vectors[i].stone_id, set.vectors[i].stone_id);
    for (std::size_t j = 0; j < 40; ++j) {
      EXPECT_NEAR(back.vectors[i].components[j], set.vectors[i].components[j], 1e-9);
    }
  }
  // Formatting is a fixed point after one round trip.
  EXPECT_EQ(format_features(back), format_features(parse_features(format_features(back))));
  EXPECT_THROW(parse_features("garbage\n"), Error);
  EXPECT_THROW(parse_features(std::string(kFeatureFileMagic) + " combo=eH dim=10\nWW\tsurface\tx\t1,2\n"), Error);
  EXPECT_THROW(read_features(dir / "missing.tsv"), Error);
}
