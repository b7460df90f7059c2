#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "synthdetect/dataset.hpp"
#include "synthdetect/synthetic.hpp"
#include "test_util.hpp"

using namespace synthdetect;
namespace fs = std::filesystem;

namespace {

void make_tree(const fs::path& root) {
  for (const char* split : {"train", "test"})
    for (const char* label : {"FAKE", "REAL"}) fs::create_directories(root / split / label);
}

ImageRecord solid(int side, int channels, std::uint8_t v) {
  ImageRecord img = make_image(side, side, channels);
  std::fill(img.pixels.begin(), img.pixels.end(), v);
  return img;
}

std::vector<std::string> paths(const std::vector<ImageRecord>& r) {
  std::vector<std::string> out;
  for (const auto& x : r) out.push_back(x.path);
  return out;
}

}  // namespace

TEST(Ingest, HandBuiltTreeCounts) {
  const auto root = sdtest::fresh_dir("ingest_counts");
  make_tree(root);
  for (int i = 0; i < 2; ++i) write_png(root / "train/FAKE" / ("f" + std::to_string(i) + ".png"), solid(32, 3, 10));
  for (int i = 0; i < 3; ++i) write_png(root / "train/REAL" / ("r" + std::to_string(i) + ".png"), solid(32, 3, 200));
  const auto ds = ingest_cifake(root);
  EXPECT_EQ(ds.counts(), (SplitCounts{2, 3, 0, 0}));
  for (const auto& r : ds.train) {
    EXPECT_EQ(r.height, 32);
    EXPECT_EQ(r.channels, 3);
    EXPECT_EQ(r.label, r.path.find("/FAKE/") != std::string::npos ? Label::FAKE : Label::REAL);
  }
}

TEST(Ingest, EmptyDirectoriesGiveEmptySplit) {
  const auto root = sdtest::fresh_dir("ingest_empty");
  make_tree(root);
  const auto ds = ingest_cifake(root);
  EXPECT_EQ(ds.counts(), (SplitCounts{0, 0, 0, 0}));
  EXPECT_TRUE(ds.train.empty());
  EXPECT_TRUE(ds.test.empty());
}

TEST(Ingest, MissingDirectoryIsNamed) {
  const auto root = sdtest::fresh_dir("ingest_missing");
  make_tree(root);
  fs::remove_all(root / "test/REAL");
  try {
    ingest_cifake(root);
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("test/REAL"), std::string::npos) << e.what();
  }
}

TEST(Ingest, UndecodableFileCarriesPath) {
  const auto root = sdtest::fresh_dir("ingest_corrupt");
  make_tree(root);
  sdtest::spit(root / "train/FAKE/broken.png", "not a png at all");
  try {
    ingest_cifake(root);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos) << e.what();
  }
}

TEST(Ingest, WrongSizeIsDimensionError) {
  const auto root = sdtest::fresh_dir("ingest_size");
  make_tree(root);
  write_png(root / "test/FAKE/big.png", solid(48, 3, 1));
  EXPECT_THROW(ingest_cifake(root), DimensionError);
}

TEST(Ingest, OrderIsLexicographicAndRepeatable) {
  const auto root = sdtest::fresh_dir("ingest_order");
  make_tree(root);
  for (const char* name : {"c.png", "a.png", "b.png"}) write_png(root / "test/REAL" / name, solid(32, 1, 5));
  write_png(root / "test/FAKE/z.png", solid(32, 1, 9));
  const auto a = ingest_cifake(root);
  const auto b = ingest_cifake(root);
  ASSERT_EQ(a.test.size(), 4u);
  auto p = paths(a.test);
  EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.test[0].channels, 1);
}

TEST(Ingest, ManifestListsEveryRecord) {
  DatasetSplit ds = synthetic_cifake(1, 1, 3);
  std::ostringstream out;
  write_manifest(ds, out);
  EXPECT_EQ(out.str(),
            "path,label,split\n"
            "synthetic/train/FAKE/000000.png,FAKE,train\n"
            "synthetic/train/REAL/000000.png,REAL,train\n"
            "synthetic/test/FAKE/000000.png,FAKE,test\n"
            "synthetic/test/REAL/000000.png,REAL,test\n");
}

TEST(Grayscale, GrayPixelsAreFixedPoints) {
  ImageRecord img = make_image(1, 256, 3);
  for (int v = 0; v < 256; ++v)
    for (int c = 0; c < 3; ++c) img.at(0, v, c) = static_cast<std::uint8_t>(v);
  const auto g = to_grayscale(img);
  ASSERT_EQ(g.channels, 1);
  for (int v = 0; v < 256; ++v) EXPECT_EQ(g.at(0, v, 0), v);
}

TEST(Grayscale, PureRed) {
  ImageRecord img = make_image(1, 1, 3);
  img.at(0, 0, 0) = 255;
  EXPECT_EQ(to_grayscale(img).at(0, 0, 0), 76);
}

TEST(Grayscale, BlackStaysBlack) {
  const auto g = to_grayscale(make_image(32, 32, 3));
  for (auto v : g.pixels) EXPECT_EQ(v, 0);
}

TEST(Grayscale, Idempotent) {
  const auto img = synthetic_image(Label::FAKE, 1, "train", 0);
  const auto once = to_grayscale(img);
  EXPECT_EQ(to_grayscale(once), once);
}

TEST(Grayscale, MatchesFormulaOnRandomPixels) {
  RngStream rng(5, "gray");
  ImageRecord img = make_image(8, 8, 3);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  const auto g = to_grayscale(img);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double l = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      EXPECT_EQ(g.at(y, x, 0), static_cast<int>(std::lround(l)));
    }
}

TEST(Resize, SameSizeIsIdentity) {
  const auto img = synthetic_image(Label::REAL, 2, "test", 4);
  EXPECT_EQ(resize_bilinear(img, 32, 32), img);
}

TEST(Resize, ConstantImageStaysConstant) {
  const auto img = solid(5, 3, 137);
  for (auto [h, w] : {std::pair{1, 1}, {3, 7}, {24, 24}, {40, 17}}) {
    const auto r = resize_bilinear(img, h, w);
    EXPECT_EQ(r.height, h);
    EXPECT_EQ(r.width, w);
    EXPECT_EQ(r.channels, 3);
    for (auto v : r.pixels) EXPECT_EQ(v, 137);
  }
}

TEST(Resize, TwoByTwoUpsampledByHand) {
  ImageRecord img = make_image(2, 2, 1);
  img.pixels = {0, 100, 100, 200};
  // half-pixel centres: source offsets 0, .25, .75, 1 per axis, value = 100 (fx + fy)
  const std::vector<std::uint8_t> expected{0,  25,  75,  100,  //
                                           25, 50,  100, 125,  //
                                           75, 100, 150, 175,  //
                                           100, 125, 175, 200};
  EXPECT_EQ(resize_bilinear(img, 4, 4).pixels, expected);
}

TEST(Resize, ZeroTargetRejected) {
  const auto img = solid(4, 1, 0);
  EXPECT_THROW(resize_bilinear(img, 0, 4), ArgumentError);
  EXPECT_THROW(resize_bilinear(img, 4, 0), ArgumentError);
}

TEST(Subset, FullCountIsPermutation) {
  const auto ds = synthetic_cifake(6, 2, 1);
  const auto s = stratified_subset(ds.train, 6, 11);
  EXPECT_EQ(s.size(), ds.train.size());
  auto a = paths(s), b = paths(ds.train);
  EXPECT_EQ(std::multiset<std::string>(a.begin(), a.end()), std::multiset<std::string>(b.begin(), b.end()));
}

TEST(Subset, SameSeedSamePaths) {
  const auto ds = synthetic_cifake(150, 1, 2);
  EXPECT_EQ(paths(stratified_subset(ds.train, 100, 7)), paths(stratified_subset(ds.train, 100, 7)));
}

TEST(Subset, DifferentSeedDifferentPathsSameBalance) {
  const auto ds = synthetic_cifake(150, 1, 2);
  const auto a = stratified_subset(ds.train, 100, 7);
  const auto b = stratified_subset(ds.train, 100, 8);
  EXPECT_NE(paths(a), paths(b));
  for (const auto* s : {&a, &b}) {
    std::size_t fake = 0;
    for (const auto& r : *s) fake += r.label == Label::FAKE;
    EXPECT_EQ(fake, 100u);
    EXPECT_EQ(s->size(), 200u);
  }
}

TEST(Subset, NoReplacementAndCanonicalOrder) {
  const auto ds = synthetic_cifake(40, 1, 9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = stratified_subset(ds.train, 13, seed);
    auto p = paths(s);
    EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
    EXPECT_EQ(std::set<std::string>(p.begin(), p.end()).size(), p.size());
  }
}

TEST(Subset, TooLargeNamesAvailableCounts) {
  const auto ds = synthetic_cifake(3, 1, 1);
  try {
    stratified_subset(ds.train, 4, 0);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3 FAKE"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3 REAL"), std::string::npos) << msg;
  }
}

TEST(Subset, SplitOverloadSamplesBothSides) {
  const auto ds = synthetic_cifake(10, 10, 4);
  const auto s = stratified_subset(ds, 5, 3, 1);
  EXPECT_EQ(s.counts(), (SplitCounts{5, 5, 3, 3}));
}

TEST(Synthetic, DeterministicAndBalanced) {
  const auto a = synthetic_cifake(4, 2, 17);
  const auto b = synthetic_cifake(4, 2, 17);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.counts(), (SplitCounts{4, 4, 2, 2}));
  EXPECT_NE(synthetic_cifake(4, 2, 18).train, a.train);
}

TEST(Synthetic, PngRoundTrip) {
  const auto dir = sdtest::fresh_dir("png_roundtrip");
  const auto img = synthetic_image(Label::FAKE, 3, "train", 1);
  write_png(dir / "x.png", img);
  const auto back = read_png(dir / "x.png", Label::FAKE);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(back.channels, 3);
}
