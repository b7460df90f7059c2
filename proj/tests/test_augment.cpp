#include <gtest/gtest.h>

#include <algorithm>

#include "synthdetect/augment.hpp"
#include "synthdetect/synthetic.hpp"

using namespace synthdetect;

namespace {

ImageRecord noise_rgb(int side, std::uint64_t seed) {
  RngStream rng(seed, "aug.noise");
  ImageRecord img = make_image(side, side, 3);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

template <class T>
std::vector<T> values(const Tensor<T>& x) {
  return {x.data().begin(), x.data().end()};
}

}  // namespace

TEST(RandomResizedCrop, PinnedRangesOnCropSizedInputIsIdentity) {
  AugmentConfig cfg;
  cfg.scale_lo = cfg.scale_hi = 1.0;
  cfg.ratio_lo = cfg.ratio_hi = 1.0;
  const auto img = noise_rgb(24, 1);
  for (std::uint64_t k = 0; k < 20; ++k) {
    RngStream rng(k, "crop");
    EXPECT_EQ(random_resized_crop(img, cfg, rng), img);
  }
}

TEST(RandomResizedCrop, AlwaysCropSized) {
  const AugmentConfig cfg;
  const auto img = noise_rgb(32, 2);
  RngStream rng(3, "crop.many");
  for (int i = 0; i < 10000; ++i) {
    const CropRect r = sample_crop_rect(32, 32, cfg, rng);
    ASSERT_GE(r.top, 0);
    ASSERT_GE(r.left, 0);
    ASSERT_GT(r.height, 0);
    ASSERT_LE(r.top + r.height, 32);
    ASSERT_LE(r.left + r.width, 32);
  }
  for (int i = 0; i < 10000; ++i) {
    const auto out = random_resized_crop(img, cfg, rng);
    ASSERT_EQ(out.height, 24);
    ASSERT_EQ(out.width, 24);
    ASSERT_EQ(out.channels, 3);
  }
}

TEST(RandomResizedCrop, ReplayGivesSameRect) {
  const AugmentConfig cfg;
  for (std::uint64_t i = 0; i < 50; ++i) {
    RngStream a(9, "augment", 2, i), b(9, "augment", 2, i);
    EXPECT_EQ(sample_crop_rect(32, 32, cfg, a), sample_crop_rect(32, 32, cfg, b));
  }
}

TEST(RandomResizedCrop, InfeasibleRangesFallBackToCenter) {
  AugmentConfig cfg;
  cfg.scale_lo = cfg.scale_hi = 1.0;
  cfg.ratio_lo = cfg.ratio_hi = 2.0;
  RngStream rng(4, "fallback");
  EXPECT_EQ(sample_crop_rect(32, 32, cfg, rng), (CropRect{8, 0, 16, 32}));
}

TEST(Flip, Involution) {
  const auto img = noise_rgb(7, 5);
  EXPECT_EQ(hflip(hflip(img)), img);
  RngStream rng(5, "flip");
  EXPECT_EQ(random_hflip(random_hflip(img, 1.0, rng), 1.0, rng), img);
  EXPECT_NE(hflip(img), img);
}

TEST(Flip, ZeroProbabilityIsIdentity) {
  const auto img = noise_rgb(8, 6);
  RngStream rng(6, "flip.zero");
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(random_hflip(img, 0.0, rng), img);
}

TEST(Flip, HalfProbabilityRate) {
  ImageRecord img = make_image(1, 2, 1);
  img.pixels = {0, 1};
  RngStream rng(7, "flip.rate");
  int flipped = 0;
  for (int i = 0; i < 100000; ++i) flipped += random_hflip(img, 0.5, rng).pixels[0] == 1;
  const double rate = flipped / 100000.0;
  EXPECT_GE(rate, 0.49);
  EXPECT_LE(rate, 0.51);
}

TEST(Flip, PreservesPixelMultiset) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto img = noise_rgb(9, s);
    auto a = img.pixels, b = hflip(img).pixels;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Flip, MirrorsColumns) {
  ImageRecord img = make_image(1, 3, 3);
  img.pixels = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(hflip(img).pixels, (std::vector<std::uint8_t>{7, 8, 9, 4, 5, 6, 1, 2, 3}));
}

TEST(Normalize, MeanPixelMapsToZero) {
  const AugmentConfig cfg;
  const FloatImage px{1, 1, 3, {0.485, 0.456, 0.406}};
  for (double v : values(normalize_channels<double>(px, cfg))) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, HandValue) {
  const AugmentConfig cfg;
  const FloatImage px{1, 1, 3, {0.714, 0.456, 0.406}};
  EXPECT_NEAR(normalize_channels<double>(px, cfg).data()[0], 1.0, 1e-12);
}

TEST(Normalize, InvertibleAndChannelMajor) {
  const AugmentConfig cfg;
  const auto f = to_unit(noise_rgb(4, 8));
  const auto t = normalize_channels<double>(f, cfg);
  EXPECT_EQ(t.shape(), (Shape{3, 4, 4}));
  for (std::size_t p = 0; p < 16; ++p)
    for (int c = 0; c < 3; ++c) {
      const double back = t.data()[c * 16 + p] * cfg.std_dev[c] + cfg.mean[c];
      EXPECT_NEAR(back, f.values[3 * p + c], 1e-6);
    }
}

TEST(Normalize, NeedsThreeChannels) {
  EXPECT_THROW(normalize_channels<float>(to_unit(make_image(2, 2, 1)), AugmentConfig{}), ShapeError);
}

TEST(EvalTransform, CenterOffset) {
  EXPECT_EQ(center_crop_rect(32, 32, 24), (CropRect{4, 4, 24, 24}));
  EXPECT_EQ(center_crop_rect(24, 24, 24), (CropRect{0, 0, 24, 24}));
  const AugmentConfig cfg;
  const auto img = noise_rgb(32, 9);
  const auto t = eval_transform<double>(img, cfg);
  EXPECT_EQ(t.shape(), (Shape{3, 24, 24}));
  const double expected = (img.at(4, 4, 1) / 255.0 - cfg.mean[1]) / cfg.std_dev[1];
  EXPECT_EQ(t.data()[24 * 24], expected);
}

TEST(EvalTransform, PureAndRepeatable) {
  const auto img = noise_rgb(32, 10);
  EXPECT_EQ(values(eval_transform<float>(img, AugmentConfig{})), values(eval_transform<float>(img, AugmentConfig{})));
}

TEST(EvalTransform, TooSmall) { EXPECT_THROW(eval_transform<float>(noise_rgb(20, 1), AugmentConfig{}), DimensionError); }

TEST(TrainTransform, PureFunctionOfSeedEpochIndex) {
  const AugmentConfig cfg;
  const auto img = noise_rgb(32, 11);
  const auto a = values(train_transform<float>(img, cfg, 1, 2, 3));
  EXPECT_EQ(a, values(train_transform<float>(img, cfg, 1, 2, 3)));
  EXPECT_NE(a, values(train_transform<float>(img, cfg, 1, 3, 3)));
  EXPECT_NE(a, values(train_transform<float>(img, cfg, 1, 2, 4)));
  EXPECT_NE(a, values(train_transform<float>(img, cfg, 2, 2, 3)));
  EXPECT_EQ(a.size(), 3u * 24 * 24);
}

TEST(TrainTransform, SourceOrderDoesNotMatter) {
  auto imgs = std::make_shared<std::vector<ImageRecord>>();
  for (std::uint64_t i = 0; i < 6; ++i) imgs->push_back(noise_rgb(32, 20 + i));
  const AugmentedImageSource<float> src(imgs, AugmentConfig{}, 5);
  EXPECT_EQ(src.sample_shape(), (Shape{3, 24, 24}));
  std::vector<float> fwd(6 * 3 * 24 * 24), rev(fwd.size());
  const std::size_t per = 3 * 24 * 24;
  for (std::size_t i = 0; i < 6; ++i) src.fill(i, 1, true, std::span<float>(fwd.data() + i * per, per));
  for (std::size_t i = 6; i-- > 0;) src.fill(i, 1, true, std::span<float>(rev.data() + i * per, per));
  EXPECT_EQ(fwd, rev);
}

TEST(Sources, GrayImageSourceRawUnitPixels) {
  const auto ds = synthetic_cifake(2, 0, 3);
  const GrayImageSource<double> src(ds.train);
  EXPECT_EQ(src.size(), 4u);
  EXPECT_EQ(src.sample_shape(), (Shape{1, 32, 32}));
  std::vector<double> out(1024);
  src.fill(0, 0, true, std::span<double>(out));
  const auto g = to_grayscale(ds.train[0]);
  for (std::size_t p = 0; p < 1024; ++p) EXPECT_EQ(out[p], g.pixels[p] / 255.0);
  EXPECT_EQ(src.target(0), ds.train[0].label == Label::FAKE ? 1 : 0);
}

TEST(Config, Validation) {
  AugmentConfig cfg;
  cfg.flip_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = AugmentConfig{};
  cfg.std_dev[2] = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = AugmentConfig{};
  cfg.scale_lo = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  EXPECT_NO_THROW(AugmentConfig{}.validate());
}
