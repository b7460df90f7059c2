#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/image.hpp"
#include "synthdetect/optim.hpp"
#include "synthdetect/rng.hpp"
#include "synthdetect/tensor.hpp"

namespace synthdetect {

struct AugmentConfig {
  int crop_size = 24;
  int resize_to = 32;  // eval: shortest side is resized to this before the center crop
  double scale_lo = 0.08;
  double scale_hi = 1.0;
  double ratio_lo = 3.0 / 4.0;
  double ratio_hi = 4.0 / 3.0;
  double flip_prob = 0.5;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std_dev{0.229, 0.224, 0.225};

  void validate() const {
    if (crop_size < 1) throw ArgumentError("aug.crop must be >= 1");
    if (resize_to < crop_size) throw ArgumentError("eval resize must be >= aug.crop");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0)) {
      throw ArgumentError("crop scale range must satisfy 0 < lo <= hi <= 1");
    }
    if (!(ratio_lo > 0.0 && ratio_lo <= ratio_hi)) throw ArgumentError("crop aspect range must satisfy 0 < lo <= hi");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ArgumentError("aug.flip_prob must lie in [0, 1]");
    for (double s : std_dev) {
      if (!(s > 0.0)) throw ArgumentError("aug.std entries must be > 0");
    }
  }
};

struct CropRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  bool operator==(const CropRect&) const = default;
};

// Area fraction ~ U(scale), log-aspect ~ U(log ratio); up to 10 draws, then a
// center crop of the largest in-range aspect.
inline CropRect sample_crop_rect(int height, int width, const AugmentConfig& cfg, RngStream& rng) {
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(cfg.ratio_lo);
  const double log_hi = std::log(cfg.ratio_hi);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const int top = static_cast<int>(rng.uniform_int(0LL, height - h));
      const int left = static_cast<int>(rng.uniform_int(0LL, width - w));
      return {top, left, h, w};
    }
  }
  const double in_ratio = static_cast<double>(width) / height;
  int w = width, h = height;
  if (in_ratio < cfg.ratio_lo) {
    h = static_cast<int>(std::lround(w / cfg.ratio_lo));
  } else if (in_ratio > cfg.ratio_hi) {
    w = static_cast<int>(std::lround(h * cfg.ratio_hi));
  }
  return {(height - h) / 2, (width - w) / 2, h, w};
}

inline ImageRecord random_resized_crop(const ImageRecord& img, const AugmentConfig& cfg, RngStream& rng) {
  const CropRect r = sample_crop_rect(img.height, img.width, cfg, rng);
  return resize_bilinear(crop(img, r.top, r.left, r.height, r.width), cfg.crop_size, cfg.crop_size);
}

// Always consumes exactly one draw.
inline ImageRecord random_hflip(const ImageRecord& img, double flip_prob, RngStream& rng) {
  return rng.bernoulli(flip_prob) ? hflip(img) : img;
}

// Interleaved H x W x C reals, nominally in [0, 1].
struct FloatImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;
};

inline FloatImage to_unit(const ImageRecord& img) {
  FloatImage f{img.height, img.width, img.channels, std::vector<double>(img.pixels.size())};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) f.values[i] = img.pixels[i] / 255.0;
  return f;
}

// Channel-major 3 x H x W output.
template <class T = float>
Tensor<T> normalize_channels(const FloatImage& img, const AugmentConfig& cfg) {
  if (img.channels != 3) {
    throw ShapeError("normalize_channels expects 3 channels, got " + std::to_string(img.channels));
  }
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  std::vector<T> out(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      out[c * plane + p] = static_cast<T>((img.values[3 * p + c] - cfg.mean[c]) / cfg.std_dev[c]);
    }
  }
  return Tensor<T>::from({3, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)},
                         std::move(out));
}

inline CropRect center_crop_rect(int height, int width, int size) {
  return {(height - size) / 2, (width - size) / 2, size, size};
}

template <class T = float>
Tensor<T> eval_transform(const ImageRecord& img, const AugmentConfig& cfg) {
  if (std::min(img.height, img.width) < cfg.crop_size) {
    throw DimensionError("eval_transform: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " is smaller than the crop size " + std::to_string(cfg.crop_size));
  }
  const int shortest = std::min(img.height, img.width);
  const double s = static_cast<double>(cfg.resize_to) / shortest;
  const int h = img.height == shortest ? cfg.resize_to : static_cast<int>(std::lround(img.height * s));
  const int w = img.width == shortest ? cfg.resize_to : static_cast<int>(std::lround(img.width * s));
  const ImageRecord resized = resize_bilinear(img, h, w);
  const CropRect r = center_crop_rect(h, w, cfg.crop_size);
  return normalize_channels<T>(to_unit(crop(resized, r.top, r.left, r.height, r.width)), cfg);
}

// Sample `index` in `epoch` under `seed`: crop, flip, normalize.
template <class T = float>
Tensor<T> train_transform(const ImageRecord& img, const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t epoch,
                          std::uint64_t index) {
  RngStream rng(seed, "augment", epoch, index);
  ImageRecord x = random_resized_crop(img, cfg, rng);
  x = random_hflip(x, cfg.flip_prob, rng);
  return normalize_channels<T>(to_unit(x), cfg);
}

inline int target_of(Label l) { return l == Label::FAKE ? 1 : 0; }

// Grayscale 1 x H x W with raw [0, 1] pixels; no augmentation.
template <class T>
class GrayImageSource : public SampleSource<T> {
 public:
  explicit GrayImageSource(const std::vector<ImageRecord>& images) {
    if (!images.empty()) {
      h_ = static_cast<std::size_t>(images.front().height);
      w_ = static_cast<std::size_t>(images.front().width);
    }
    data_.reserve(images.size() * h_ * w_);
    for (const auto& img : images) {
      if (static_cast<std::size_t>(img.height) != h_ || static_cast<std::size_t>(img.width) != w_) {
        throw DimensionError("GrayImageSource: mixed image sizes (" + img.path + ")");
      }
      const ImageRecord g = to_grayscale(img);
      for (auto p : g.pixels) data_.push_back(static_cast<T>(p / 255.0));
      targets_.push_back(target_of(img.label));
    }
  }
  std::size_t size() const override { return targets_.size(); }
  Shape sample_shape() const override { return {1, h_, w_}; }
  int target(std::size_t i) const override { return targets_[i]; }
  void fill(std::size_t i, std::uint64_t, bool, std::span<T> out) const override {
    const std::size_t n = h_ * w_;
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(i * n), data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n),
              out.begin());
  }

 private:
  std::size_t h_ = 0, w_ = 0;
  std::vector<T> data_;
  std::vector<int> targets_;
};

// RGB crop_size^2 samples: train_transform when training, eval_transform otherwise.
template <class T>
class AugmentedImageSource : public SampleSource<T> {
 public:
  AugmentedImageSource(std::shared_ptr<const std::vector<ImageRecord>> images, AugmentConfig cfg, std::uint64_t seed)
      : images_(std::move(images)), cfg_(cfg), seed_(seed) {
    cfg_.validate();
    for (const auto& img : *images_) {
      if (img.channels != 3) throw ShapeError("AugmentedImageSource needs RGB images (" + img.path + ")");
    }
  }
  std::size_t size() const override { return images_->size(); }
  Shape sample_shape() const override {
    const auto c = static_cast<std::size_t>(cfg_.crop_size);
    return {3, c, c};
  }
  int target(std::size_t i) const override { return target_of((*images_)[i].label); }
  void fill(std::size_t i, std::uint64_t epoch, bool train, std::span<T> out) const override {
    const auto t = train ? train_transform<T>((*images_)[i], cfg_, seed_, epoch, i) : eval_transform<T>((*images_)[i], cfg_);
    std::copy(t.data().begin(), t.data().end(), out.begin());
  }

 private:
  std::shared_ptr<const std::vector<ImageRecord>> images_;
  AugmentConfig cfg_;
  std::uint64_t seed_;
};

}  // namespace synthdetect
