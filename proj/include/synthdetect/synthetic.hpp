#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "synthdetect/dataset.hpp"
#include "synthdetect/rng.hpp"

namespace synthdetect {

// Stand-in corpus for environments without CIFAKE. Both classes are Gaussian
// random fields with random brightness, contrast and tint; they differ only in
// correlation length (REAL is smoother), so the cue is textural.
struct SyntheticConfig {
  double real_sigma = 1.6;
  double fake_sigma = 1.1;
  double contrast_lo = 18.0;
  double contrast_hi = 45.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur with wrap-around borders on a side x side plane.
inline void blur_plane(std::vector<double>& plane, int side, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(plane.size());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * plane[y * side + ((x + t) % side + side) % side];
      tmp[y * side + x] = acc;
    }
  }
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[(((y + t) % side + side) % side) * side + x];
      plane[y * side + x] = acc;
    }
  }
}

inline std::string padded(std::uint64_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

}  // namespace detail

inline ImageRecord synthetic_image(Label label, std::uint64_t seed, std::string_view split, std::uint64_t index,
                                   const SyntheticConfig& cfg = {}) {
  const int side = kImageSide;
  RngStream rng(seed, std::string("synthetic.") + std::string(split) + "." + std::string(label_name(label)), 0, index);
  const auto kernel = detail::gaussian_kernel(label == Label::REAL ? cfg.real_sigma : cfg.fake_sigma);

  std::vector<double> shared(side * side);
  for (auto& v : shared) v = rng.normal();
  detail::blur_plane(shared, side, kernel);

  const double mean = rng.uniform(70.0, 180.0);
  const double contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  ImageRecord img = make_image(side, side, 3, label,
                               "synthetic/" + std::string(split) + "/" + std::string(label_name(label)) + "/" +
                                   detail::padded(index) + ".png");
  for (int c = 0; c < 3; ++c) {
    std::vector<double> own(side * side);
    for (auto& v : own) v = rng.normal();
    detail::blur_plane(own, side, kernel);
    std::vector<double> field(side * side);
    double m = 0.0, s2 = 0.0;
    for (int i = 0; i < side * side; ++i) {
      field[i] = 0.8 * shared[i] + 0.2 * own[i];
      m += field[i];
    }
    m /= side * side;
    for (double v : field) s2 += (v - m) * (v - m);
    const double sd = std::sqrt(s2 / (side * side)) + 1e-12;
    const double tint = rng.uniform(-15.0, 15.0);
    for (int i = 0; i < side * side; ++i) {
      img.pixels[3 * i + c] = clamp_to_byte(mean + tint + contrast * (field[i] - m) / sd);
    }
  }
  return img;
}

// Balanced train/test corpus; records are in canonical path order like
// ingest_cifake output.
inline DatasetSplit synthetic_cifake(std::size_t train_per_class, std::size_t test_per_class, std::uint64_t seed,
                                     const SyntheticConfig& cfg = {}) {
  auto make = [&](std::string_view split, std::size_t n) {
    std::vector<ImageRecord> out;
    out.reserve(2 * n);
    for (Label label : {Label::FAKE, Label::REAL}) {
      for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic_image(label, seed, split, i, cfg));
    }
    std::sort(out.begin(), out.end(), [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
    return out;
  };
  DatasetSplit ds;
  ds.train = make("train", train_per_class);
  ds.test = make("test", test_per_class);
  return ds;
}

}  // namespace synthdetect
