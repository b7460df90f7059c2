#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/image.hpp"

namespace synthdetect {

struct HogConfig {
  int cell_size = 8;     // pixels per cell side
  int block_size = 2;    // cells per block side
  int block_stride = 1;  // cells
  int n_bins = 9;
  bool signed_orientation = false;  // unsigned covers [0, 180) degrees

  void validate(int height, int width) const {
    if (cell_size < 1 || block_size < 1 || block_stride < 1) {
      throw ArgumentError("HOG cell_size, block_size and block_stride must be positive");
    }
    if (n_bins < 2) throw ArgumentError("HOG needs at least 2 orientation bins");
    if (cell_size * block_size > std::min(height, width)) {
      throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                           " is smaller than one HOG block");
    }
    if (height % cell_size != 0 || width % cell_size != 0) {
      throw DimensionError("image dimensions must be whole multiples of the HOG cell size");
    }
  }

  int blocks_along(int pixels) const { return (pixels / cell_size - block_size) / block_stride + 1; }

  std::size_t descriptor_size(int height, int width) const {
    return static_cast<std::size_t>(blocks_along(height)) * blocks_along(width) * block_size * block_size * n_bins;
  }
};

using FeatureVector = std::vector<double>;

// Dalal-Triggs style descriptor on [0,255] intensities:
//  - centered [-1,0,1] gradients with replicate padding at the border,
//  - magnitude-weighted votes split linearly between the two nearest bins
//    (bin b centred at b * range / n_bins, wrapping around),
//  - L2 normalization per block: v / sqrt(|v|^2 + eps^2), eps = 1e-6,
//  - blocks concatenated row-major, cells row-major inside a block.
inline FeatureVector hog_extract(const ImageRecord& img, const HogConfig& cfg = {}) {
  if (img.channels != 1) throw ArgumentError("hog_extract expects a single-channel image");
  cfg.validate(img.height, img.width);

  const int h = img.height;
  const int w = img.width;
  const int cells_y = h / cfg.cell_size;
  const int cells_x = w / cfg.cell_size;
  const double range = cfg.signed_orientation ? 360.0 : 180.0;
  const double bin_width = range / cfg.n_bins;

  std::vector<double> hist(static_cast<std::size_t>(cells_y) * cells_x * cfg.n_bins, 0.0);
  auto px = [&](int y, int x) {
    return static_cast<double>(img.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1), 0));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = px(y, x + 1) - px(y, x - 1);
      const double gy = px(y + 1, x) - px(y - 1, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 360.0;
      if (!cfg.signed_orientation && angle >= 180.0) angle -= 180.0;
      const double pos = angle / bin_width;
      int b0 = static_cast<int>(std::floor(pos));
      const double frac = pos - b0;
      b0 %= cfg.n_bins;
      const int b1 = (b0 + 1) % cfg.n_bins;
      double* cell = &hist[(static_cast<std::size_t>(y / cfg.cell_size) * cells_x + x / cfg.cell_size) * cfg.n_bins];
      cell[b0] += mag * (1.0 - frac);
      cell[b1] += mag * frac;
    }
  }

  const int blocks_y = cfg.blocks_along(h);
  const int blocks_x = cfg.blocks_along(w);
  const std::size_t block_len = static_cast<std::size_t>(cfg.block_size) * cfg.block_size * cfg.n_bins;
  FeatureVector out;
  out.reserve(cfg.descriptor_size(h, w));
  constexpr double eps = 1e-6;
  for (int by = 0; by < blocks_y; ++by) {
    for (int bx = 0; bx < blocks_x; ++bx) {
      const std::size_t start = out.size();
      for (int cy = 0; cy < cfg.block_size; ++cy) {
        for (int cx = 0; cx < cfg.block_size; ++cx) {
          const int row = by * cfg.block_stride + cy;
          const int col = bx * cfg.block_stride + cx;
          const double* cell = &hist[(static_cast<std::size_t>(row) * cells_x + col) * cfg.n_bins];
          out.insert(out.end(), cell, cell + cfg.n_bins);
        }
      }
      double sq = 0.0;
      for (std::size_t i = start; i < start + block_len; ++i) sq += out[i] * out[i];
      const double norm = std::sqrt(sq + eps * eps);
      for (std::size_t i = start; i < start + block_len; ++i) out[i] /= norm;
    }
  }
  return out;
}

struct ScalerState {
  static constexpr double kStdFloor = 1e-12;
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dim() const { return mean.size(); }
};

// Per-column mean and population standard deviation.
inline ScalerState scaler_fit(const std::vector<FeatureVector>& rows) {
  if (rows.size() < 2) throw ArgumentError("scaler_fit needs at least two rows");
  const std::size_t d = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != d) throw ArgumentError("scaler_fit rows have inconsistent dimensions");
  }
  ScalerState s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (auto& m : s.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.std[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  }
  for (auto& v : s.std) v = std::max(std::sqrt(v / n), ScalerState::kStdFloor);
  return s;
}

inline FeatureVector scaler_apply(const ScalerState& state, const FeatureVector& v) {
  if (v.size() != state.dim()) {
    throw ArgumentError("scaler_apply: vector has dimension " + std::to_string(v.size()) + ", scaler expects " +
                        std::to_string(state.dim()));
  }
  FeatureVector out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = (v[j] - state.mean[j]) / state.std[j];
  return out;
}

inline void write_feature_matrix(std::ostream& out, const std::vector<FeatureVector>& rows, const HogConfig& cfg) {
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  out << "# dim=" << d << " cell_size=" << cfg.cell_size << " block_size=" << cfg.block_size
      << " block_stride=" << cfg.block_stride << " n_bins=" << cfg.n_bins
      << " signed=" << (cfg.signed_orientation ? 1 : 0) << " input_range=0-255\n";
  out.precision(17);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
    out << '\n';
  }
}

}  // namespace synthdetect
