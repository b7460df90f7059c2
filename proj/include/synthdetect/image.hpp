#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "synthdetect/error.hpp"

namespace synthdetect {

enum class Label { FAKE, REAL };

inline std::string_view label_name(Label l) { return l == Label::FAKE ? "FAKE" : "REAL"; }

inline Label parse_label(std::string_view s) {
  if (s == "FAKE") return Label::FAKE;
  if (s == "REAL") return Label::REAL;
  throw ArgumentError("unknown label '" + std::string(s) + "'");
}

// Interleaved H x W x C raster of 8-bit channel values.
struct ImageRecord {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
  Label label = Label::REAL;
  std::string path;

  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const ImageRecord&) const = default;
};

inline ImageRecord make_image(int height, int width, int channels, Label label = Label::REAL,
                              std::string path = {}) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
    throw ArgumentError("invalid image geometry " + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels));
  }
  ImageRecord img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0);
  img.label = label;
  img.path = std::move(path);
  return img;
}

inline std::uint8_t clamp_to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

// ITU-R 601 luminosity. Single-channel input is returned unchanged.
inline ImageRecord to_grayscale(const ImageRecord& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ArgumentError("to_grayscale expects 1 or 3 channels");
  ImageRecord out = make_image(img.height, img.width, 1, img.label, img.path);
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img.pixels[3 * i];
    const double g = img.pixels[3 * i + 1];
    const double b = img.pixels[3 * i + 2];
    out.pixels[i] = clamp_to_byte(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return out;
}

namespace detail {

struct LinearTap {
  int lo;
  int hi;
  double frac;
};

// Half-pixel-center sample positions: src = (dst + 0.5) * in / out - 0.5,
// clamped to the valid range.
inline std::vector<LinearTap> bilinear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, in - 1);
    taps[d] = {lo, hi, s - lo};
  }
  return taps;
}

}  // namespace detail

inline ImageRecord resize_bilinear(const ImageRecord& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ArgumentError("resize target must be at least 1x1, got " + std::to_string(out_h) + "x" +
                        std::to_string(out_w));
  }
  if (out_h == img.height && out_w == img.width) return img;
  ImageRecord out = make_image(out_h, out_w, img.channels, img.label, img.path);
  const auto ty = detail::bilinear_taps(img.height, out_h);
  const auto tx = detail::bilinear_taps(img.width, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(ty[y].lo, tx[x].lo, c) * (1.0 - tx[x].frac) +
                           img.at(ty[y].lo, tx[x].hi, c) * tx[x].frac;
        const double bottom = img.at(ty[y].hi, tx[x].lo, c) * (1.0 - tx[x].frac) +
                              img.at(ty[y].hi, tx[x].hi, c) * tx[x].frac;
        out.at(y, x, c) = clamp_to_byte(top * (1.0 - ty[y].frac) + bottom * ty[y].frac);
      }
    }
  }
  return out;
}

inline ImageRecord crop(const ImageRecord& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > img.height || left + w > img.width) {
    throw DimensionError("crop rectangle out of bounds");
  }
  ImageRecord out = make_image(h, w, img.channels, img.label, img.path);
  for (int y = 0; y < h; ++y) {
    const auto* src = &img.pixels[(static_cast<std::size_t>(top + y) * img.width + left) * img.channels];
    std::copy(src, src + static_cast<std::size_t>(w) * img.channels,
              &out.pixels[static_cast<std::size_t>(y) * w * img.channels]);
  }
  return out;
}

inline ImageRecord hflip(const ImageRecord& img) {
  ImageRecord out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

}  // namespace synthdetect
