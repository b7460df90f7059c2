#pragma once

#include <png.h>

#include <cstring>
#include <filesystem>
#include <string>

#include "synthdetect/error.hpp"
#include "synthdetect/image.hpp"

namespace synthdetect {

// Decodes an 8-bit PNG into an RGB or grayscale record. Palette images and
// 16-bit images are converted by libpng; alpha is dropped.
inline ImageRecord read_png(const std::filesystem::path& path, Label label = Label::REAL) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  ImageRecord rec;
  rec.height = static_cast<int>(image.height);
  rec.width = static_cast<int>(image.width);
  rec.channels = color ? 3 : 1;
  rec.pixels.resize(PNG_IMAGE_SIZE(image));
  rec.label = label;
  rec.path = path.generic_string();
  if (!png_image_finish_read(&image, nullptr, rec.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return rec;
}

inline void write_png(const std::filesystem::path& path, const ImageRecord& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG '" + path.string() + "': " + msg);
  }
}

}  // namespace synthdetect
