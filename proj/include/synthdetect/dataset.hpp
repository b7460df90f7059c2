#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/image.hpp"
#include "synthdetect/png_io.hpp"
#include "synthdetect/rng.hpp"

namespace synthdetect {

inline constexpr int kImageSide = 32;

struct SplitCounts {
  std::size_t train_fake = 0;
  std::size_t train_real = 0;
  std::size_t test_fake = 0;
  std::size_t test_real = 0;

  bool operator==(const SplitCounts&) const = default;
};

struct DatasetSplit {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> test;

  SplitCounts counts() const {
    SplitCounts c;
    for (const auto& r : train) (r.label == Label::FAKE ? c.train_fake : c.train_real)++;
    for (const auto& r : test) (r.label == Label::FAKE ? c.test_fake : c.test_real)++;
    return c;
  }
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_pngs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.generic_string() < b.generic_string(); });
  return files;
}

inline std::vector<ImageRecord> ingest_split(const std::filesystem::path& root, const std::string& split) {
  std::vector<ImageRecord> records;
  for (Label label : {Label::FAKE, Label::REAL}) {
    const auto dir = root / split / std::string(label_name(label));
    for (const auto& file : sorted_pngs(dir)) {
      ImageRecord rec = read_png(file, label);
      if (rec.height != kImageSide || rec.width != kImageSide) {
        throw DimensionError("image '" + file.string() + "' is " + std::to_string(rec.height) + "x" +
                             std::to_string(rec.width) + ", expected 32x32");
      }
      records.push_back(std::move(rec));
    }
  }
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  return records;
}

}  // namespace detail

// Reads root/{train,test}/{FAKE,REAL}/*.png. Records are ordered
// lexicographically by path within each split.
inline DatasetSplit ingest_cifake(const std::filesystem::path& root) {
  for (const char* split : {"train", "test"}) {
    for (const char* label : {"FAKE", "REAL"}) {
      const auto dir = root / split / label;
      if (!std::filesystem::is_directory(dir)) {
        throw StructuralError("dataset root is missing directory '" + (std::filesystem::path(split) / label).string() +
                              "' under " + root.string());
      }
    }
  }
  DatasetSplit ds;
  ds.train = detail::ingest_split(root, "train");
  ds.test = detail::ingest_split(root, "test");
  return ds;
}

// Samples n_per_class records of each label without replacement. The result
// keeps canonical (path) order.
inline std::vector<ImageRecord> stratified_subset(const std::vector<ImageRecord>& records,
                                                  std::size_t n_per_class, std::uint64_t seed,
                                                  std::string_view purpose = "subset") {
  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_label[records[i].label == Label::FAKE ? 0 : 1].push_back(i);
  }
  if (n_per_class > by_label[0].size() || n_per_class > by_label[1].size()) {
    throw CapacityError("requested " + std::to_string(n_per_class) + " per class but only " +
                        std::to_string(by_label[0].size()) + " FAKE and " + std::to_string(by_label[1].size()) +
                        " REAL are available");
  }
  std::vector<std::size_t> chosen;
  chosen.reserve(2 * n_per_class);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    auto& idx = by_label[cls];
    RngStream rng(seed, purpose, cls);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t j = i + rng.uniform_int(idx.size() - i);
      std::swap(idx[i], idx[j]);
      chosen.push_back(idx[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<ImageRecord> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(records[i]);
  return out;
}

inline DatasetSplit stratified_subset(const DatasetSplit& split, std::size_t train_per_class,
                                      std::size_t test_per_class, std::uint64_t seed) {
  DatasetSplit out;
  out.train = stratified_subset(split.train, train_per_class, seed, "subset.train");
  out.test = stratified_subset(split.test, test_per_class, seed, "subset.test");
  return out;
}

inline DatasetSplit stratified_subset(const DatasetSplit& split, std::size_t n_per_class, std::uint64_t seed) {
  return stratified_subset(split, n_per_class, n_per_class, seed);
}

// One line per record: path,label,split.
inline void write_manifest(const DatasetSplit& ds, std::ostream& out) {
  out << "path,label,split\n";
  for (const auto& r : ds.train) out << r.path << ',' << label_name(r.label) << ",train\n";
  for (const auto& r : ds.test) out << r.path << ',' << label_name(r.label) << ",test\n";
}

}  // namespace synthdetect
