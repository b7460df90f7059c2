#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/models.hpp"
#include "synthdetect/tensor.hpp"

namespace synthdetect {

// Layout (all integers u32 little-endian):
//   "SYND1" version meta_len meta[meta_len] n_blocks
//   per block: name_len name ndim dims[ndim] float32le[prod(dims)]
// meta is "key=value\n" lines in key order. Nothing may follow the last block.
inline constexpr std::string_view kCheckpointMagic = "SYND1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamBlock {
  std::string name;
  Shape shape;
  std::vector<float> data;
  bool operator==(const ParamBlock&) const = default;
};

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<ParamBlock> blocks;
  bool operator==(const Checkpoint&) const = default;

  const ParamBlock* find(std::string_view name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw ArgumentError(std::string("checkpoint: ") + what + " too large");
  return static_cast<std::uint32_t>(v);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) + ": expected " +
                        std::to_string(n) + " bytes of " + what + ", " + std::to_string(remaining()) + " left");
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string meta;
  for (const auto& [k, v] : ck.metadata) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ArgumentError("checkpoint metadata entry '" + k + "' contains a reserved character");
    }
    meta += k + "=" + v + "\n";
  }
  std::string out(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, detail::checked_u32(meta.size(), "metadata"));
  out += meta;
  detail::put_u32(out, detail::checked_u32(ck.blocks.size(), "block count"));
  for (const auto& b : ck.blocks) {
    if (shape_numel(b.shape) != b.data.size()) {
      throw ArgumentError("checkpoint block '" + b.name + "' shape " + shape_str(b.shape) + " does not match " +
                          std::to_string(b.data.size()) + " values");
    }
    detail::put_u32(out, detail::checked_u32(b.name.size(), "block name"));
    out += b.name;
    detail::put_u32(out, detail::checked_u32(b.shape.size(), "rank"));
    for (auto d : b.shape) detail::put_u32(out, detail::checked_u32(d, "dimension"));
    for (float f : b.data) detail::put_f32(out, f);
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("checkpoint: bad magic at byte offset 0 (expected SYND1)");
  }
  r.take(kCheckpointMagic.size(), "magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at byte offset " +
                      std::to_string(version_at));
  }
  Checkpoint ck;
  const std::uint32_t meta_len = r.u32("metadata length");
  const std::size_t meta_at = r.offset();
  const std::string_view meta = r.take(meta_len, "metadata");
  std::size_t line_start = 0;
  while (line_start < meta.size()) {
    const auto nl = meta.find('\n', line_start);
    if (nl == std::string_view::npos) {
      throw FormatError("checkpoint: unterminated metadata line at byte offset " + std::to_string(meta_at + line_start));
    }
    const auto line = meta.substr(line_start, nl - line_start);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw FormatError("checkpoint: malformed metadata line at byte offset " + std::to_string(meta_at + line_start));
    }
    if (!ck.metadata.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1))).second) {
      throw FormatError("checkpoint: duplicate metadata key at byte offset " + std::to_string(meta_at + line_start));
    }
    line_start = nl + 1;
  }
  const std::uint32_t n_blocks = r.u32("block count");
  for (std::uint32_t k = 0; k < n_blocks; ++k) {
    ParamBlock b;
    const std::uint32_t name_len = r.u32("block name length");
    b.name = std::string(r.take(name_len, "block name"));
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("block rank");
    if (rank > 8) throw FormatError("checkpoint: implausible rank " + std::to_string(rank) + " at byte offset " + std::to_string(rank_at));
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32("block dimension");
      b.shape.push_back(dim);
      numel *= dim;
      if (numel > r.remaining()) {
        throw FormatError("checkpoint: block '" + b.name + "' declares more values than the file holds (byte offset " +
                          std::to_string(rank_at) + ")");
      }
    }
    b.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) {
      const std::uint32_t bits = r.u32("block data");
      std::memcpy(&b.data[i], &bits, 4);
    }
    ck.blocks.push_back(std::move(b));
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes at byte offset " +
                      std::to_string(r.offset()));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file_bytes(path)); }

template <class T>
std::vector<ParamBlock> model_blocks(const Model<T>& model) {
  std::vector<ParamBlock> out;
  for (const auto& nt : model.state()) {
    ParamBlock b{nt.name, nt.tensor.shape(), {}};
    const auto d = nt.tensor.data();
    b.data.assign(d.begin(), d.end());
    out.push_back(std::move(b));
  }
  return out;
}

// Copies stored values into the model's tensors; names and shapes must agree
// one-to-one.
template <class T>
void load_model_blocks(Model<T>& model, const Checkpoint& ck) {
  auto state = model.state();
  if (ck.blocks.size() != state.size()) {
    throw ContractError("checkpoint holds " + std::to_string(ck.blocks.size()) + " tensors, model has " +
                        std::to_string(state.size()));
  }
  for (auto& nt : state) {
    const ParamBlock* b = ck.find(nt.name);
    if (!b) throw ContractError("checkpoint has no tensor '" + nt.name + "' required by the model");
    if (b->shape != nt.tensor.shape()) {
      throw ContractError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(b->shape) + ", model expects " +
                          shape_str(nt.tensor.shape()));
    }
    auto dst = nt.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(b->data[i]);
  }
}

}  // namespace synthdetect
