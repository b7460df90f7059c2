#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace synthdetect {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

// Counter-based random stream. The key is derived from
// (seed, purpose, epoch, index); draw k is a pure function of (key, k), so a
// stream can be replayed from any key without shared generator state.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t epoch = 0,
            std::uint64_t index = 0)
      : key_(derive(seed, purpose, epoch, index)) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    return detail::splitmix64(key_ ^ detail::splitmix64(counter_++));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased (rejection on the top band).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Inclusive integer range [lo, hi].
  long long uniform_int(long long lo, long long hi) {
    return lo + static_cast<long long>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; consumes two draws per call so the sequence stays aligned.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t derive(std::uint64_t seed, std::string_view purpose, std::uint64_t epoch,
                              std::uint64_t index) {
    std::uint64_t k = detail::splitmix64(seed);
    k = detail::splitmix64(k ^ detail::fnv1a(purpose));
    k = detail::splitmix64(k ^ detail::splitmix64(epoch + 0x5851F42D4C957F2DULL));
    k = detail::splitmix64(k ^ detail::splitmix64(index + 0x14057B7EF767814FULL));
    return k;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace synthdetect
