#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lawn {

/// Seeded 64-bit generator with portable draw helpers. std:: distributions
/// are not bit-stable across standard libraries, so every draw used for
/// reproducible output goes through this class instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  /// Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi <= lo) return lo;
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  bool coin() { return uniform() < 0.5; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

namespace detail {
inline uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}
inline uint64_t fnv1a_u64(uint64_t h, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(h, b, 8);
}
}  // namespace detail

/// Order-sensitive seed derivation (FNV-1a over the argument bytes).
inline uint64_t seed_hash(uint64_t a, uint64_t b) {
  uint64_t h = detail::fnv1a_u64(1469598103934665603ull, a);
  return detail::fnv1a_u64(h, b);
}

inline uint64_t seed_hash(uint64_t a, std::string_view s, uint64_t b) {
  uint64_t h = detail::fnv1a_u64(1469598103934665603ull, a);
  h = detail::fnv1a(h, s.data(), s.size());
  return detail::fnv1a_u64(h, b);
}

inline uint64_t seed_hash(uint64_t a, std::string_view s) {
  uint64_t h = detail::fnv1a_u64(1469598103934665603ull, a);
  return detail::fnv1a(h, s.data(), s.size());
}

}  // namespace lawn
