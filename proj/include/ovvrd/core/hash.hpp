#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

namespace ovvrd {

// All synthetic randomness in the project is derived from splitmix64 so that
// results are bit-stable across platforms and standard library versions.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * kFnvPrime;
  return h;
}

inline std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  return fnv1a(h, s.data(), s.size());
}

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  unsigned char b[8];
  std::memcpy(b, &v, 8);
  return fnv1a(h, b, 8);
}

inline std::uint64_t fnv1a(std::uint64_t h, std::int64_t v) {
  return fnv1a(h, static_cast<std::uint64_t>(v));
}

inline std::uint64_t fnv1a(std::uint64_t h, double v) {
  unsigned char b[8];
  std::memcpy(b, &v, 8);
  return fnv1a(h, b, 8);
}

inline std::uint64_t fnv1a_span(std::uint64_t h, const double* v, std::size_t n) {
  return fnv1a(h, v, n * sizeof(double));
}

// Deterministic generator. Box-Muller is hand rolled because
// std::normal_distribution is implementation defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0xd1b54a32d192ed03ULL) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // integer in [0, n)
  std::size_t index(std::size_t n) {
    return n == 0 ? 0 : static_cast<std::size_t>(next_u64() % n);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::uint64_t state_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ovvrd
