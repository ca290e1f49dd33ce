#pragma once
// Deterministic random source. Every draw in the library flows through Rng,
// and the mapping (seed, stream) -> sequence is fixed by this file alone, so
// identical runs are bit-identical on any platform. Distinct streams give
// subsystems (data, bank, minibatch, init, ...) independent sequences that
// never consume from each other.

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace mvqr {

namespace rng_detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace rng_detail

// Well-known stream ids. Using the same id twice with the same seed yields
// the same sequence; that is sometimes wanted (replaying a dataset) and
// sometimes not (then bump the stream).
namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kBank = 2;
inline constexpr std::uint64_t kMinibatch = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kEvalBank = 5;
inline constexpr std::uint64_t kCalibration = 6;
inline constexpr std::uint64_t kSample = 7;
inline constexpr std::uint64_t kTest = 8;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (0x632be59bd9b4e019ull * (stream + 1));
    std::uint64_t st = rng_detail::splitmix64(s);
    engine_.seed(st);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; hand-rolled because the distribution
  // objects in <random> are implementation-defined.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= lim) v = engine_();
    return v % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mvqr
