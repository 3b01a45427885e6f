#ifndef SYSRISK_RANDOM_HPP
#define SYSRISK_RANDOM_HPP

#include <cmath>
#include <cstdint>

namespace sysrisk {

/// splitmix64. Cheap to seed, so one stream per (seed, counter) is affordable
/// and results do not depend on how work is split across threads.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix(std::uint64_t x) { return SplitMix64(x).next(); }

/// Independent stream for counter `k` under `seed`.
inline SplitMix64 streamFor(std::uint64_t seed, std::uint64_t k) {
  return SplitMix64(mix(seed ^ mix(k + 0x632be59bd9b4e019ULL)));
}

/// Marsaglia polar normals on a counter-based stream.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t k) : rng_(streamFor(seed, k)) {}

  double next() {
    if (hasSpare_) {
      hasSpare_ = false;
      return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * rng_.uniform() - 1.0;
      v = 2.0 * rng_.uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    hasSpare_ = true;
    return u * scale;
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool hasSpare_ = false;
};

}  // namespace sysrisk

#endif  // SYSRISK_RANDOM_HPP
