#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace itepred {

/// splitmix64 finalizer; mixes seed components into well-separated streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic seed derivation from a list of components. Used for
/// per-run / per-fold / per-replicate streams so that results do not
/// depend on scheduling order.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t part : parts) {
    h = splitmix64(h ^ splitmix64(part));
  }
  return h;
}

inline std::mt19937_64 make_engine(std::initializer_list<std::uint64_t> parts) {
  return std::mt19937_64(derive_seed(parts));
}

/// 53-bit uniform double in [0, 1). Implemented directly (rather than via
/// std::uniform_real_distribution) so the values are identical across
/// standard libraries; audited constants depend on this.
inline double canonical_u01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Standard normal draws via the Marsaglia polar method on canonical_u01;
/// portable across standard libraries for the same engine stream.
class NormalSampler {
 public:
  explicit NormalSampler(std::mt19937_64& engine) : engine_(engine) {}

  double operator()() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * canonical_u01(engine_) - 1.0;
      v = 2.0 * canonical_u01(engine_) - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * m;
    has_cached_ = true;
    return u * m;
  }

 private:
  std::mt19937_64& engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace itepred
