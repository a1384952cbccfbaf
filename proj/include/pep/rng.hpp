#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

#include "pep/types.hpp"

namespace pep {

// SplitMix64 finalizer. Used both as the stream-derivation hash and to
// expand a 64-bit key into generator state.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t key_combine(std::uint64_t key, std::uint64_t part) {
  return mix64(key ^ (part + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2)));
}

constexpr std::uint64_t tag_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-free splittable stream: a key is derived by hashing
/// (seed, tag, ids...); independent keys give independent streams.
/// The generator itself is xoshiro256++.
class Rng {
 public:
  explicit Rng(std::uint64_t key) {
    std::uint64_t sm = key;
    for (auto& s : state_) {
      sm += 0x9e3779b97f4a7c15ULL;
      s = mix64(sm);
    }
    // avoid the all-zero state
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t key = mix64(seed);
    for (std::uint64_t p : parts) key = key_combine(key, p);
    return Rng(key);
  }

  Rng split(std::uint64_t id) const {
    std::uint64_t key = state_[0];
    key = key_combine(key, state_[1]);
    key = key_combine(key, state_[2]);
    key = key_combine(key, state_[3]);
    return Rng(key_combine(key, id));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1).
  double next_double_pos() {
    double u;
    do {
      u = next_double();
    } while (u <= 0.0);
    return u;
  }

  /// Uniform integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via the polar method; second value cached.
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    have_cached_ = true;
    return u * f;
  }

  void fill_normal(Eigen::Ref<Matrix> m) {
    double* d = m.data();
    const Eigen::Index sz = m.size();
    for (Eigen::Index i = 0; i < sz; ++i) d[i] = next_normal();
  }

  /// Gamma(shape, scale 1), Marsaglia-Tsang; shape boost for shape < 1.
  double next_gamma(double shape) {
    if (!(shape > 0.0)) throw DomainError("gamma shape must be positive");
    if (shape < 1.0) {
      const double u = next_double_pos();
      return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_double_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double next_chisq(double dof) { return 2.0 * next_gamma(0.5 * dof); }

  /// Inverse-Gamma(shape a, rate b): density b^a/Gamma(a) x^{-a-1} e^{-b/x}.
  double next_inv_gamma(double a, double b) {
    if (!(b > 0.0)) throw DomainError("inverse-gamma rate must be positive");
    return b / next_gamma(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace pep
