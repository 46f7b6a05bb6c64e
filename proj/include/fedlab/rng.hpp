// fedlab/rng.hpp - deterministic random streams.
//
// All randomness in the library flows through Rng. libstdc++ distribution
// objects are not pinned by the standard, so normal/gamma draws are done
// explicitly (Box-Muller, Marsaglia-Tsang); results are reproducible for a
// given seed on any platform with IEEE doubles.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fedlab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift; bias is negligible for n << 2^64
  // and irrelevant here (simulation, not cryptography).
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
  }

  // Box-Muller, one spare cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Marsaglia-Tsang; alpha < 1 handled with the boost trick.
  double gamma(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be > 0");
    if (alpha < 1.0) {
      const double u = uniform();
      return gamma(alpha + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet over k bins.
  std::vector<double> dirichlet(double alpha, std::size_t k) {
    std::vector<double> draw(k);
    double sum = 0.0;
    for (auto& d : draw) sum += (d = gamma(alpha));
    if (sum <= 0.0) sum = 1.0;
    for (auto& d : draw) d /= sum;
    return draw;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int(i)]);
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Named substream derivation: independent streams for (seed, purpose, a, b)
// so e.g. client shuffles never consume from the attack's draw sequence.
inline Rng derive_rng(std::uint64_t seed, std::string_view purpose,
                      std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (char ch : purpose) {
    h ^= std::uint64_t(static_cast<unsigned char>(ch));
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = h;
  std::uint64_t mixed = splitmix64(s) ^ (a * 0x9e3779b97f4a7c15ULL);
  mixed = splitmix64(mixed) ^ (b * 0xd1b54a32d192ed03ULL);
  return Rng(splitmix64(mixed));
}

}  // namespace fedlab
