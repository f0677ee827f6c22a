#pragma once

// Seedable Wiener increments. A stream is fully determined by (seed, dt);
// ensemble member i uses trajectory_seed(base, i), so any member can be
// regenerated without touching the others.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

namespace stochred {

/// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of ensemble member `index`; a pure function of its arguments.
inline constexpr std::uint64_t trajectory_seed(std::uint64_t base_seed,
                                               std::uint64_t index) {
  return mix64(mix64(base_seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Lazily generated Gaussian increments with variance dt.
class WienerStream {
 public:
  WienerStream(std::uint64_t seed, double dt)
      : engine_(seed), sqrt_dt_(std::sqrt(check_dt(dt))), dt_(dt) {}

  double next() { return sqrt_dt_ * normal_(engine_); }
  double dt() const { return dt_; }

 private:
  static double check_dt(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw std::invalid_argument("dt must be positive and finite");
    }
    return dt;
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double sqrt_dt_;
  double dt_;
};

struct NoisePath {
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<double> increments;

  std::size_t size() const { return increments.size(); }
  double operator[](std::size_t i) const { return increments[i]; }
};

inline NoisePath wiener_path(std::uint64_t seed, double dt, std::size_t n_steps) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  WienerStream stream(seed, dt);
  NoisePath p{seed, dt, {}};
  p.increments.reserve(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) p.increments.push_back(stream.next());
  return p;
}

/// Audit dump: header `step,dW`, 17 significant digits.
inline void write_noise_csv(std::ostream& os, const NoisePath& path) {
  os << "step,dW\n" << std::setprecision(17);
  for (std::size_t i = 0; i < path.size(); ++i) {
    os << i << ',' << path.increments[i] << '\n';
  }
}

}  // namespace stochred
