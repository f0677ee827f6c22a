#pragma once

// Surface accretion model: Fock-space operators, the incoherent occupancy
// chain, and the coherent single-site case (a displaced oscillator).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochred/linalg.hpp"
#include "stochred/special_functions.hpp"

namespace stochred {

struct AccretionModel {
  unsigned n_sites = 1;
  double mass = 1.0;
  double sticking_rate = 0.0;
  double evaporation_rate = 0.0;
  Complex lambda{0.0, 0.0};

  void validate() const {
    if (n_sites < 1) throw std::invalid_argument("accretion: need at least one site");
    if (!(sticking_rate >= 0.0) || !(evaporation_rate >= 0.0)) {
      throw std::invalid_argument("accretion: rates must be nonnegative");
    }
  }

  /// Stationary occupation probability of one site.
  double fill_fraction() const {
    validate();
    if (std::isinf(evaporation_rate)) return 0.0;
    if (sticking_rate + evaporation_rate == 0.0) {
      throw std::invalid_argument("accretion: sticking and evaporation rates both zero");
    }
    if (std::isinf(sticking_rate)) return 1.0;
    return sticking_rate / (sticking_rate + evaporation_rate);
  }

  /// X = N s / (s + e), the mean number of accreted molecules.
  double mean_occupancy() const { return n_sites * fill_fraction(); }
};

/// Delta E = m sqrt(X).
inline double energy_fluctuation_accretion(const AccretionModel& m) {
  return m.mass * std::sqrt(m.mean_occupancy());
}

/// Single-mode operators on span{|0>, ..., |n_max>}.
struct FockTruncation {
  unsigned n_max = 0;

  explicit FockTruncation(unsigned nmax) : n_max(nmax) {
    detail::check_dim(static_cast<std::size_t>(nmax) + 1);
  }

  std::size_t dim() const { return static_cast<std::size_t>(n_max) + 1; }

  Matrix annihilation() const {
    const auto d = static_cast<Eigen::Index>(dim());
    Matrix a = Matrix::Zero(d, d);
    for (Eigen::Index n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
  }

  Matrix creation() const { return annihilation().adjoint(); }

  Matrix number() const {
    const auto d = static_cast<Eigen::Index>(dim());
    Matrix n = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) n(i, i) = static_cast<double>(i);
    return n;
  }

  /// max |[a, a^dagger] - 1| with the top row and column excluded.
  double commutator_defect() const {
    const Matrix a = annihilation();
    const Matrix c = a * a.adjoint() - a.adjoint() * a;
    const auto d = static_cast<Eigen::Index>(dim()) - 1;
    if (d <= 0) return 0.0;
    return (c.topLeftCorner(d, d) - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  }
};

/// Operator `op` acting on mode `mode` of `n_modes` identical truncated modes.
inline Matrix embed_mode(const Matrix& op, std::size_t mode, std::size_t n_modes) {
  const auto d = op.rows();
  Matrix out = Matrix::Identity(1, 1);
  for (std::size_t k = 0; k < n_modes; ++k) {
    out = kron(out, k == mode ? op : Matrix(Matrix::Identity(d, d)));
  }
  return out;
}

struct AccretionOperators {
  Matrix delta_h;       // sum_jk A_jk a_j^dagger b_k + h.c.
  Matrix total_number;  // sum_j a_j^dagger a_j + sum_k b_k^dagger b_k
};

/// Site-bath coupling and total number operator for N site modes and M bath
/// modes, each truncated at n_max. `coupling` is N x M.
inline AccretionOperators accretion_operators(const Matrix& coupling, unsigned n_max) {
  const auto n_sites = static_cast<std::size_t>(coupling.rows());
  const auto n_bath = static_cast<std::size_t>(coupling.cols());
  const std::size_t modes = n_sites + n_bath;
  const FockTruncation f(n_max);
  const double dim = std::pow(static_cast<double>(f.dim()), static_cast<double>(modes));
  if (dim > static_cast<double>(kMaxDimension)) {
    throw std::invalid_argument("accretion_operators: Fock space too large");
  }
  const Matrix a = f.annihilation();
  const Matrix num = f.number();
  std::vector<Matrix> ann;
  for (std::size_t k = 0; k < modes; ++k) ann.push_back(embed_mode(a, k, modes));
  AccretionOperators out;
  const auto d = ann.front().rows();
  out.delta_h = Matrix::Zero(d, d);
  out.total_number = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < modes; ++k) out.total_number += embed_mode(num, k, modes);
  for (std::size_t j = 0; j < n_sites; ++j) {
    for (std::size_t k = 0; k < n_bath; ++k) {
      const Matrix term = coupling(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) *
                          ann[j].adjoint() * ann[n_sites + k];
      out.delta_h += term + term.adjoint();
    }
  }
  return out;
}

/// Coherent single-site case: H = m a^dagger a + lambda a^dagger + lambda* a
/// = m c^dagger c + const with c = a - z, z = -lambda / m.
struct DisplacedOscillator {
  Complex z{0.0, 0.0};

  static DisplacedOscillator from_lambda(Complex lambda, double mass) {
    if (!(mass > 0.0)) throw std::invalid_argument("displaced oscillator: mass must be > 0");
    return {-lambda / mass};
  }

  static Matrix hamiltonian(double mass, Complex lambda, unsigned n_max) {
    const FockTruncation f(n_max);
    const Matrix a = f.annihilation();
    return mass * f.number() + lambda * a.adjoint() + std::conj(lambda) * a;
  }

  /// ||a|0_c> - z|0_c>|| for the truncated c-vacuum.
  double coherent_defect(unsigned n_max) const;
};

namespace detail {

/// exp(z a^dagger - z* a) |n> on the truncated space, by a Taylor series
/// of the tridiagonal generator with enough substeps to keep terms small.
inline Vector displace_number_state(unsigned n, Complex z, unsigned n_max) {
  const auto d = static_cast<Eigen::Index>(n_max) + 1;
  Vector v = Vector::Zero(d);
  v(n) = 1.0;
  const double gnorm = 2.0 * std::abs(z) * std::sqrt(static_cast<double>(n_max) + 1.0);
  const auto sub = static_cast<unsigned>(std::max(1.0, std::ceil(gnorm / 0.5)));
  const Complex zs = z / static_cast<double>(sub);
  Vector term(d), next(d);
  for (unsigned s = 0; s < sub; ++s) {
    Vector acc = v;
    term = v;
    for (unsigned p = 1; p < 200; ++p) {
      for (Eigen::Index m = 0; m < d; ++m) {
        Complex x = 0.0;
        if (m > 0) x += zs * std::sqrt(static_cast<double>(m)) * term(m - 1);
        if (m + 1 < d) x -= std::conj(zs) * std::sqrt(static_cast<double>(m + 1)) * term(m + 1);
        next(m) = x / static_cast<double>(p);
      }
      term.swap(next);
      acc += term;
      if (term.norm() < 1e-18 * acc.norm()) break;
    }
    v = acc;
  }
  return v;
}

}  // namespace detail

inline double DisplacedOscillator::coherent_defect(unsigned n_max) const {
  const Vector vac = detail::displace_number_state(0, z, n_max);
  const Matrix a = FockTruncation(n_max).annihilation();
  return (a * vac - z * vac).norm();
}

/// Probability mass the truncation must not exceed in its top rows.
inline constexpr double kLeakageTolerance = 1e-10;
/// Allowed disagreement between the matrix route and the closed form.
inline constexpr double kPnkCrossCheckTolerance = 1e-9;

/// Smallest truncation accepted for level n at displacement |z|.
inline unsigned pnk_min_truncation(unsigned n, double abs_z) {
  return n + static_cast<unsigned>(
                 std::ceil(10.0 * std::max(1.0, abs_z * std::sqrt(static_cast<double>(n)))));
}

/// Smallest truncation (in steps of 10 above the minimum) whose top rows
/// hold less than the leakage tolerance.
inline unsigned pnk_truncation(unsigned n, Complex z) {
  unsigned n_max = pnk_min_truncation(n, std::abs(z));
  for (int i = 0; i < 100; ++i, n_max += 10) {
    const Vector v = detail::displace_number_state(n, z, n_max);
    if (v.tail(std::min<Eigen::Index>(3, v.size())).squaredNorm() <= kLeakageTolerance) {
      return n_max;
    }
  }
  throw NumericalError("pnk_truncation: no truncation below " + std::to_string(n_max));
}

/// |<m|D(z)|n>|^2 in closed form (associated Laguerre, log-space factorials).
inline double pnk_laguerre(unsigned n, int k, Complex z) {
  const long long m = static_cast<long long>(n) - k;
  if (m < 0) return 0.0;
  const double x = std::norm(z);
  const auto lo = static_cast<unsigned>(std::min<long long>(m, n));
  const auto hi = static_cast<unsigned>(std::max<long long>(m, n));
  const unsigned gap = hi - lo;
  if (x == 0.0) return gap == 0 ? 1.0 : 0.0;
  const double l = laguerre(lo, static_cast<double>(gap), x);
  const double logp = log_factorial(lo) - log_factorial(hi) + gap * std::log(x) - x;
  return std::exp(logp) * l * l;
}

/// Probability of n - k molecules in eigenstate n of the displaced
/// oscillator, from the truncated displacement operator; cross-checked
/// against the closed form.
inline double pnk_exact(unsigned n, int k, Complex z, unsigned n_max) {
  if (n_max < pnk_min_truncation(n, std::abs(z))) {
    throw std::invalid_argument("pnk_exact: n_max " + std::to_string(n_max) +
                                " below required " +
                                std::to_string(pnk_min_truncation(n, std::abs(z))));
  }
  const Vector v = detail::displace_number_state(n, z, n_max);
  const auto d = v.size();
  const Eigen::Index top = std::min<Eigen::Index>(3, d);
  const double leak = v.tail(top).squaredNorm();
  if (leak > kLeakageTolerance) {
    throw NumericalError("pnk_exact: truncation leakage " + std::to_string(leak) +
                         " exceeds 1e-10; raise n_max");
  }
  const long long m = static_cast<long long>(n) - k;
  const double p = (m < 0 || m >= d) ? 0.0 : std::norm(v(static_cast<Eigen::Index>(m)));
  const double q = pnk_laguerre(n, k, z);
  if (std::abs(p - q) > kPnkCrossCheckTolerance) {
    throw NumericalError("pnk_exact: matrix route and closed form disagree by " +
                         std::to_string(std::abs(p - q)));
  }
  return p;
}

struct PnkDistribution {
  int k_min = 0;              // k of probs[0]
  std::vector<double> probs;  // P(n|k) for k = k_min .. n
  double leakage = 0.0;

  double sum() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
  }
  double at(int k) const {
    const long long i = static_cast<long long>(k) - k_min;
    return (i < 0 || i >= static_cast<long long>(probs.size())) ? 0.0
                                                                : probs[static_cast<std::size_t>(i)];
  }
};

/// P(n|k) for every k representable in the truncation.
inline PnkDistribution pnk_exact_distribution(unsigned n, Complex z, unsigned n_max) {
  if (n_max < pnk_min_truncation(n, std::abs(z))) {
    throw std::invalid_argument("pnk_exact_distribution: n_max too small");
  }
  const Vector v = detail::displace_number_state(n, z, n_max);
  PnkDistribution out;
  out.leakage = v.tail(std::min<Eigen::Index>(3, v.size())).squaredNorm();
  if (out.leakage > kLeakageTolerance) {
    throw NumericalError("pnk_exact_distribution: truncation leakage exceeds 1e-10");
  }
  // k = n - m, m = n_max .. 0.
  out.k_min = static_cast<int>(n) - static_cast<int>(n_max);
  for (Eigen::Index m = v.size() - 1; m >= 0; --m) {
    const double p = std::norm(v(m));
    const int k = static_cast<int>(n) - static_cast<int>(m);
    if (std::abs(p - pnk_laguerre(n, k, z)) > kPnkCrossCheckTolerance) {
      throw NumericalError("pnk_exact_distribution: closed form disagrees at k=" +
                           std::to_string(k));
    }
    out.probs.push_back(p);
  }
  return out;
}

/// Large-n, small-|z| approximation J_|k|(2 sqrt(n) |z|)^2.
inline double pnk_bessel(unsigned n, int k, Complex z) {
  const double w = 2.0 * std::sqrt(static_cast<double>(n)) * std::abs(z);
  const double j = bessel_j(k < 0 ? -k : k, w);
  return j * j;
}

enum class Band { inside, edge, tail };

struct Envelope {
  double value = 0.0;
  Band band = Band::tail;
};

/// Relative width of the band-edge region |k^2 - 4n|z|^2| <= tol * 4n|z|^2.
inline constexpr double kBandEdgeTolerance = 1e-12;

/// Averaged envelope (1/pi) (4n|z|^2 - k^2)^(-1/2); zero outside the band.
inline Envelope pnk_envelope(unsigned n, int k, Complex z) {
  const double w2 = 4.0 * static_cast<double>(n) * std::norm(z);
  const double k2 = static_cast<double>(k) * static_cast<double>(k);
  const double gap = w2 - k2;
  if (std::abs(gap) <= kBandEdgeTolerance * std::max(w2, 1e-300)) {
    return {std::numeric_limits<double>::infinity(), Band::edge};
  }
  if (gap < 0.0) return {0.0, Band::tail};
  return {1.0 / (std::numbers::pi * std::sqrt(gap)), Band::inside};
}

/// +-2 sqrt(n) |z|.
inline double band_edge(unsigned n, Complex z) {
  return 2.0 * std::sqrt(static_cast<double>(n)) * std::abs(z);
}

struct OccupancyResult {
  std::vector<double> sample_times;
  std::vector<unsigned> samples;     // total count at each sample time
  std::vector<double> histogram;     // counts of n = 0 .. N
  double mean = 0.0;
  double variance = 0.0;
  double lag1_autocorrelation = 0.0;
  bool short_horizon = false;
};

/// Correlation times between recorded samples.
inline constexpr double kSampleSpacing = 10.0;
/// Horizon below this many sample spacings is flagged.
inline constexpr double kMinSamples = 100.0;

/// Exact (Gillespie) simulation of N independent two-state sites: each
/// empty site fills at rate s and each occupied one empties at rate e. The
/// total count is sampled every 10/(s+e) after a burn-in of the same length.
inline OccupancyResult occupancy_simulate(const AccretionModel& model, double horizon,
                                          std::uint64_t seed) {
  model.validate();
  if (std::abs(model.lambda) != 0.0) {
    throw std::invalid_argument("occupancy_simulate: coherent model (lambda != 0)");
  }
  if (!(horizon > 0.0)) throw std::invalid_argument("occupancy_simulate: horizon must be > 0");
  const unsigned n_sites = model.n_sites;
  OccupancyResult out;
  out.histogram.assign(n_sites + 1, 0.0);
  const double s = model.sticking_rate, e = model.evaporation_rate;
  if (std::isinf(e) || s == 0.0 || std::isinf(s)) {
    // Absorbing or instantaneous: the chain sits at one boundary.
    const unsigned n = (std::isinf(s) && !std::isinf(e)) ? n_sites : 0;
    const std::size_t count = static_cast<std::size_t>(std::max(1.0, std::floor(horizon)));
    for (std::size_t i = 0; i < count; ++i) {
      out.sample_times.push_back(static_cast<double>(i));
      out.samples.push_back(n);
    }
    out.histogram[n] = static_cast<double>(count);
    out.mean = n;
    return out;
  }
  const double spacing = kSampleSpacing / (s + e);
  const auto n_samples = static_cast<std::size_t>(std::floor(horizon / spacing));
  if (static_cast<double>(n_samples) < kMinSamples) {
    out.short_horizon = true;
    std::clog << "warning: occupancy horizon spans only " << n_samples
              << " correlation-decorrelated samples\n";
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  unsigned n = static_cast<unsigned>(std::lround(model.mean_occupancy()));
  double t = 0.0;
  double next_sample = spacing;  // first sample after burn-in
  const double ns = static_cast<double>(n_sites);
  while (out.samples.size() < n_samples) {
    const double birth = (ns - n) * s;
    const double death = static_cast<double>(n) * e;
    const double total = birth + death;
    const double wait = -std::log1p(-uni(rng)) / total;
    while (t + wait >= next_sample && out.samples.size() < n_samples) {
      out.sample_times.push_back(next_sample - spacing);
      out.samples.push_back(n);
      next_sample += spacing;
    }
    t += wait;
    if (uni(rng) * total < birth) {
      ++n;
    } else {
      --n;
    }
  }
  double sum = 0.0, sum2 = 0.0;
  for (unsigned c : out.samples) {
    out.histogram[c] += 1.0;
    sum += c;
    sum2 += static_cast<double>(c) * c;
  }
  const double m = static_cast<double>(out.samples.size());
  if (m > 0) {
    out.mean = sum / m;
    out.variance = m > 1 ? (sum2 - m * out.mean * out.mean) / (m - 1.0) : 0.0;
  }
  if (out.samples.size() > 2 && out.variance > 0.0) {
    double c1 = 0.0;
    for (std::size_t i = 0; i + 1 < out.samples.size(); ++i) {
      c1 += (out.samples[i] - out.mean) * (out.samples[i + 1] - out.mean);
    }
    out.lag1_autocorrelation = c1 / ((m - 1.0) * out.variance);
  }
  return out;
}

/// CSV `k,p_exact,p_bessel,envelope` for k in [k_lo, k_hi].
inline void write_coherent_csv(std::ostream& os, unsigned n, Complex z, unsigned n_max,
                               int k_lo, int k_hi) {
  const PnkDistribution dist = pnk_exact_distribution(n, z, n_max);
  os << "k,p_exact,p_bessel,envelope\n" << std::setprecision(17);
  for (int k = k_lo; k <= k_hi; ++k) {
    os << k << ',' << dist.at(k) << ',' << pnk_bessel(n, k, z) << ','
       << pnk_envelope(n, k, z).value << '\n';
  }
}

}  // namespace stochred
