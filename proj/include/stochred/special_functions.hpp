#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace stochred {

/// Generalized Laguerre polynomial L_n^{(alpha)}(x) by the three-term
/// recurrence in n.
inline double laguerre(unsigned n, double alpha, double x) {
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 1.0 + alpha - x;
  for (unsigned k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double next = ((2.0 * kk + 1.0 + alpha - x) * cur - (kk + alpha) * prev) / (kk + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// J_0(w) ... J_{kmax}(w) for w >= 0 by Miller's downward recurrence,
/// normalized with J_0 + 2 sum_k J_{2k} = 1.
inline std::vector<double> bessel_j_sequence(unsigned kmax, double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("bessel: w must be >= 0");
  std::vector<double> out(kmax + 1, 0.0);
  if (w == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const double top = std::max(static_cast<double>(kmax), w);
  auto start = static_cast<unsigned>(top + 30.0 + std::sqrt(60.0 * top));
  start += start % 2;  // even start keeps the normalization sum aligned
  std::vector<double> j(start + 2, 0.0);
  j[start + 1] = 0.0;
  j[start] = 1e-300;
  for (unsigned k = start; k >= 1; --k) {
    j[k - 1] = 2.0 * static_cast<double>(k) / w * j[k] - j[k + 1];
    if (std::abs(j[k - 1]) > 1e250) {
      for (unsigned i = k - 1; i <= start + 1; ++i) j[i] *= 1e-250;
    }
  }
  double norm = j[0];
  for (unsigned k = 2; k <= start; k += 2) norm += 2.0 * j[k];
  for (unsigned k = 0; k <= kmax; ++k) out[k] = k <= start ? j[k] / norm : 0.0;
  return out;
}

/// J_k(w) for integer k (negative orders via J_{-k} = (-1)^k J_k).
inline double bessel_j(int k, double w) {
  const unsigned ak = static_cast<unsigned>(k < 0 ? -k : k);
  const double v = bessel_j_sequence(ak, std::abs(w))[ak];
  double s = (k < 0 && ak % 2 == 1) ? -1.0 : 1.0;
  if (w < 0.0 && ak % 2 == 1) s = -s;
  return s * v;
}

inline double log_factorial(double n) { return std::lgamma(n + 1.0); }

inline double poisson_pmf(unsigned k, double mean) {
  if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
  const double kk = static_cast<double>(k);
  return std::exp(kk * std::log(mean) - mean - log_factorial(kk));
}

inline double binomial_pmf(unsigned k, unsigned n, double p) {
  if (k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  return std::exp(log_factorial(nn) - log_factorial(kk) - log_factorial(nn - kk) +
                  kk * std::log(p) + (nn - kk) * std::log1p(-p));
}

}  // namespace stochred
