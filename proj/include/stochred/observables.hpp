#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "stochred/linalg.hpp"

namespace stochred {

namespace detail {

inline double clamp_variance(double v, double scale) {
  const double tol = 1e-12 * std::max(1.0, scale);
  if (v < -tol) {
    throw NumericalError("energy variance " + std::to_string(v) +
                         " is negative beyond tolerance");
  }
  return std::max(0.0, v);
}

}  // namespace detail

/// <H> in a pure state.
inline double energy(const StateVector& chi, const Operator& h) {
  return chi.expectation(h).real();
}

inline double energy(const DensityMatrix& rho, const Operator& h) {
  return rho.expectation(h);
}

/// V = <H^2> - <H>^2, clamped to zero inside a 1e-12 round-off band.
inline double variance(const StateVector& chi, const Operator& h) {
  const Vector hv = h.matrix() * chi.amplitudes();
  const double n2 = chi.amplitudes().squaredNorm();
  const double e = chi.amplitudes().dot(hv).real() / n2;
  const double e2 = hv.squaredNorm() / n2;
  return detail::clamp_variance(e2 - e * e, e2);
}

inline double variance(const DensityMatrix& rho, const Operator& h) {
  const Matrix& r = rho.matrix();
  const Matrix& hm = h.matrix();
  const Matrix rh = r * hm;
  const double e = rh.trace().real();
  const double e2 = detail::trace_product(rh, hm).real();
  return detail::clamp_variance(e2 - e * e, e2);
}

/// Variance from populations over eigenvalues.
inline double variance(const RealVector& populations, const RealVector& energies) {
  const double norm = populations.sum();
  const double e = populations.dot(energies) / norm;
  const double e2 = populations.dot(energies.cwiseAbs2()) / norm;
  return detail::clamp_variance(e2 - e * e, e2);
}

}  // namespace stochred
