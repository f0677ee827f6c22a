#pragma once

// Random test instances: Hermitian operators, pure and mixed states.

#include <complex>
#include <cstddef>
#include <random>
#include <vector>

#include "stochred/linalg.hpp"

namespace stochred {

inline Matrix random_complex_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = Complex(n(rng), n(rng));
  }
  return m;
}

/// GUE-like Hermitian matrix with unit-variance entries.
inline Operator random_hermitian(std::size_t dim, std::mt19937_64& rng) {
  const Matrix a = random_complex_matrix(dim, dim, rng);
  return Operator::hermitian(0.5 * (a + a.adjoint()));
}

inline StateVector random_pure_state(std::size_t dim, std::mt19937_64& rng) {
  return StateVector::normalized(random_complex_matrix(dim, 1, rng).col(0));
}

/// Full-rank mixed state A A^dagger / Tr.
inline DensityMatrix random_density(std::size_t dim, std::mt19937_64& rng) {
  const Matrix a = random_complex_matrix(dim, dim, rng);
  Matrix r = a * a.adjoint();
  r /= r.trace().real();
  r = 0.5 * (r + r.adjoint()).eval();
  return DensityMatrix(std::move(r), dim == 1 ? Purity::pure : Purity::mixed);
}

/// Random unitary from the QR decomposition of a Gaussian matrix.
inline Matrix random_unitary(std::size_t dim, std::mt19937_64& rng) {
  const Matrix a = random_complex_matrix(dim, dim, rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

}  // namespace stochred
