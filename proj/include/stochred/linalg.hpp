#pragma once

// Small dense complex linear algebra: operators, pure and mixed states,
// tensor products, partial traces and Hermitian eigendecomposition.
// Everything is in dimensionless simulation units (hbar = 1).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <istream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stochred {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

/// Default upper bound on any operator dimension.
inline constexpr std::size_t kMaxDimension = 4096;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const Matrix& m) {
  return max_abs(m - m.adjoint());
}

inline bool is_hermitian(const Matrix& m, double rel_tol = 1e-12) {
  const double scale = max_abs(m);
  return hermiticity_defect(m) <= rel_tol * (scale > 0.0 ? scale : 1.0);
}

inline Complex trace_product(const Matrix& a, const Matrix& b) {
  // Tr(AB) without forming the product.
  return (a.transpose().cwiseProduct(b)).sum();
}

inline void check_dim(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("dimension must be positive");
  if (dim > kMaxDimension) {
    throw std::invalid_argument("dimension " + std::to_string(dim) +
                                " exceeds maximum " +
                                std::to_string(kMaxDimension));
  }
}

}  // namespace detail

/// Square complex matrix. Operators constructed with `hermitian()` are
/// checked on construction and may be used as Hamiltonians.
class Operator {
 public:
  Operator() = default;

  explicit Operator(Matrix entries, bool require_hermitian = false)
      : m_(std::move(entries)) {
    if (m_.rows() != m_.cols()) {
      throw std::invalid_argument("operator entries must be square");
    }
    detail::check_dim(static_cast<std::size_t>(m_.rows()));
    hermitian_ = detail::is_hermitian(m_);
    if (require_hermitian && !hermitian_) {
      throw std::invalid_argument("operator is not Hermitian (defect " +
                                  std::to_string(detail::hermiticity_defect(m_)) +
                                  ")");
    }
  }

  static Operator hermitian(Matrix entries) {
    return Operator(std::move(entries), true);
  }

  static Operator identity(std::size_t dim) {
    return Operator(Matrix::Identity(static_cast<Eigen::Index>(dim),
                                     static_cast<Eigen::Index>(dim)));
  }

  static Operator diagonal(const std::vector<double>& values) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(values.size()),
                            static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = values[i];
    }
    return Operator(std::move(m), true);
  }

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  bool is_hermitian() const { return hermitian_; }
  bool is_diagonal(double tol = 0.0) const {
    return detail::max_abs(m_ - Matrix(m_.diagonal().asDiagonal())) <= tol;
  }

  Complex operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix m_;
  bool hermitian_ = false;
};

inline Operator operator+(const Operator& a, const Operator& b) {
  return Operator(a.matrix() + b.matrix());
}
inline Operator operator*(double s, const Operator& a) {
  return Operator(s * a.matrix());
}

/// Unit-norm amplitude vector.
class StateVector {
 public:
  static constexpr double kNormTolerance = 1e-10;

  StateVector() = default;

  /// Checks |<chi|chi> - 1| against `norm_tol`.
  explicit StateVector(Vector amplitudes, double norm_tol = kNormTolerance)
      : v_(std::move(amplitudes)) {
    detail::check_dim(static_cast<std::size_t>(v_.size()));
    const double n2 = v_.squaredNorm();
    if (!(std::abs(n2 - 1.0) <= norm_tol)) {
      throw std::invalid_argument("state vector norm^2 = " + std::to_string(n2) +
                                  " is not 1");
    }
  }

  /// Rescales to unit norm; rejects the zero vector.
  static StateVector normalized(Vector amplitudes) {
    const double n = amplitudes.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::invalid_argument("cannot normalize a zero or non-finite vector");
    }
    return StateVector(amplitudes / n);
  }

  /// Real non-negative weights w_i become amplitudes sqrt(w_i).
  static StateVector from_weights(const std::vector<double>& weights) {
    Vector v(static_cast<Eigen::Index>(weights.size()));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] < 0.0) throw std::invalid_argument("negative weight");
      v(static_cast<Eigen::Index>(i)) = std::sqrt(weights[i]);
    }
    return normalized(std::move(v));
  }

  static StateVector basis(std::size_t dim, std::size_t index) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return StateVector(std::move(v));
  }

  std::size_t dim() const { return static_cast<std::size_t>(v_.size()); }
  const Vector& amplitudes() const { return v_; }
  double norm_residual() const { return std::abs(v_.squaredNorm() - 1.0); }

  Complex expectation(const Operator& a) const {
    return v_.dot(a.matrix() * v_) / v_.squaredNorm();
  }

 private:
  Vector v_;
};

enum class Purity { pure, mixed, unknown };

/// Hermitian, unit-trace, positive semidefinite operator.
class DensityMatrix {
 public:
  static constexpr double kHermitianTolerance = 1e-12;
  static constexpr double kTraceTolerance = 1e-10;
  static constexpr double kPsdTolerance = 1e-9;
  static constexpr double kPurityTolerance = 1e-8;

  DensityMatrix() = default;

  /// `psd_tol` bounds how negative the smallest eigenvalue may be.
  explicit DensityMatrix(Matrix entries, Purity tag = Purity::unknown,
                         double psd_tol = kPsdTolerance)
      : m_(std::move(entries)), tag_(tag) {
    if (m_.rows() != m_.cols()) {
      throw std::invalid_argument("density matrix must be square");
    }
    detail::check_dim(static_cast<std::size_t>(m_.rows()));
    const double scale = std::max(1.0, detail::max_abs(m_));
    if (detail::hermiticity_defect(m_) > kHermitianTolerance * scale) {
      throw std::invalid_argument("density matrix is not Hermitian");
    }
    const Complex tr = m_.trace();
    if (std::abs(tr - 1.0) > kTraceTolerance) {
      throw std::invalid_argument("density matrix trace " +
                                  std::to_string(tr.real()) + " is not 1");
    }
    const double lmin = min_eigenvalue(m_);
    if (lmin < -psd_tol) {
      throw NumericalError("density matrix has negative eigenvalue " +
                           std::to_string(lmin));
    }
    if (tag_ == Purity::pure && purity_residual() > kPurityTolerance) {
      throw std::invalid_argument("density matrix tagged pure but rho^2 != rho");
    }
  }

  static DensityMatrix from_state(const StateVector& chi) {
    const Vector& v = chi.amplitudes();
    Matrix m = v * v.adjoint();
    m = 0.5 * (m + m.adjoint()).eval();
    return DensityMatrix(std::move(m), Purity::pure);
  }

  static DensityMatrix maximally_mixed(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return DensityMatrix(Matrix::Identity(d, d) / static_cast<double>(dim),
                         dim == 1 ? Purity::pure : Purity::mixed);
  }

  /// Builds diag(p) in the given orthonormal basis (columns of `basis`).
  static DensityMatrix from_populations(const std::vector<double>& p,
                                        const Matrix& basis) {
    Matrix m = Matrix::Zero(basis.rows(), basis.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto col = basis.col(static_cast<Eigen::Index>(i));
      m += p[i] * col * col.adjoint();
    }
    m = 0.5 * (m + m.adjoint()).eval();
    return DensityMatrix(std::move(m));
  }

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  Purity purity_tag() const { return tag_; }

  double purity_residual() const { return (m_ * m_ - m_).norm(); }

  double expectation(const Operator& a) const {
    return detail::trace_product(m_, a.matrix()).real();
  }

  static double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

 private:
  Matrix m_;
  Purity tag_ = Purity::unknown;
};

struct Spectrum {
  RealVector eigenvalues;  // ascending
  Matrix eigenvectors;     // orthonormal columns
  std::vector<std::vector<std::size_t>> degeneracy_groups;

  std::size_t dim() const { return static_cast<std::size_t>(eigenvalues.size()); }
  double range() const {
    return eigenvalues.size() == 0
               ? 0.0
               : eigenvalues(eigenvalues.size() - 1) - eigenvalues(0);
  }
  /// Index of the degeneracy group that contains eigenvalue `i`.
  std::size_t group_of(std::size_t i) const {
    for (std::size_t g = 0; g < degeneracy_groups.size(); ++g) {
      const auto& grp = degeneracy_groups[g];
      if (std::find(grp.begin(), grp.end(), i) != grp.end()) return g;
    }
    throw std::out_of_range("eigenvalue index out of range");
  }
};

/// Relative degeneracy tolerance; absolute tolerance is this times the
/// spectral range.
inline constexpr double kDefaultDegeneracyTolerance = 1e-9;

/// Eigendecomposition of a Hermitian operator. Eigenvalues whose
/// consecutive gaps are <= `degeneracy_tol` are grouped. A negative
/// tolerance selects the default (1e-9 of the spectral range).
inline Spectrum eig_hermitian(const Operator& h, double degeneracy_tol = -1.0) {
  if (!h.is_hermitian()) {
    throw std::invalid_argument("eig_hermitian requires a Hermitian operator");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
  if (es.info() != Eigen::Success) {
    throw NumericalError("Hermitian eigensolver did not converge");
  }
  Spectrum s;
  s.eigenvalues = es.eigenvalues();
  s.eigenvectors = es.eigenvectors();
  if (degeneracy_tol < 0.0) {
    const double range = s.range();
    degeneracy_tol = kDefaultDegeneracyTolerance * (range > 0.0 ? range : 1.0);
  }
  const auto n = static_cast<std::size_t>(s.eigenvalues.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && s.eigenvalues(static_cast<Eigen::Index>(i)) -
                         s.eigenvalues(static_cast<Eigen::Index>(i - 1)) <=
                     degeneracy_tol) {
      s.degeneracy_groups.back().push_back(i);
    } else {
      s.degeneracy_groups.push_back({i});
    }
  }
  return s;
}

inline double spectral_range(const Operator& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix(), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev(ev.size() - 1) - ev(0);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  const auto ra = a.rows(), ca = a.cols(), rb = b.rows(), cb = b.cols();
  Matrix out(ra * rb, ca * cb);
  for (Eigen::Index i = 0; i < ra; ++i) {
    for (Eigen::Index j = 0; j < ca; ++j) {
      out.block(i * rb, j * cb, rb, cb) = a(i, j) * b;
    }
  }
  return out;
}

/// Kronecker product A (x) B; the first factor is the slow index.
inline Operator tensor_product(const Operator& a, const Operator& b,
                               std::size_t max_dim = kMaxDimension) {
  const std::size_t d = a.dim() * b.dim();
  if (d > max_dim) {
    throw std::invalid_argument("tensor product dimension " + std::to_string(d) +
                                " exceeds maximum " + std::to_string(max_dim));
  }
  return Operator(kron(a.matrix(), b.matrix()));
}

enum class Keep { first, second };

/// Partial trace of an operator on C^{d1} (x) C^{d2}.
inline Matrix partial_trace(const Matrix& m, std::size_t d1, std::size_t d2,
                            Keep keep) {
  if (d1 == 0 || d2 == 0 || static_cast<std::size_t>(m.rows()) != d1 * d2 ||
      m.rows() != m.cols()) {
    throw std::invalid_argument("dimension " + std::to_string(m.rows()) +
                                " does not factor as " + std::to_string(d1) +
                                " x " + std::to_string(d2));
  }
  const auto n1 = static_cast<Eigen::Index>(d1);
  const auto n2 = static_cast<Eigen::Index>(d2);
  if (keep == Keep::first) {
    Matrix out = Matrix::Zero(n1, n1);
    for (Eigen::Index k = 0; k < n2; ++k) {
      for (Eigen::Index i = 0; i < n1; ++i) {
        for (Eigen::Index j = 0; j < n1; ++j) {
          out(i, j) += m(i * n2 + k, j * n2 + k);
        }
      }
    }
    return out;
  }
  Matrix out = Matrix::Zero(n2, n2);
  for (Eigen::Index k = 0; k < n1; ++k) {
    out += m.block(k * n2, k * n2, n2, n2);
  }
  return out;
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::size_t d1,
                                   std::size_t d2, Keep keep) {
  Matrix r = partial_trace(rho.matrix(), d1, d2, keep);
  r = 0.5 * (r + r.adjoint()).eval();
  return DensityMatrix(std::move(r));
}

// Plain-text serialization: a line with the dimension, then one `re im`
// line per entry in row-major order (dim^2 lines for operators, dim for
// state vectors).

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      os << m(i, j).real() << ' ' << m(i, j).imag() << '\n';
    }
  }
}

inline Matrix read_matrix(std::istream& is) {
  long long dim = 0;
  if (!(is >> dim) || dim <= 0) {
    throw std::invalid_argument("matrix file: bad dimension line");
  }
  detail::check_dim(static_cast<std::size_t>(dim));
  Matrix m(dim, dim);
  for (long long i = 0; i < dim; ++i) {
    for (long long j = 0; j < dim; ++j) {
      double re = 0.0, im = 0.0;
      if (!(is >> re >> im)) {
        throw std::invalid_argument("matrix file: expected " +
                                    std::to_string(dim * dim) + " entries");
      }
      m(i, j) = Complex(re, im);
    }
  }
  return m;
}

inline void write_state(std::ostream& os, const StateVector& chi) {
  const Vector& v = chi.amplitudes();
  os << v.size() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    os << v(i).real() << ' ' << v(i).imag() << '\n';
  }
}

inline StateVector read_state(std::istream& is) {
  long long dim = 0;
  if (!(is >> dim) || dim <= 0) {
    throw std::invalid_argument("state file: bad dimension line");
  }
  Vector v(dim);
  for (long long i = 0; i < dim; ++i) {
    double re = 0.0, im = 0.0;
    if (!(is >> re >> im)) throw std::invalid_argument("state file: truncated");
    v(i) = Complex(re, im);
  }
  return StateVector(std::move(v));
}

}  // namespace stochred
