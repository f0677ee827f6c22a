#include <gtest/gtest.h>

#include <sstream>

#include "stochred/linalg.hpp"
#include "stochred/random.hpp"
#include "test_support.hpp"

using namespace stochred;
using stochred::testing::matrices_near;

TEST(Operator, RejectsNonHermitian) {
  Matrix m(2, 2);
  m << 1.0, 2.0, 0.0, 1.0;
  EXPECT_THROW(Operator::hermitian(m), std::invalid_argument);
  EXPECT_NO_THROW(Operator(m, false));
  EXPECT_FALSE(Operator(m, false).is_hermitian());
}

TEST(Operator, DiagonalAndIdentity) {
  const auto d = Operator::diagonal({1.0, 2.0, 3.0});
  EXPECT_TRUE(d.is_diagonal());
  EXPECT_EQ(d.dim(), 3u);
  EXPECT_TRUE(Operator::identity(4).is_diagonal());
  EXPECT_DOUBLE_EQ(spectral_range(d), 2.0);
}

TEST(Operator, DimensionLimits) {
  EXPECT_THROW(Operator::identity(0), std::invalid_argument);
  EXPECT_THROW(Operator::identity(kMaxDimension + 1), std::invalid_argument);
}

TEST(StateVector, NormalizationAndWeights) {
  const auto s = StateVector::from_weights({0.1, 0.2, 0.3, 0.4});
  EXPECT_NEAR(s.amplitudes().norm(), 1.0, 1e-15);
  EXPECT_NEAR(std::norm(s.amplitudes()(3)), 0.4, 1e-15);
  Vector z = Vector::Zero(3);
  EXPECT_THROW(StateVector::normalized(z), std::invalid_argument);
  EXPECT_THROW(StateVector::from_weights({0.5, -0.1}), std::invalid_argument);
}

TEST(DensityMatrix, ValidatesInput) {
  Matrix m = Matrix::Identity(2, 2);
  EXPECT_THROW(DensityMatrix{m}, std::invalid_argument);  // trace 2
  Matrix neg(2, 2);
  neg << 1.5, 0.0, 0.0, -0.5;
  EXPECT_THROW(DensityMatrix{neg}, NumericalError);
  const auto mm = DensityMatrix::maximally_mixed(4);
  EXPECT_NEAR(mm.matrix().trace().real(), 1.0, 1e-15);
  EXPECT_GT(mm.purity_residual(), 0.1);
}

TEST(DensityMatrix, PureStateExpectation) {
  const Vector c = stochred::testing::sample_state();
  const Operator h = Operator::hermitian(stochred::testing::sample_hamiltonian());
  const StateVector chi(c);
  const auto rho = DensityMatrix::from_state(chi);
  EXPECT_LT(rho.purity_residual(), 1e-14);
  EXPECT_NEAR(rho.expectation(h), chi.expectation(h).real(), 1e-14);
}

TEST(Eigen, SpectrumAndDegeneracy) {
  const auto sp = eig_hermitian(Operator::diagonal({2.0, 0.0, 2.0, 1.0}));
  ASSERT_EQ(sp.degeneracy_groups.size(), 3u);
  EXPECT_EQ(sp.degeneracy_groups[2].size(), 2u);
  EXPECT_DOUBLE_EQ(sp.range(), 2.0);
  auto r = stochred::testing::rng();
  const Operator h = random_hermitian(6, r);
  const auto s2 = eig_hermitian(h);
  const Matrix rebuilt = s2.eigenvectors * s2.eigenvalues.cast<Complex>().asDiagonal() *
                         s2.eigenvectors.adjoint();
  EXPECT_TRUE(matrices_near(rebuilt, h.matrix(), 1e-12));
}

TEST(TensorProduct, PartialTraceOfProduct) {
  auto r = stochred::testing::rng(7);
  const DensityMatrix a = random_density(3, r);
  const DensityMatrix b = random_density(2, r);
  const Matrix ab = kron(a.matrix(), b.matrix());
  EXPECT_TRUE(matrices_near(partial_trace(ab, 3, 2, Keep::first), a.matrix(), 1e-14));
  EXPECT_TRUE(matrices_near(partial_trace(ab, 3, 2, Keep::second), b.matrix(), 1e-14));
  EXPECT_THROW(partial_trace(ab, 2, 2, Keep::first), std::invalid_argument);
}

TEST(TensorProduct, KronIndexing) {
  Matrix a(2, 2), b(2, 2);
  a << 1.0, 2.0, 3.0, 4.0;
  b << 0.0, 1.0, 1.0, 0.0;
  const Matrix k = kron(a, b);
  EXPECT_EQ(k(0, 1), Complex(1.0));
  EXPECT_EQ(k(2, 3), Complex(4.0));
  EXPECT_EQ(k(3, 0), Complex(3.0));
  EXPECT_EQ(k(1, 2), Complex(2.0));
}

TEST(MatrixIo, RoundTrip) {
  const Matrix h = stochred::testing::sample_hamiltonian();
  std::stringstream ss;
  write_matrix(ss, h);
  EXPECT_EQ((read_matrix(ss) - h).norm(), 0.0);
  std::stringstream s2;
  write_state(s2, StateVector(stochred::testing::sample_state()));
  EXPECT_EQ((read_state(s2).amplitudes() - stochred::testing::sample_state()).norm(), 0.0);
}
