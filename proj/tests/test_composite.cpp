#include <gtest/gtest.h>

#include <sstream>

#include "stochred/composite.hpp"
#include "stochred/random.hpp"
#include "test_support.hpp"

using namespace stochred;
using stochred::testing::matrices_near;

namespace {

struct TwoByTwo {
  CompositeSystem sys;
  DensityMatrix rho1;
  DensityMatrix rho2;
};

TwoByTwo small_instance(double g) {
  Matrix h2(2, 2);
  h2 << 0.2, 0.3, 0.3, -0.1;
  Matrix dh(4, 4);
  dh << 0.5, Complex(0, 0.1), 0.0, 0.2,
        Complex(0, -0.1), -0.3, 0.4, 0.0,
        0.0, 0.4, 0.1, Complex(0.3, -0.1),
        0.2, 0.0, Complex(0.3, 0.1), 0.6;
  CompositeSystem sys(Operator::diagonal({0.0, 1.0}), Operator::hermitian(h2),
                      Operator::hermitian(dh), g);
  return {sys, DensityMatrix::from_state(StateVector::from_weights({0.5, 0.5})),
          DensityMatrix::from_populations({0.7, 0.3}, Matrix::Identity(2, 2))};
}

}  // namespace

TEST(Composite, Validation) {
  EXPECT_THROW(CompositeSystem(Operator::identity(2), Operator::identity(3), Operator::identity(5)),
               std::invalid_argument);
  const auto t = small_instance(0.5);
  const Matrix total = t.sys.total();
  EXPECT_TRUE(detail::is_hermitian(total));
  EXPECT_TRUE(matrices_near(t.sys.with_coupling(0.0).total(),
                            kron(t.sys.h1.matrix(), Matrix::Identity(2, 2)) +
                                kron(Matrix::Identity(2, 2), t.sys.h2.matrix()),
                            0.0));
}

TEST(Clustering, NoiseAnticommutatorFactorizesForAnyStates) {
  auto r = stochred::testing::rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto h1 = random_hermitian(3, r);
    const auto h2 = random_hermitian(2, r);
    EXPECT_LE(clustering_noise_residual(random_density(3, r), random_density(2, r), h1, h2,
                                        NoiseForm::anticommutator),
              1e-12);
  }
}

TEST(Clustering, DoubleCommutatorNeedsPureStates) {
  auto r = stochred::testing::rng(2);
  const auto h1 = random_hermitian(3, r);
  const auto h2 = random_hermitian(3, r);
  const auto p1 = DensityMatrix::from_state(random_pure_state(3, r));
  const auto p2 = DensityMatrix::from_state(random_pure_state(3, r));
  EXPECT_LE(clustering_noise_residual(p1, p2, h1, h2, NoiseForm::double_commutator), 1e-12);
  EXPECT_GT(clustering_noise_residual(p1, random_density(3, r), h1, h2,
                                      NoiseForm::double_commutator),
            1e-6);
}

TEST(Clustering, DriftResidualCases) {
  auto r = stochred::testing::rng(3);
  const auto h1 = random_hermitian(3, r);
  const auto h2 = random_hermitian(2, r);
  const auto p1 = DensityMatrix::from_state(random_pure_state(3, r));
  const auto p2 = DensityMatrix::from_state(random_pure_state(2, r));
  EXPECT_GT(clustering_drift_residual(p1, p2, h1, h2, NoiseForm::anticommutator), 1e-6);
  // Commuting data: both [H, rho] and N vanish for eigenstates.
  const auto d1 = Operator::diagonal({0.0, 1.0, 2.0});
  const auto d2 = Operator::diagonal({0.5, -0.5});
  const auto e1 = DensityMatrix::from_state(StateVector::basis(3, 1));
  const auto e2 = DensityMatrix::from_state(StateVector::basis(2, 0));
  EXPECT_LE(clustering_drift_residual(e1, e2, d1, d2, NoiseForm::double_commutator), 1e-15);
}

TEST(Clustering, SuiteAllCasesPass) {
  const auto cases = cluster_suite(30, 200, 99);
  ASSERT_EQ(cases.size(), 7u);
  std::size_t nonzero = 0;
  for (const auto& c : cases) {
    EXPECT_TRUE(c.pass()) << c.name << " max " << c.max_residual << " min " << c.min_residual;
    if (!c.expect_zero) ++nonzero;
  }
  EXPECT_EQ(nonzero, 2u);
  std::ostringstream a, b;
  write_cluster_csv(a, cases);
  write_cluster_csv(b, cluster_suite(30, 200, 99));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("case,instances,max_residual,min_residual,expect_zero,pass\n", 0), 0u);
}

TEST(Hartree, StepMatchesReference) {
  // Reference step computed independently with numpy for the same instance,
  // sigma = 1, dt = 1e-3, dW = 0.03, g = 0.5.
  const auto t = small_instance(0.5);
  const auto out = hartree_step(t.rho1, t.rho2, t.sys, 1.0, 1e-3, 0.03);
  Matrix r1(2, 2), r2(2, 2);
  r1 << 0.4925375, Complex(0.4999381234375, 0.0004975), Complex(0.4999381234375, -0.0004975),
      0.5074625;
  r2 << 0.7023349375, Complex(0.00788235625, 0.00021), Complex(0.00788235625, -0.00021),
      0.2976650625;
  EXPECT_TRUE(matrices_near(out.rho1.matrix(), r1, 1e-14));
  EXPECT_TRUE(matrices_near(out.rho2.matrix(), r2, 1e-14));
}

TEST(Hartree, ZeroCouplingIsIndependentEvolution) {
  const auto t = small_instance(0.0);
  const auto out = hartree_step(t.rho1, t.rho2, t.sys, 1.0, 1e-3, -0.02);
  const auto a = step_density(t.rho1, t.sys.h1, 1.0, 1e-3, -0.02);
  const auto b = step_density(t.rho2, t.sys.h2, 1.0, 1e-3, -0.02);
  EXPECT_TRUE(matrices_near(out.rho1.matrix(), a.matrix(), 1e-16));
  EXPECT_TRUE(matrices_near(out.rho2.matrix(), b.matrix(), 1e-16));
}

TEST(Hartree, DiscrepancyShrinksQuadratically) {
  auto r = stochred::testing::rng(5);
  auto scaled = [&](std::size_t d) {
    Matrix m = random_hermitian(d, r).matrix();
    return Operator::hermitian(2.0 * m / m.norm());
  };
  const auto h1 = scaled(2);
  const auto dh = scaled(6);
  const auto h2 = Operator::diagonal({0.0, 0.0, 1.0});
  Matrix r2 = Matrix::Zero(3, 3);
  r2(0, 0) = 0.5;
  r2(1, 1) = 0.5;
  const CompositeSystem sys(h1, h2, dh);
  const auto rep = hartree_vs_full(sys, DensityMatrix::from_state(random_pure_state(2, r)),
                                   DensityMatrix(r2), 1.0, 0.5, {0.0, 0.4, 0.2}, 6, 3, 1, 3e-4);
  ASSERT_EQ(rep.points.size(), 3u);
  EXPECT_LE(rep.points[0].mean_discrepancy, 1e-10);
  EXPECT_NEAR(rep.exponent, 2.0, 0.3);
  std::ostringstream os;
  write_hartree_csv(os, rep);
  EXPECT_EQ(os.str().rfind("g,mean_discrepancy,sem\n", 0), 0u);
}

TEST(Hartree, RejectsLargeProducts) {
  const CompositeSystem sys(Operator::identity(9), Operator::identity(8), Operator::identity(72));
  EXPECT_THROW(hartree_vs_full(sys, DensityMatrix::maximally_mixed(9),
                               DensityMatrix::maximally_mixed(8), 1.0, 1.0, {0.1}, 1, 1),
               std::invalid_argument);
}
