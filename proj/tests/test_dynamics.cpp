#include <gtest/gtest.h>

#include <sstream>

#include "stochred/dynamics.hpp"
#include "stochred/noise.hpp"
#include "stochred/observables.hpp"
#include "stochred/random.hpp"
#include "stochred/stats.hpp"
#include "test_support.hpp"

using namespace stochred;
using stochred::testing::matrices_near;
using stochred::testing::sample_hamiltonian;
using stochred::testing::sample_state;

namespace {

// Reference values computed independently (numpy, scipy.linalg.expm) for
// the sample instance with sigma = 0.8, dt = 1e-3, dW = 0.02.
Matrix reference_density_step() {
  Matrix m(3, 3);
  m << 0.4494039703703705, Complex(0.00371875555555556, -0.4441250370370371),
      Complex(0.22387229629629635, -0.00066311111111111),
      Complex(0.00371875555555556, 0.4441250370370371), 0.43906868148148154,
      Complex(0.00248728888888889, 0.2212431407407408),
      Complex(0.22387229629629635, 0.00066311111111111),
      Complex(0.00248728888888889, -0.2212431407407408), 0.11152734814814817;
  return m;
}

Vector reference_state_step() {
  Vector v(3);
  v << Complex(0.6703515851851852, 0.00188035555555556),
      Complex(0.00368604444444444, 0.6625850074074074),
      Complex(0.33394014814814815, 0.00191137777777778);
  return v;
}

// E[rho(2)] for sigma = 0.8 from the exponential of the superoperator.
Matrix reference_expectation_t2() {
  Matrix m(3, 3);
  m << 0.4300922852350513, Complex(0.25216679452093843, 0.13449077308455870),
      Complex(0.15797862010722769, -0.11979455207522857),
      Complex(0.2521667945209385, -0.13449077308455867), 0.47139486875494274,
      Complex(0.01332920570497372, -0.13414931300997682),
      Complex(0.1579786201072276, 0.11979455207522857),
      Complex(0.01332920570497382, 0.13414931300997676), 0.09851284601000596;
  return m;
}

constexpr double kSigma = 0.8;
constexpr double kDt = 1e-3;
constexpr double kDw = 0.02;

}  // namespace

TEST(DensityStep, MatchesReference) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  const auto rho = DensityMatrix::from_state(StateVector(sample_state()));
  const auto out = step_density(rho, h, kSigma, kDt, kDw);
  EXPECT_TRUE(matrices_near(out.matrix(), reference_density_step(), 1e-15));
}

TEST(StateStep, EulerMaruyamaMatchesReference) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  const auto out = step_state_vector(StateVector(sample_state()), h, kSigma, kDt, kDw,
                                     Scheme::euler_maruyama);
  EXPECT_TRUE(matrices_near(out.amplitudes(), reference_state_step(), 1e-15));
  const auto ren = step_state_vector(StateVector(sample_state()), h, kSigma, kDt, kDw);
  EXPECT_NEAR(ren.amplitudes().norm(), 1.0, 1e-15);
  EXPECT_TRUE(matrices_near(ren.amplitudes(),
                            reference_state_step() / reference_state_step().norm(), 1e-15));
}

TEST(DensityStep, NoiseFormsAgreeOnPureStates) {
  auto r = stochred::testing::rng(3);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = 2 + static_cast<std::size_t>(i % 7);
    const Operator h = random_hermitian(d, r);
    const auto rho = DensityMatrix::from_state(random_pure_state(d, r));
    const Matrix a = noise_coefficient(rho, h, NoiseForm::anticommutator).matrix();
    const Matrix b = noise_coefficient(rho, h, NoiseForm::double_commutator).matrix();
    EXPECT_LE((a - b).norm(), 1e-12);
  }
}

TEST(DensityStep, TraceAndHermiticityPreserved) {
  auto r = stochred::testing::rng(4);
  const Operator h = random_hermitian(5, r);
  SdeConfig cfg;
  cfg.sigma = 1.0;
  cfg.dt = default_dt(cfg.sigma, spectral_range(h));
  cfg.n_steps = 3000;
  cfg.record_stride = 3000;
  const auto tr = evolve_trajectory(State(random_density(5, r)), h, cfg, 11);
  const auto& rho = std::get<DensityMatrix>(tr.states.back());
  EXPECT_NEAR(rho.matrix().trace().real(), 1.0, 1e-12);
  EXPECT_LE(detail::hermiticity_defect(rho.matrix()), 1e-15);
  EXPECT_GE(DensityMatrix::min_eigenvalue(rho.matrix()),
            -psd_tolerance(cfg.sigma, spectral_range(h), cfg.dt));
}

TEST(DensityStep, PureStateTracksStateVector) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  SdeConfig cfg;
  cfg.sigma = kSigma;
  cfg.dt = 1e-4;
  cfg.n_steps = 10000;
  cfg.record_stride = cfg.n_steps;
  const StateVector chi(sample_state());
  const auto a = evolve_trajectory(State(chi), h, cfg, 5);
  const auto b = evolve_trajectory(State(DensityMatrix::from_state(chi)), h, cfg, 5);
  const Vector c = std::get<StateVector>(a.states.back()).amplitudes();
  const Matrix& rho = std::get<DensityMatrix>(b.states.back()).matrix();
  EXPECT_LE((rho - c * c.adjoint()).norm(), 5e-3);
  EXPECT_LE(b.purity_residual.back(), 5e-3);
}

TEST(DensityStep, DoubleCommutatorRejectsMixedStates) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  SdeConfig cfg;
  cfg.noise_form = NoiseForm::double_commutator;
  cfg.n_steps = 10;
  EXPECT_THROW(evolve_trajectory(State(DensityMatrix::maximally_mixed(2)), h, cfg, 1),
               std::invalid_argument);
}

TEST(Stability, Bounds) {
  EXPECT_NEAR(stability_parameter(1.0, 2.0, default_dt(1.0, 2.0)), kDefaultStepParameter, 1e-18);
  EXPECT_FALSE(check_stability(1.0, 1.0, 0.005));
  EXPECT_TRUE(check_stability(1.0, 1.0, 0.05));
  EXPECT_THROW(check_stability(1.0, 1.0, 0.2), std::invalid_argument);
  EXPECT_THROW(check_stability(1.0, 1.0, 0.0), std::invalid_argument);
  const Operator h = Operator::diagonal({0.0, 10.0});
  EXPECT_THROW(step_state_vector(StateVector::basis(2, 0), h, 1.0, 0.01, 0.0),
               std::invalid_argument);
}

TEST(Expectation, Rk4MatchesReference) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  const auto rho = DensityMatrix::from_state(StateVector(sample_state()));
  const auto out = evolve_expectation(rho, h, kSigma, 2.0);
  EXPECT_TRUE(matrices_near(out.matrix(), reference_expectation_t2(), 1e-8));
}

TEST(Expectation, EnsembleMeanFollowsDeterministicFlow) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  const auto rho0 = DensityMatrix::from_state(StateVector(sample_state()));
  SdeConfig cfg;
  cfg.sigma = kSigma;
  cfg.dt = 1e-3;
  cfg.n_steps = 2000;
  cfg.record_stride = cfg.n_steps;
  const std::size_t n = 400;
  std::vector<Matrix> finals;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tr = evolve_trajectory(State(rho0), h, cfg, trajectory_seed(77, i));
    finals.push_back(std::get<DensityMatrix>(tr.states.back()).matrix());
  }
  const Matrix expected = reference_expectation_t2();
  for (Eigen::Index a = 0; a < 3; ++a) {
    for (Eigen::Index b = 0; b < 3; ++b) {
      std::vector<double> re, im;
      for (const auto& f : finals) {
        re.push_back(f(a, b).real());
        im.push_back(f(a, b).imag());
      }
      const auto mr = stats::mean_sem(re);
      const auto mi = stats::mean_sem(im);
      // 5 SEM plus the O(dt) Euler bias.
      EXPECT_LE(std::abs(mr.mean - expected(a, b).real()), 5.0 * mr.sem + 1e-2);
      EXPECT_LE(std::abs(mi.mean - expected(a, b).imag()), 5.0 * mi.sem + 1e-2);
    }
  }
}

TEST(Trajectory, EnergyIsMartingale) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  const StateVector chi(sample_state());
  SdeConfig cfg;
  cfg.sigma = 1.0;
  cfg.dt = default_dt(1.0, spectral_range(h));
  cfg.n_steps = 5000;
  cfg.record_stride = cfg.n_steps;
  std::vector<double> e;
  for (std::size_t i = 0; i < 300; ++i) {
    e.push_back(evolve_trajectory(State(chi), h, cfg, trajectory_seed(9, i), false).energy.back());
  }
  const auto m = stats::mean_sem(e);
  EXPECT_LE(std::abs(m.mean - energy(chi, h)), 5.0 * m.sem);
  EXPECT_GT(m.sem, 0.0);
}

TEST(Trajectory, DiagonalFastPathMatchesGeneralStep) {
  const std::vector<double> ev{0.0, 0.7, 1.3, 2.0};
  const Operator h = Operator::diagonal(ev);
  RealVector e(4);
  e << 0.0, 0.7, 1.3, 2.0;
  Vector a = StateVector::from_weights({0.1, 0.2, 0.3, 0.4}).amplitudes();
  Vector b = a;
  detail::VectorWork w;
  WienerStream noise(3, 1e-4);
  for (int k = 0; k < 1000; ++k) {
    const double dw = noise.next();
    detail::state_step(a, h.matrix(), 1.0, 1e-4, dw, true, w);
    detail::state_step_diagonal(b, e, 1.0, 1e-4, dw, true);
  }
  EXPECT_LE((a - b).norm(), 1e-12);
}

TEST(Trajectory, EulerMaruyamaNormDriftsWithinTolerance) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  SdeConfig cfg;
  cfg.scheme = Scheme::euler_maruyama;
  cfg.dt = 1e-3;
  cfg.n_steps = 2000;
  const auto tr = evolve_trajectory(State(StateVector::from_weights({0.5, 0.5})), h, cfg, 1);
  EXPECT_GT(tr.purity_residual.back(), 0.0);
  EXPECT_LT(tr.purity_residual.back(), kUnrenormalizedNormTolerance);
}

TEST(Trajectory, DeterministicAndCsv) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  SdeConfig cfg;
  cfg.n_steps = 100;
  cfg.dt = 1e-3;
  const auto a = evolve_trajectory(State(StateVector(sample_state())), h, cfg, 42, false);
  const auto b = evolve_trajectory(State(StateVector(sample_state())), h, cfg, 42, false);
  std::ostringstream sa, sb;
  write_trajectory_csv(sa, a);
  write_trajectory_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().rfind("t,reH_exp,V,purity_residual\n", 0), 0u);
  EXPECT_EQ(a.size(), 101u);
}

TEST(CommutingMartingale, RequiresCommutingData) {
  const Operator h = Operator::hermitian(sample_hamiltonian());
  const auto rho = DensityMatrix::from_state(StateVector(sample_state()));
  EXPECT_THROW(step_commuting_martingale(rho, h, 1.0, 1e-3, 0.01), std::invalid_argument);
  const Operator d = Operator::diagonal({0.0, 1.0, 3.0});
  const auto p = DensityMatrix::from_populations({0.2, 0.3, 0.5}, Matrix::Identity(3, 3));
  const auto out = step_commuting_martingale(p, d, 1.0, 1e-3, 0.01);
  RealVector pv(3), ev(3);
  pv << 0.2, 0.3, 0.5;
  ev << 0.0, 1.0, 3.0;
  detail::martingale_step_diagonal(pv, ev, 1.0, 0.01);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(out.matrix()(i, i).real(), pv(i), 1e-15);
  EXPECT_NEAR(out.matrix()(0, 1).real(), 0.0, 1e-15);
}
