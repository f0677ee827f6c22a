#include <gtest/gtest.h>

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "stochred/accretion.hpp"
#include "stochred/special_functions.hpp"
#include "stochred/stats.hpp"
#include "test_support.hpp"

using namespace stochred;

TEST(Model, FillFractionAndEnergy) {
  AccretionModel m;
  m.n_sites = 100;
  m.sticking_rate = 1.0;
  m.evaporation_rate = 3.0;
  EXPECT_DOUBLE_EQ(m.mean_occupancy(), 25.0);
  EXPECT_DOUBLE_EQ(energy_fluctuation_accretion(m), 5.0);
  m.sticking_rate = 0.0;
  EXPECT_DOUBLE_EQ(energy_fluctuation_accretion(m), 0.0);
  m.evaporation_rate = std::numeric_limits<double>::infinity();
  m.sticking_rate = 1.0;
  EXPECT_DOUBLE_EQ(m.mean_occupancy(), 0.0);
  m.sticking_rate = -1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Fock, CommutatorAwayFromBoundary) {
  const FockTruncation f(12);
  EXPECT_LE(f.commutator_defect(), 1e-14);
  const Matrix n = f.number();
  EXPECT_DOUBLE_EQ(n(5, 5).real(), 5.0);
}

TEST(Fock, NumberConservation) {
  Matrix coupling(2, 1);
  coupling << Complex(0.3, 0.1), 0.7;
  const auto ops = accretion_operators(coupling, 2);
  EXPECT_EQ(ops.delta_h.rows(), 27);
  const Matrix c = ops.total_number * ops.delta_h - ops.delta_h * ops.total_number;
  EXPECT_LE(c.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GT(ops.delta_h.norm(), 0.1);
}

TEST(Displaced, CoherentVacuum) {
  const auto osc = DisplacedOscillator::from_lambda(Complex(-0.3, 0.1), 1.0);
  EXPECT_NEAR(osc.z.real(), 0.3, 1e-15);
  EXPECT_LE(osc.coherent_defect(40), 1e-12);
}

TEST(Pnk, UndisplacedIsDelta) {
  EXPECT_DOUBLE_EQ(pnk_exact(5, 0, 0.0, 20), 1.0);
  EXPECT_DOUBLE_EQ(pnk_exact(5, 1, 0.0, 20), 0.0);
}

TEST(Pnk, CoherentGroundStateIsPoisson) {
  const Complex z(0.4, 0.3);
  const double x = std::norm(z);
  for (int k = 0; k < 8; ++k) {
    const double expected = std::exp(-x) * std::pow(x, k) / std::tgamma(k + 1.0);
    EXPECT_NEAR(pnk_exact(0, -k, z, 40), expected, 1e-13);
  }
}

TEST(Pnk, MatchesHighPrecisionReference) {
  // mpmath at 40 digits for n = 50, z = 0.1.
  const std::vector<std::pair<int, double>> ref{{-3, 0.0029999957451217563881},
                                                {-1, 0.29907401472283293464},
                                                {0, 0.30835156473155178676},
                                                {1, 0.29644240473556636061},
                                                {2, 0.04372182610744253304},
                                                {5, 1.503185293951646727e-6}};
  const unsigned nmax = pnk_min_truncation(50, 0.1) + 20;
  for (const auto& [k, p] : ref) {
    EXPECT_NEAR(pnk_exact(50, k, 0.1, nmax), p, 1e-13) << "k=" << k;
  }
}

TEST(Pnk, DiagonalizationRoute) {
  // Eigenvector n of the forced oscillator from a dense eigensolver.
  const double mass = 1.0;
  const Complex lambda(-0.25, 0.1);
  const unsigned nmax = 60;
  const Matrix h = DisplacedOscillator::hamiltonian(mass, lambda, nmax);
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Complex z = DisplacedOscillator::from_lambda(lambda, mass).z;
  for (unsigned n : {0u, 3u, 7u}) {
    const Vector v = es.eigenvectors().col(static_cast<Eigen::Index>(n));
    EXPECT_NEAR(es.eigenvalues()(n), mass * n - std::norm(lambda) / mass, 1e-10);
    for (int k = -4; k <= static_cast<int>(n); ++k) {
      const double p = std::norm(v(static_cast<Eigen::Index>(static_cast<int>(n) - k)));
      EXPECT_NEAR(pnk_exact(n, k, z, nmax), p, 1e-10) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Pnk, DistributionSumsToOne) {
  const Complex z(0.05, 0.0);
  const auto d = pnk_exact_distribution(50, z, pnk_min_truncation(50, 0.05));
  EXPECT_NEAR(d.sum(), 1.0, 1e-10);
  EXPECT_LE(d.leakage, kLeakageTolerance);
  for (double p : d.probs) EXPECT_GE(p, 0.0);
}

TEST(Pnk, TruncationPrecondition) {
  EXPECT_THROW(pnk_exact(50, 0, 0.1, 55), std::invalid_argument);
  EXPECT_THROW(pnk_exact_distribution(50, 0.1, 55), std::invalid_argument);
}

TEST(Bessel, MatchesReferenceValues) {
  // mpmath values.
  EXPECT_NEAR(bessel_j(0, 1.0), 0.76519768655796655145, 1e-15);
  EXPECT_NEAR(bessel_j(1, 1.0), 0.44005058574493351596, 1e-15);
  EXPECT_NEAR(bessel_j(3, 2.5), 0.21660039103911352477, 1e-15);
  EXPECT_NEAR(bessel_j(10, 2.5), 2.2247284173983832948e-6, 1e-19);
  EXPECT_NEAR(bessel_j(0, 30.0), -0.086367983581040211336, 1e-14);
  EXPECT_NEAR(bessel_j(7, 30.0), 0.1451851895723282743, 1e-14);
  EXPECT_DOUBLE_EQ(bessel_j(0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(bessel_j(4, 0.0), 0.0);
}

TEST(Bessel, AgreesWithBoost) {
  for (double w : {0.01, 0.3, 1.7, 5.0, 12.5, 40.0}) {
    const auto seq = bessel_j_sequence(30, w);
    for (unsigned k = 0; k <= 30; ++k) {
      EXPECT_NEAR(seq[k], boost::math::cyl_bessel_j(static_cast<double>(k), w), 1e-13)
          << "k=" << k << " w=" << w;
    }
  }
}

TEST(Bessel, AdditionFormula) {
  for (double w : {0.1, 1.0, 4.0, 20.0, 80.0}) {
    const unsigned kmax = static_cast<unsigned>(w) + 60;
    const auto j = bessel_j_sequence(kmax, w);
    double s = j[0] * j[0];
    for (unsigned k = 1; k <= kmax; ++k) s += 2.0 * j[k] * j[k];
    EXPECT_NEAR(s, 1.0, 1e-10) << "w=" << w;
  }
}

TEST(Laguerre, ReferenceValue) {
  EXPECT_NEAR(laguerre(5, 2.5, 1.3), -0.46684733333333378405, 1e-14);
  EXPECT_DOUBLE_EQ(laguerre(0, 3.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(laguerre(1, 3.0, 2.0), 2.0);
}

TEST(PnkBessel, ConvergesToExact) {
  // Fixed 2 sqrt(n)|z| = 2: error shrinks as n grows.
  double prev = 1.0;
  for (unsigned n : {25u, 100u, 400u}) {
    const double z = 1.0 / std::sqrt(static_cast<double>(n));
    const unsigned nmax = pnk_truncation(n, z);
    EXPECT_GE(nmax, pnk_min_truncation(n, z));
    double err = 0.0;
    for (int k = -6; k <= 6; ++k) {
      err = std::max(err, std::abs(pnk_exact(n, k, z, nmax) - pnk_bessel(n, k, z)));
    }
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 0.01);
  EXPECT_DOUBLE_EQ(pnk_bessel(10, 0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(pnk_bessel(10, 3, 0.0), 0.0);
}

TEST(Envelope, BandStructure) {
  const unsigned n = 400;
  const Complex z(0.5, 0.0);  // band edge at 20
  EXPECT_DOUBLE_EQ(band_edge(n, z), 20.0);
  const auto c = pnk_envelope(n, 0, z);
  EXPECT_EQ(c.band, Band::inside);
  EXPECT_NEAR(c.value, 1.0 / (2.0 * std::numbers::pi * 20.0 * 0.5), 1e-15);
  EXPECT_EQ(pnk_envelope(n, 20, z).band, Band::edge);
  EXPECT_EQ(pnk_envelope(n, -20, z).band, Band::edge);
  EXPECT_EQ(pnk_envelope(n, 21, z).band, Band::tail);
  EXPECT_EQ(pnk_envelope(n, 21, z).value, 0.0);
}

TEST(Envelope, WindowedBesselTracksEnvelope) {
  const unsigned n = 10000;
  const Complex z(0.5, 0.0);  // w = 100
  for (int center : {-40, -10, 0, 25, 50}) {
    double avg = 0.0, env = 0.0;
    for (int k = center - 5; k <= center + 5; ++k) {
      avg += pnk_bessel(n, k, z);
      env += pnk_envelope(n, k, z).value;
    }
    EXPECT_NEAR(avg / env, 1.0, 0.25) << "center=" << center;
  }
}

TEST(Occupancy, BinomialStationaryLaw) {
  AccretionModel m;
  m.n_sites = 20;
  m.sticking_rate = 1.0;
  m.evaporation_rate = 1.5;
  const auto r = occupancy_simulate(m, 4e4, 3);
  EXPECT_FALSE(r.short_horizon);
  std::vector<double> p;
  for (unsigned k = 0; k <= 20; ++k) p.push_back(binomial_pmf(k, 20, 0.4));
  EXPECT_GT(stats::chi_square_gof(r.histogram, p).p_value, 1e-3);
  EXPECT_LT(std::abs(r.lag1_autocorrelation), 0.1);
}

TEST(Occupancy, DeterministicAndFlagsShortHorizon) {
  AccretionModel m;
  m.n_sites = 10;
  m.sticking_rate = 0.5;
  m.evaporation_rate = 0.5;
  const auto a = occupancy_simulate(m, 500.0, 7);
  const auto b = occupancy_simulate(m, 500.0, 7);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_TRUE(occupancy_simulate(m, 50.0, 7).short_horizon);
  m.lambda = 0.1;
  EXPECT_THROW(occupancy_simulate(m, 50.0, 7), std::invalid_argument);
}

TEST(SpecialFunctions, Pmfs) {
  EXPECT_NEAR(binomial_pmf(3, 10, 0.25), 0.2502822875976561, 1e-13);
  EXPECT_NEAR(poisson_pmf(4, 2.5), 0.13360188578108528, 1e-13);
}

TEST(CoherentCsv, Columns) {
  std::ostringstream os;
  write_coherent_csv(os, 50, 0.1, pnk_min_truncation(50, 0.1), -2, 2);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("k,p_exact,p_bessel,envelope\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 6);
}
