#include <gtest/gtest.h>

#include <sstream>

#include "stochred/reduction.hpp"
#include "stochred/stats.hpp"
#include "test_support.hpp"

using namespace stochred;

namespace {

SdeConfig config_for(const Operator& h, double sigma = 1.0) {
  SdeConfig c;
  c.sigma = sigma;
  c.dt = default_dt(sigma, spectral_range(h));
  return c;
}

}  // namespace

TEST(BornWeights, GroupsDegenerateLevels) {
  const Operator h = Operator::diagonal({0.0, 1.0, 1.0, 2.0});
  const auto w = born_weights(h, StateVector::from_weights({0.1, 0.2, 0.3, 0.4}));
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[0], 0.1, 1e-14);
  EXPECT_NEAR(w[1], 0.5, 1e-14);
  EXPECT_NEAR(w[2], 0.4, 1e-14);
}

TEST(BornWeights, NonDiagonalHamiltonian) {
  Matrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  const auto w = born_weights(Operator::hermitian(m), StateVector::basis(2, 0));
  EXPECT_NEAR(w[0], 0.5, 1e-14);
  EXPECT_NEAR(w[1], 0.5, 1e-14);
}

TEST(BornStatistics, SmallEnsembleMatchesWeights) {
  const Operator h = Operator::diagonal({0.0, 1.0, 2.0});
  const auto chi = StateVector::from_weights({0.2, 0.5, 0.3});
  const auto s = born_statistics(h, chi, config_for(h), 800, 8);
  EXPECT_EQ(s.n_unreduced, 0u);
  std::vector<double> counts(s.outcome_counts.begin(), s.outcome_counts.end());
  EXPECT_GT(stats::chi_square_gof(counts, {0.2, 0.5, 0.3}).p_value, 1e-3);
  for (std::size_t g = 0; g < 3; ++g) {
    EXPECT_LE(s.outcome_ci[g].lo, s.outcome_frequencies[g]);
    EXPECT_GE(s.outcome_ci[g].hi, s.outcome_frequencies[g]);
  }
}

TEST(BornStatistics, IndependentOfWorkerCount) {
  const Operator h = Operator::diagonal({0.0, 1.0, 2.0, 3.0});
  const auto chi = StateVector::from_weights({0.1, 0.2, 0.3, 0.4});
  EnsembleOptions a, b;
  a.workers = 1;
  b.workers = 3;
  const auto sa = born_statistics(h, chi, config_for(h), 64, 5, a);
  const auto sb = born_statistics(h, chi, config_for(h), 64, 5, b);
  EXPECT_EQ(sa.outcomes, sb.outcomes);
  EXPECT_EQ(sa.reduction_times, sb.reduction_times);
}

TEST(BornStatistics, EigenstateIsAlreadyReduced) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  const auto s = born_statistics(h, StateVector::basis(2, 1), config_for(h), 10, 1);
  EXPECT_EQ(s.outcome_counts[1], 10u);
  EXPECT_EQ(s.reduction_times[0], 0.0);
}

TEST(BornStatistics, StepBudgetExhaustionIsReported) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  EnsembleOptions o;
  o.max_steps = 10;
  EXPECT_THROW(born_statistics(h, StateVector::from_weights({0.5, 0.5}), config_for(h), 20, 1, o),
               NumericalError);
}

TEST(VarianceDecay, RejectsSmallEnsembles) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  SdeConfig c = config_for(h);
  c.n_steps = 100;
  c.record_stride = 10;
  const auto s = variance_ensemble(h, StateVector::from_weights({0.5, 0.5}), c, 50, 1);
  EXPECT_THROW(variance_decay_check(s), std::invalid_argument);
}

TEST(VarianceDecay, SlopeNearOne) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  SdeConfig c = config_for(h);
  c.record_stride = 200;
  c.n_steps = 200 * 20;
  const auto s = variance_ensemble(h, StateVector::from_weights({0.3, 0.7}), c, 1000, 2);
  ASSERT_EQ(s.times.size(), 21u);
  EXPECT_NEAR(s.ev.front(), 0.21, 1e-12);
  const auto r = variance_decay_check(s);
  EXPECT_NEAR(r.slope, 1.0, 5.0 * r.slope_se + 0.05);
  EXPECT_TRUE(r.monotone);
  std::ostringstream os;
  write_variance_csv(os, s);
  EXPECT_EQ(os.str().rfind("t,EV,EV_sem,EV2\n", 0), 0u);
}

TEST(Gibbs, StateWeights) {
  const auto g = gibbs_state({2.0, Operator::diagonal({0.0, 1.0})});
  const double z = 1.0 + std::exp(-2.0);
  EXPECT_NEAR(g.matrix()(0, 0).real(), 1.0 / z, 1e-14);
  EXPECT_NEAR(g.matrix()(1, 1).real(), std::exp(-2.0) / z, 1e-14);
}

TEST(Statdist, MeanStaysAtGibbs) {
  const GibbsSpec g{1.0, Operator::diagonal({0.0, 1.0, 2.0})};
  SdeConfig c = config_for(g.h);
  c.n_steps = 2000;
  c.record_stride = 200;
  const auto r = statdist_martingale_run(g, c, 1000, 4);
  EXPECT_LE(r.sup_deviation_ratio, 5.0);
  EXPECT_GT(r.min_final_group_population, 0.99);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LE(stats::binomial_z(r.stats.outcome_frequencies[k], r.gibbs_group_weights[k],
                                r.stats.n_classified()),
              4.0);
  }
}

TEST(Statdist, DegenerateLevelKeepsInternalRatio) {
  const GibbsSpec g{0.5, Operator::diagonal({0.0, 1.0, 1.0})};
  SdeConfig c = config_for(g.h);
  c.n_steps = 1000;
  c.record_stride = 100;
  const auto r = statdist_martingale_run(g, c, 300, 6);
  EXPECT_GT(r.n_degenerate_endpoints, 0u);
  EXPECT_LE(r.max_intra_group_ratio_error, 1e-12);
}

TEST(Luders, ValidatesInput) {
  LudersSpec s;
  s.alpha = 0.5;
  s.beta = 1.0;
  s.branch_amplitudes = {0.5};
  s.branch_energies = {1.0};
  EXPECT_THROW(luders_scenario(s, SdeConfig{}, 10, 1), std::invalid_argument);  // norm 0.5
  s.alpha = std::sqrt(0.75);
  s.transmitted_amplitudes = {std::sqrt(0.5), std::sqrt(0.5)};
  s.transmitted_energies = {0.0, 0.1};
  EXPECT_THROW(luders_scenario(s, SdeConfig{}, 10, 1), std::invalid_argument);  // spread
}

TEST(Luders, TransmittedBranchPreserved) {
  LudersSpec s;
  s.alpha = std::sqrt(0.6);
  s.beta = 1.0;
  s.transmitted_amplitudes = {std::sqrt(0.5), std::polar(std::sqrt(0.5), 0.7)};
  s.transmitted_energies = {0.0, 0.0};
  s.branch_amplitudes = {std::sqrt(0.4)};
  s.branch_energies = {1.0};
  SdeConfig c;
  c.dt = default_dt(1.0, 1.0);
  const auto r = luders_scenario(s, c, 400, 3);
  EXPECT_GT(r.n_transmitted, 150u);
  // Endpoints keep up to 1% weight outside the transmitted branch.
  EXPECT_GE(r.min_fidelity, 0.99);
  EXPECT_LE(r.max_phase_error, 1e-12);
  for (double z : r.z_scores) EXPECT_LE(z, 4.0);
}

TEST(Scaling, MedianTimeDropsWithSigma) {
  EnsembleOptions o;
  const auto a = reduction_time_point(1.0, 1.0, 400, 1, o);
  const auto b = reduction_time_point(2.0, 1.0, 400, 2, o);
  ASSERT_TRUE(a.reduced());
  ASSERT_TRUE(b.reduced());
  EXPECT_NEAR(std::log(a.median_time / b.median_time) / std::log(2.0), 2.0, 0.3);
  EXPECT_THROW(reduction_time_point(1.0, 0.0, 10, 1, o), std::invalid_argument);
}

TEST(OutcomeCsv, Header) {
  const Operator h = Operator::diagonal({0.0, 1.0});
  const auto s = born_statistics(h, StateVector::from_weights({0.5, 0.5}), config_for(h), 20, 1);
  std::ostringstream os;
  write_outcome_csv(os, s);
  EXPECT_EQ(os.str().rfind("outcome,frequency,ci_lo,ci_hi\n", 0), 0u);
}
