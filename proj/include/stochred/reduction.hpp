#pragma once

// Ensemble-level checks of the reduction dynamics. Ensembles are run in the
// Hamiltonian eigenbasis, where the state-vector and commuting-martingale
// steps are diagonal; this is the same equation in a different basis.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochred/dynamics.hpp"
#include "stochred/linalg.hpp"
#include "stochred/noise.hpp"
#include "stochred/observables.hpp"
#include "stochred/parallel.hpp"
#include "stochred/stats.hpp"

namespace stochred {

struct EnsembleOptions {
  /// Reduced once V <= epsilon * V(0).
  double epsilon = 0.01;
  /// An endpoint is classified only when one outcome holds more than this.
  double classify_threshold = 0.99;
  std::size_t max_steps = 10'000'000;
  /// Fraction of unreduced trajectories above which the run fails.
  double max_unreduced_fraction = 0.01;
  /// Relative degeneracy tolerance (negative: library default).
  double degeneracy_tol = -1.0;
  unsigned workers = 0;
  /// Half-width of the attached binomial intervals, in standard errors.
  double ci_z = 4.0;
};

inline constexpr int kNotReduced = -1;
inline constexpr int kAmbiguous = -2;

struct EnsembleStats {
  std::size_t n_traj = 0;
  double sigma = 0.0;
  double dt = 0.0;

  // Outcomes, one entry per eigenvalue group.
  std::vector<double> outcome_energies;
  std::vector<std::size_t> outcome_counts;
  std::vector<double> outcome_frequencies;  // over classified trajectories
  std::vector<stats::Interval> outcome_ci;
  std::size_t n_unreduced = 0;
  std::size_t n_ambiguous = 0;
  std::vector<int> outcomes;             // per trajectory
  std::vector<double> reduction_times;   // first passage to V <= eps V(0); NaN if none

  // Time series on the recording grid (empty when not recorded).
  std::vector<double> times;
  std::vector<double> ev, ev_sem, ev2;
  std::vector<double> ev_increment_sem;  // SEM of per-trajectory V(t_{k+1}) - V(t_k)

  std::size_t n_classified() const { return n_traj - n_unreduced - n_ambiguous; }
};

namespace detail {

struct ReductionRun {
  int outcome = kNotReduced;
  double first_passage = std::numeric_limits<double>::quiet_NaN();
  double final_time = 0.0;
  Vector amplitudes;
};

inline std::vector<double> group_populations(const Vector& c,
                                             const std::vector<std::size_t>& group_of,
                                             std::size_t n_groups) {
  std::vector<double> pop(n_groups, 0.0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double p = std::norm(c(i));
    pop[group_of[static_cast<std::size_t>(i)]] += p;
    total += p;
  }
  for (double& p : pop) p /= total;
  return pop;
}

inline int classify(const std::vector<double>& pop, double threshold) {
  const auto it = std::max_element(pop.begin(), pop.end());
  return *it > threshold ? static_cast<int>(it - pop.begin()) : kAmbiguous;
}

inline double population_variance(const Vector& c, const RealVector& e) {
  double n2 = 0.0, m1 = 0.0, m2 = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double p = std::norm(c(i));
    n2 += p;
    m1 += p * e(i);
    m2 += p * e(i) * e(i);
  }
  m1 /= n2;
  m2 /= n2;
  return std::max(0.0, m2 - m1 * m1);
}

/// Steps a state vector (eigenbasis amplitudes) until V <= eps V(0) and,
/// when `classify_endpoint`, until one group holds > threshold.
inline ReductionRun reduce_state(Vector c, const RealVector& e,
                                 const std::vector<std::size_t>& group_of,
                                 std::size_t n_groups, double sigma, double dt,
                                 std::uint64_t seed, const EnsembleOptions& o,
                                 bool classify_endpoint) {
  ReductionRun run;
  const double v0 = population_variance(c, e);
  const double target = o.epsilon * v0;
  const double vscale = std::max(1.0, e.cwiseAbs2().maxCoeff());
  auto done = [&](double v, double t) {
    if (v <= target || v0 <= 1e-15 * vscale) {
      if (std::isnan(run.first_passage)) run.first_passage = t;
      if (!classify_endpoint) return true;
      const int k = classify(group_populations(c, group_of, n_groups), o.classify_threshold);
      if (k >= 0) {
        run.outcome = k;
        return true;
      }
    }
    return false;
  };
  WienerStream noise(seed, dt);
  std::size_t step = 0;
  bool finished = done(v0, 0.0);
  while (!finished && step < o.max_steps) {
    state_step_diagonal(c, e, sigma, dt, noise.next(), true);
    ++step;
    finished = done(population_variance(c, e), static_cast<double>(step) * dt);
  }
  if (!finished && !std::isnan(run.first_passage)) run.outcome = kAmbiguous;
  run.final_time = static_cast<double>(step) * dt;
  run.amplitudes = std::move(c);
  return run;
}

inline void tally_outcomes(EnsembleStats& s, const std::vector<int>& outcomes,
                           std::size_t n_groups, double z) {
  s.outcomes = outcomes;
  s.outcome_counts.assign(n_groups, 0);
  for (int k : outcomes) {
    if (k == kNotReduced) {
      ++s.n_unreduced;
    } else if (k == kAmbiguous) {
      ++s.n_ambiguous;
    } else {
      ++s.outcome_counts[static_cast<std::size_t>(k)];
    }
  }
  const std::size_t nc = s.n_classified();
  s.outcome_frequencies.assign(n_groups, 0.0);
  s.outcome_ci.assign(n_groups, {});
  for (std::size_t g = 0; g < n_groups; ++g) {
    s.outcome_frequencies[g] =
        nc == 0 ? 0.0
                : static_cast<double>(s.outcome_counts[g]) / static_cast<double>(nc);
    s.outcome_ci[g] = stats::wilson_interval(s.outcome_counts[g], nc, z);
  }
}

inline void enforce_unreduced_budget(const EnsembleStats& s, const EnsembleOptions& o,
                                     const char* what) {
  const double frac = static_cast<double>(s.n_unreduced + s.n_ambiguous) /
                      static_cast<double>(std::max<std::size_t>(s.n_traj, 1));
  if (frac > o.max_unreduced_fraction) {
    throw NumericalError(std::string(what) + ": " + std::to_string(s.n_unreduced) +
                         " unreduced and " + std::to_string(s.n_ambiguous) +
                         " ambiguous of " + std::to_string(s.n_traj) +
                         " trajectories within the step budget");
  }
}

inline std::vector<std::size_t> group_index(const Spectrum& sp) {
  std::vector<std::size_t> g(sp.dim());
  for (std::size_t k = 0; k < sp.degeneracy_groups.size(); ++k) {
    for (std::size_t i : sp.degeneracy_groups[k]) g[i] = k;
  }
  return g;
}

inline std::vector<double> group_energies(const Spectrum& sp) {
  std::vector<double> out;
  for (const auto& grp : sp.degeneracy_groups) {
    double s = 0.0;
    for (std::size_t i : grp) s += sp.eigenvalues(static_cast<Eigen::Index>(i));
    out.push_back(s / static_cast<double>(grp.size()));
  }
  return out;
}

}  // namespace detail

/// Born weights of the degeneracy groups of H in state chi.
inline std::vector<double> born_weights(const Operator& h, const StateVector& chi,
                                        double degeneracy_tol = -1.0) {
  const Spectrum sp = eig_hermitian(h, degeneracy_tol);
  const Vector c = sp.eigenvectors.adjoint() * chi.amplitudes();
  return detail::group_populations(c, detail::group_index(sp), sp.degeneracy_groups.size());
}

/// Runs n_traj state-vector trajectories from chi0 to their reduction
/// endpoint and tallies which eigenvalue group each one selects.
inline EnsembleStats born_statistics(const Operator& h, const StateVector& chi0,
                                     const SdeConfig& cfg, std::size_t n_traj,
                                     std::uint64_t base_seed,
                                     const EnsembleOptions& o = {}) {
  if (chi0.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  if (n_traj == 0) throw std::invalid_argument("n_traj must be positive");
  const Spectrum sp = eig_hermitian(h, o.degeneracy_tol);
  detail::warn_stability(cfg.sigma, sp.range(), cfg.dt);
  const auto group_of = detail::group_index(sp);
  const std::size_t n_groups = sp.degeneracy_groups.size();
  const Vector c0 = sp.eigenvectors.adjoint() * chi0.amplitudes();

  std::vector<int> outcomes(n_traj);
  std::vector<double> times(n_traj);
  parallel_for(n_traj, o.workers, [&](std::size_t i) {
    const auto run = detail::reduce_state(c0, sp.eigenvalues, group_of, n_groups,
                                          cfg.sigma, cfg.dt,
                                          trajectory_seed(base_seed, i), o, true);
    outcomes[i] = run.outcome;
    times[i] = run.first_passage;
  });

  EnsembleStats s;
  s.n_traj = n_traj;
  s.sigma = cfg.sigma;
  s.dt = cfg.dt;
  s.outcome_energies = detail::group_energies(sp);
  s.reduction_times = std::move(times);
  detail::tally_outcomes(s, outcomes, n_groups, o.ci_z);
  detail::enforce_unreduced_budget(s, o, "born_statistics");
  return s;
}

/// Fixed-horizon ensemble recording V(t) every `stride` steps; fills the
/// E[V], E[V^2] series used by variance_decay_check.
inline EnsembleStats variance_ensemble(const Operator& h, const StateVector& chi0,
                                       const SdeConfig& cfg, std::size_t n_traj,
                                       std::uint64_t base_seed,
                                       const EnsembleOptions& o = {}) {
  if (chi0.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  if (n_traj == 0) throw std::invalid_argument("n_traj must be positive");
  if (cfg.record_stride == 0) throw std::invalid_argument("record_stride must be >= 1");
  const Spectrum sp = eig_hermitian(h, o.degeneracy_tol);
  detail::warn_stability(cfg.sigma, sp.range(), cfg.dt);
  const Vector c0 = sp.eigenvectors.adjoint() * chi0.amplitudes();
  const std::size_t n_rec = cfg.n_steps / cfg.record_stride + 1;

  std::vector<std::vector<double>> paths(n_traj);
  parallel_for(n_traj, o.workers, [&](std::size_t i) {
    std::vector<double> v;
    v.reserve(n_rec);
    Vector c = c0;
    WienerStream noise(trajectory_seed(base_seed, i), cfg.dt);
    v.push_back(detail::population_variance(c, sp.eigenvalues));
    for (std::size_t k = 1; k < n_rec * cfg.record_stride; ++k) {
      detail::state_step_diagonal(c, sp.eigenvalues, cfg.sigma, cfg.dt, noise.next(),
                                  cfg.scheme == Scheme::euler_renormalized);
      if (k % cfg.record_stride == 0) {
        v.push_back(detail::population_variance(c, sp.eigenvalues));
      }
    }
    paths[i] = std::move(v);
  });

  EnsembleStats s;
  s.n_traj = n_traj;
  s.sigma = cfg.sigma;
  s.dt = cfg.dt;
  s.outcome_energies = detail::group_energies(sp);
  const double n = static_cast<double>(n_traj);
  for (std::size_t k = 0; k < n_rec; ++k) {
    double m1 = 0.0, m2 = 0.0;
    for (const auto& p : paths) {
      m1 += p[k];
      m2 += p[k] * p[k];
    }
    m1 /= n;
    m2 /= n;
    double ss = 0.0;
    for (const auto& p : paths) ss += (p[k] - m1) * (p[k] - m1);
    s.times.push_back(static_cast<double>(k * cfg.record_stride) * cfg.dt);
    s.ev.push_back(m1);
    s.ev2.push_back(m2);
    s.ev_sem.push_back(n > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0);
    if (k + 1 < n_rec) {
      double d1 = 0.0;
      for (const auto& p : paths) d1 += p[k + 1] - p[k];
      d1 /= n;
      double dss = 0.0;
      for (const auto& p : paths) {
        const double d = p[k + 1] - p[k] - d1;
        dss += d * d;
      }
      s.ev_increment_sem.push_back(n > 1 ? std::sqrt(dss / (n - 1.0) / n) : 0.0);
    }
  }
  return s;
}

struct VarianceDecayReport {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_points = 0;
  double max_abs_lhs = 0.0;  // max |dE[V]/dt|
  double max_abs_rhs = 0.0;  // max |sigma^2 E[V^2]|
  bool degenerate = false;   // both sides vanish identically
  bool monotone = true;      // no increase beyond 4 paired SEM
  double worst_increase_z = 0.0;
};

inline constexpr std::size_t kMinVarianceEnsemble = 100;

/// Regresses the finite-difference rate dE[V]/dt on -sigma^2 E[V^2]
/// (trapezoidal over each grid interval) through the origin. The slope is
/// 1 when the expected variance obeys dE[V] = -sigma^2 E[V^2] dt.
inline VarianceDecayReport variance_decay_check(const EnsembleStats& s) {
  if (s.n_traj < kMinVarianceEnsemble) {
    throw std::invalid_argument("variance_decay_check needs at least " +
                                std::to_string(kMinVarianceEnsemble) + " trajectories");
  }
  if (s.ev.size() < 3) throw std::invalid_argument("variance series too short");
  VarianceDecayReport r;
  std::vector<double> x, y;
  for (std::size_t k = 0; k + 1 < s.ev.size(); ++k) {
    const double dt = s.times[k + 1] - s.times[k];
    const double lhs = (s.ev[k + 1] - s.ev[k]) / dt;
    const double rhs = -s.sigma * s.sigma * 0.5 * (s.ev2[k] + s.ev2[k + 1]);
    x.push_back(rhs);
    y.push_back(lhs);
    r.max_abs_lhs = std::max(r.max_abs_lhs, std::abs(lhs));
    r.max_abs_rhs = std::max(r.max_abs_rhs, std::abs(rhs));
    const double inc = s.ev[k + 1] - s.ev[k];
    const double sem = s.ev_increment_sem.empty() ? 0.0 : s.ev_increment_sem[k];
    if (inc > 0.0) {
      const double z = sem > 0.0 ? inc / sem : std::numeric_limits<double>::infinity();
      r.worst_increase_z = std::max(r.worst_increase_z, z);
      if (z > 4.0) r.monotone = false;
    }
  }
  r.n_points = x.size();
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  if (sxx == 0.0) {
    r.degenerate = r.max_abs_lhs == 0.0;
    return r;
  }
  r.slope = sxy / sxx;
  double ss = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - r.slope * x[k];
    ss += e * e;
  }
  r.slope_se = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1) / sxx) : 0.0;
  r.ci_lo = r.slope - 1.96 * r.slope_se;
  r.ci_hi = r.slope + 1.96 * r.slope_se;
  return r;
}

struct GibbsSpec {
  double beta = 0.0;
  Operator h;
};

/// exp(-beta H) / Z.
inline DensityMatrix gibbs_state(const GibbsSpec& g) {
  const Spectrum sp = eig_hermitian(g.h);
  const double e0 = sp.eigenvalues.minCoeff();
  std::vector<double> w(sp.dim());
  double z = 0.0;
  for (std::size_t i = 0; i < sp.dim(); ++i) {
    w[i] = std::exp(-g.beta * (sp.eigenvalues(static_cast<Eigen::Index>(i)) - e0));
    z += w[i];
  }
  for (double& x : w) x /= z;
  return DensityMatrix::from_populations(w, sp.eigenvectors);
}

struct StatdistReport {
  EnsembleStats stats;
  std::vector<double> gibbs_group_weights;
  std::vector<double> times;
  std::vector<double> mean_deviation;  // ||mean rho(t) - f(H)||_F
  std::vector<double> deviation_sem;   // Frobenius SEM of mean rho(t)
  double sup_deviation_ratio = 0.0;    // max_t deviation / SEM
  /// Smallest population of the selected group over classified endpoints.
  double min_final_group_population = 1.0;
  /// Trajectories ending in a multi-state group, and the worst relative
  /// change of the intra-group population ratios there.
  std::size_t n_degenerate_endpoints = 0;
  double max_intra_group_ratio_error = 0.0;
};

/// Evolves rho0 = f(H) under the commuting martingale equation for each
/// trajectory until reduction; records the ensemble mean of rho(t) on the
/// grid k * record_stride * dt, k <= n_steps / record_stride (trajectories
/// that have reduced are held at their endpoint, i.e. the stopped process).
inline constexpr double kDeviationFloor = 1e-12;

inline StatdistReport statdist_martingale_run(const GibbsSpec& gibbs, const SdeConfig& cfg,
                                              std::size_t n_traj, std::uint64_t base_seed,
                                              const EnsembleOptions& o = {}) {
  if (n_traj == 0) throw std::invalid_argument("n_traj must be positive");
  if (cfg.record_stride == 0) throw std::invalid_argument("record_stride must be >= 1");
  const Spectrum sp = eig_hermitian(gibbs.h, o.degeneracy_tol);
  detail::warn_stability(cfg.sigma, sp.range(), cfg.dt);
  const auto group_of = detail::group_index(sp);
  const std::size_t n_groups = sp.degeneracy_groups.size();
  const auto d = static_cast<Eigen::Index>(sp.dim());
  const RealVector& e = sp.eigenvalues;

  RealVector p0(d);
  {
    const double e0 = e.minCoeff();
    for (Eigen::Index i = 0; i < d; ++i) p0(i) = std::exp(-gibbs.beta * (e(i) - e0));
    p0 /= p0.sum();
  }
  const std::size_t n_rec = cfg.n_steps / cfg.record_stride + 1;

  struct Run {
    int outcome = kNotReduced;
    double first_passage = std::numeric_limits<double>::quiet_NaN();
    RealVector final_p;
    std::vector<RealVector> recorded;
  };
  std::vector<Run> runs(n_traj);
  const double v0 = variance(p0, e);
  const double target = o.epsilon * v0;

  parallel_for(n_traj, o.workers, [&](std::size_t i) {
    Run run;
    run.recorded.reserve(n_rec);
    RealVector p = p0;
    WienerStream noise(trajectory_seed(base_seed, i), cfg.dt);
    bool stopped = false;
    auto check = [&](std::size_t step) {
      const double v = variance(p, e);
      if (v <= target || v0 == 0.0) {
        if (std::isnan(run.first_passage)) {
          run.first_passage = static_cast<double>(step) * cfg.dt;
        }
        std::vector<double> pop(n_groups, 0.0);
        for (Eigen::Index k = 0; k < d; ++k) pop[group_of[static_cast<std::size_t>(k)]] += p(k);
        const int g = detail::classify(pop, o.classify_threshold);
        if (g >= 0) {
          run.outcome = g;
          stopped = true;
        }
      }
    };
    run.recorded.push_back(p);
    check(0);
    std::size_t step = 0;
    while (step < o.max_steps && (!stopped || run.recorded.size() < n_rec)) {
      if (!stopped) {
        detail::martingale_step_diagonal(p, e, cfg.sigma, noise.next());
      }
      ++step;
      if (!stopped) check(step);
      if (step % cfg.record_stride == 0 && run.recorded.size() < n_rec) {
        run.recorded.push_back(p);
      }
    }
    while (run.recorded.size() < n_rec) run.recorded.push_back(p);
    if (!stopped && !std::isnan(run.first_passage)) run.outcome = kAmbiguous;
    run.final_p = p;
    runs[i] = std::move(run);
  });

  StatdistReport rep;
  auto& s = rep.stats;
  s.n_traj = n_traj;
  s.sigma = cfg.sigma;
  s.dt = cfg.dt;
  s.outcome_energies = detail::group_energies(sp);
  std::vector<int> outcomes(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    outcomes[i] = runs[i].outcome;
    s.reduction_times.push_back(runs[i].first_passage);
  }
  detail::tally_outcomes(s, outcomes, n_groups, o.ci_z);

  rep.gibbs_group_weights.assign(n_groups, 0.0);
  for (Eigen::Index k = 0; k < d; ++k) {
    rep.gibbs_group_weights[group_of[static_cast<std::size_t>(k)]] += p0(k);
  }

  const double n = static_cast<double>(n_traj);
  for (std::size_t k = 0; k < n_rec; ++k) {
    RealVector mean = RealVector::Zero(d);
    for (const auto& r : runs) mean += r.recorded[k];
    mean /= n;
    RealVector var = RealVector::Zero(d);
    for (const auto& r : runs) var += (r.recorded[k] - mean).cwiseAbs2();
    const double sem = n > 1 ? std::sqrt(var.sum() / (n - 1.0) / n) : 0.0;
    const double dev = (mean - p0).norm();
    rep.times.push_back(static_cast<double>(k * cfg.record_stride) * cfg.dt);
    rep.mean_deviation.push_back(dev);
    rep.deviation_sem.push_back(sem);
    // Floor keeps rounding noise at t = 0 from dominating the ratio.
    rep.sup_deviation_ratio =
        std::max(rep.sup_deviation_ratio, dev / std::max(sem, kDeviationFloor));
  }

  for (const auto& r : runs) {
    if (r.outcome < 0) continue;
    const auto& grp = sp.degeneracy_groups[static_cast<std::size_t>(r.outcome)];
    double gp = 0.0;
    for (std::size_t i : grp) gp += r.final_p(static_cast<Eigen::Index>(i));
    rep.min_final_group_population = std::min(rep.min_final_group_population, gp);
    if (grp.size() > 1) {
      ++rep.n_degenerate_endpoints;
      const auto a = static_cast<Eigen::Index>(grp.front());
      for (std::size_t j = 1; j < grp.size(); ++j) {
        const auto b = static_cast<Eigen::Index>(grp[j]);
        const double r0 = p0(b) / p0(a);
        const double r1 = r.final_p(b) / r.final_p(a);
        rep.max_intra_group_ratio_error =
            std::max(rep.max_intra_group_ratio_error, std::abs(r1 - r0) / r0);
      }
    }
  }
  detail::enforce_unreduced_budget(s, o, "statdist_martingale_run");
  return rep;
}

/// Superposition alpha |transmitted> + beta sum_l c_l |l>. The transmitted
/// branch may span several (near-)degenerate states.
struct LudersSpec {
  Complex alpha{1.0, 0.0};
  Complex beta{0.0, 0.0};
  std::vector<Complex> transmitted_amplitudes{Complex(1.0, 0.0)};
  std::vector<double> transmitted_energies{0.0};
  std::vector<Complex> branch_amplitudes;  // c_l
  std::vector<double> branch_energies;
};

struct LudersReport {
  std::vector<double> expected;  // |alpha|^2, |beta c_l|^2 ...
  EnsembleStats stats;           // outcome 0 = transmission
  std::vector<double> z_scores;
  std::size_t n_transmitted = 0;
  double min_fidelity = 1.0;
  double mean_fidelity = 1.0;
  double max_phase_error = 0.0;  // rad, first two transmitted components
  double separation_ratio = 0.0; // intra-branch spread / inter-branch gap
};

/// Largest intra-branch energy spread allowed, relative to the smallest
/// separation between branches.
inline constexpr double kNearDegenerateRatio = 1e-3;

inline LudersReport luders_scenario(const LudersSpec& spec, const SdeConfig& cfg,
                                    std::size_t n_traj, std::uint64_t base_seed,
                                    const EnsembleOptions& o = {}) {
  const std::size_t n_t = spec.transmitted_amplitudes.size();
  const std::size_t n_l = spec.branch_amplitudes.size();
  if (n_t == 0 || spec.transmitted_energies.size() != n_t ||
      spec.branch_energies.size() != n_l) {
    throw std::invalid_argument("luders: amplitude/energy lists do not match");
  }
  if (n_traj == 0) throw std::invalid_argument("n_traj must be positive");
  double tnorm = 0.0;
  for (const auto& a : spec.transmitted_amplitudes) tnorm += std::norm(a);
  double lsum = 0.0;
  for (const auto& c : spec.branch_amplitudes) lsum += std::norm(c);
  const double total = std::norm(spec.alpha) + std::norm(spec.beta) * lsum;
  if (std::abs(total - 1.0) > 1e-10 || std::abs(tnorm - 1.0) > 1e-10) {
    throw std::invalid_argument(
        "luders: need |alpha|^2 + |beta|^2 sum|c_l|^2 = 1 and a normalized "
        "transmitted branch");
  }

  // Branch groups: 0 = transmitted states, l+1 = branch l.
  std::vector<double> energies;
  std::vector<std::size_t> group_of;
  Vector c(static_cast<Eigen::Index>(n_t + n_l));
  for (std::size_t j = 0; j < n_t; ++j) {
    energies.push_back(spec.transmitted_energies[j]);
    group_of.push_back(0);
    c(static_cast<Eigen::Index>(j)) = spec.alpha * spec.transmitted_amplitudes[j];
  }
  for (std::size_t l = 0; l < n_l; ++l) {
    energies.push_back(spec.branch_energies[l]);
    group_of.push_back(l + 1);
    c(static_cast<Eigen::Index>(n_t + l)) = spec.beta * spec.branch_amplitudes[l];
  }
  const auto [tmin, tmax] = std::minmax_element(spec.transmitted_energies.begin(),
                                                spec.transmitted_energies.end());
  double gap = std::numeric_limits<double>::infinity();
  std::vector<double> centers{0.5 * (*tmin + *tmax)};
  for (double el : spec.branch_energies) centers.push_back(el);
  for (std::size_t a = 0; a < centers.size(); ++a) {
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      gap = std::min(gap, std::abs(centers[a] - centers[b]));
    }
  }
  LudersReport rep;
  rep.separation_ratio = n_l == 0 ? 0.0 : (*tmax - *tmin) / gap;
  if (rep.separation_ratio > kNearDegenerateRatio) {
    throw std::invalid_argument(
        "luders: transmitted branch spread is " + std::to_string(rep.separation_ratio) +
        " of the branch separation (limit 1e-3); reduction would stall");
  }

  RealVector e(static_cast<Eigen::Index>(energies.size()));
  for (std::size_t i = 0; i < energies.size(); ++i) e(static_cast<Eigen::Index>(i)) = energies[i];
  const double range = e.maxCoeff() - e.minCoeff();
  detail::warn_stability(cfg.sigma, range, cfg.dt);

  rep.expected.push_back(std::norm(spec.alpha));
  for (const auto& cl : spec.branch_amplitudes) rep.expected.push_back(std::norm(spec.beta * cl));

  const std::size_t n_groups = n_l + 1;
  std::vector<int> outcomes(n_traj);
  std::vector<double> times(n_traj), fidelity(n_traj, 1.0), phase_err(n_traj, 0.0);
  parallel_for(n_traj, o.workers, [&](std::size_t i) {
    const auto run = detail::reduce_state(c, e, group_of, n_groups, cfg.sigma, cfg.dt,
                                          trajectory_seed(base_seed, i), o, true);
    outcomes[i] = run.outcome;
    times[i] = run.first_passage;
    if (run.outcome != 0) return;
    // Overlap with the freely evolved transmitted branch.
    const Vector& f = run.amplitudes;
    Complex overlap = 0.0;
    for (std::size_t j = 0; j < n_t; ++j) {
      const Complex expect = spec.transmitted_amplitudes[j] *
                             std::exp(-kI * spec.transmitted_energies[j] * run.final_time);
      overlap += std::conj(expect) * f(static_cast<Eigen::Index>(j));
    }
    fidelity[i] = std::norm(overlap) / f.squaredNorm();
    if (n_t >= 2) {
      const Complex got = f(1) * std::conj(f(0));
      const Complex want = spec.transmitted_amplitudes[1] *
                           std::conj(spec.transmitted_amplitudes[0]) *
                           std::exp(-kI * (spec.transmitted_energies[1] -
                                           spec.transmitted_energies[0]) *
                                    run.final_time);
      phase_err[i] = std::abs(std::arg(got * std::conj(want)));
    }
  });

  rep.stats.n_traj = n_traj;
  rep.stats.sigma = cfg.sigma;
  rep.stats.dt = cfg.dt;
  rep.stats.outcome_energies = centers;
  rep.stats.reduction_times = times;
  detail::tally_outcomes(rep.stats, outcomes, n_groups, o.ci_z);
  const std::size_t nc = rep.stats.n_classified();
  for (std::size_t g = 0; g < n_groups; ++g) {
    rep.z_scores.push_back(stats::binomial_z(rep.stats.outcome_frequencies[g],
                                             rep.expected[g], nc));
  }
  double fsum = 0.0;
  for (std::size_t i = 0; i < n_traj; ++i) {
    if (outcomes[i] != 0) continue;
    ++rep.n_transmitted;
    fsum += fidelity[i];
    rep.min_fidelity = std::min(rep.min_fidelity, fidelity[i]);
    rep.max_phase_error = std::max(rep.max_phase_error, phase_err[i]);
  }
  rep.mean_fidelity = rep.n_transmitted ? fsum / static_cast<double>(rep.n_transmitted) : 1.0;
  detail::enforce_unreduced_budget(rep.stats, o, "luders_scenario");
  return rep;
}

struct ScalingPoint {
  double sigma = 0.0;
  double delta_e = 0.0;
  double dt = 0.0;
  double median_time = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_reduced = 0;
  std::size_t n_traj = 0;
  bool reduced() const { return 2 * n_reduced > n_traj; }
};

struct ScalingReport {
  std::vector<ScalingPoint> sigma_scan;  // at fixed delta_e
  std::vector<ScalingPoint> energy_scan; // at fixed sigma
  double sigma_exponent = std::numeric_limits<double>::quiet_NaN();
  double energy_exponent = std::numeric_limits<double>::quiet_NaN();
};

/// Median first-passage time to V <= eps V(0) for the equal two-level
/// superposition with gap delta_e. dt <= 0 selects the default step.
inline ScalingPoint reduction_time_point(double sigma, double delta_e, std::size_t n_traj,
                                         std::uint64_t seed, const EnsembleOptions& o,
                                         double dt = 0.0) {
  if (delta_e <= 0.0) throw std::invalid_argument("delta_e must be positive");
  ScalingPoint pt;
  pt.sigma = sigma;
  pt.delta_e = delta_e;
  pt.dt = dt > 0.0 ? dt : default_dt(sigma, delta_e);
  pt.n_traj = n_traj;
  check_stability(sigma, delta_e, pt.dt);
  RealVector e(2);
  e << 0.0, delta_e;
  Vector c(2);
  c << std::sqrt(0.5), std::sqrt(0.5);
  const std::vector<std::size_t> group_of{0, 1};
  std::vector<double> t(n_traj);
  parallel_for(n_traj, o.workers, [&](std::size_t i) {
    t[i] = detail::reduce_state(c, e, group_of, 2, sigma, pt.dt,
                                trajectory_seed(seed, i), o, false)
               .first_passage;
  });
  std::vector<double> reduced;
  for (double x : t) {
    if (!std::isnan(x)) reduced.push_back(x);
  }
  pt.n_reduced = reduced.size();
  if (pt.reduced()) {
    // Unreduced runs are slower than every reduced one, so the median of
    // the full sample is the order statistic at n/2 of the sorted times.
    std::sort(reduced.begin(), reduced.end());
    std::vector<double> all = reduced;
    all.resize(n_traj, std::numeric_limits<double>::infinity());
    pt.median_time = stats::median(all);
  }
  return pt;
}

inline ScalingReport reduction_time_scaling(const std::vector<double>& delta_e_values,
                                            const std::vector<double>& sigma_values,
                                            double sigma_fixed, double delta_e_fixed,
                                            std::size_t n_traj, std::uint64_t base_seed,
                                            const EnsembleOptions& o = {}) {
  ScalingReport rep;
  std::uint64_t point = 0;
  for (double s : sigma_values) {
    rep.sigma_scan.push_back(reduction_time_point(
        s, delta_e_fixed, n_traj, trajectory_seed(base_seed, 1'000'000 + point++), o));
  }
  for (double de : delta_e_values) {
    rep.energy_scan.push_back(reduction_time_point(
        sigma_fixed, de, n_traj, trajectory_seed(base_seed, 1'000'000 + point++), o));
  }
  auto exponent = [](const std::vector<ScalingPoint>& pts, bool by_sigma) {
    std::vector<double> x, y;
    for (const auto& p : pts) {
      if (!p.reduced()) continue;
      x.push_back(std::log(by_sigma ? p.sigma : p.delta_e));
      y.push_back(std::log(p.median_time));
    }
    return x.size() >= 2 ? stats::linear_fit(x, y).slope
                         : std::numeric_limits<double>::quiet_NaN();
  };
  rep.sigma_exponent = exponent(rep.sigma_scan, true);
  rep.energy_exponent = exponent(rep.energy_scan, false);
  return rep;
}

// CSV writers. Headers are part of the output contract.

inline void write_outcome_csv(std::ostream& os, const EnsembleStats& s) {
  os << "outcome,frequency,ci_lo,ci_hi\n" << std::setprecision(17);
  for (std::size_t g = 0; g < s.outcome_frequencies.size(); ++g) {
    os << g << ',' << s.outcome_frequencies[g] << ',' << s.outcome_ci[g].lo << ','
       << s.outcome_ci[g].hi << '\n';
  }
}

inline void write_variance_csv(std::ostream& os, const EnsembleStats& s) {
  os << "t,EV,EV_sem,EV2\n" << std::setprecision(17);
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    os << s.times[k] << ',' << s.ev[k] << ',' << s.ev_sem[k] << ',' << s.ev2[k] << '\n';
  }
}

}  // namespace stochred
