#pragma once

// Two-subsystem algebra: clustering residuals of the noise and drift terms,
// and the mean-field (Hartree) evolution compared against the full system.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stochred/dynamics.hpp"
#include "stochred/linalg.hpp"
#include "stochred/noise.hpp"
#include "stochred/parallel.hpp"
#include "stochred/random.hpp"
#include "stochred/stats.hpp"

namespace stochred {

/// Largest product dimension for which the full evolution is run.
inline constexpr std::size_t kMaxFullDimension = 64;

struct CompositeSystem {
  Operator h1;
  Operator h2;
  Operator delta_h;  // on the product space
  double g = 1.0;

  CompositeSystem(Operator a, Operator b, Operator coupling, double scale = 1.0)
      : h1(std::move(a)), h2(std::move(b)), delta_h(std::move(coupling)), g(scale) {
    if (!h1.is_hermitian() || !h2.is_hermitian() || !delta_h.is_hermitian()) {
      throw std::invalid_argument("composite: H1, H2 and deltaH must be Hermitian");
    }
    if (delta_h.dim() != h1.dim() * h2.dim()) {
      throw std::invalid_argument("composite: deltaH dimension must be d1*d2");
    }
  }

  std::size_t d1() const { return h1.dim(); }
  std::size_t d2() const { return h2.dim(); }

  /// H1 x I + I x H2 + g deltaH.
  Matrix total() const {
    const auto n1 = static_cast<Eigen::Index>(d1());
    const auto n2 = static_cast<Eigen::Index>(d2());
    return kron(h1.matrix(), Matrix::Identity(n2, n2)) +
           kron(Matrix::Identity(n1, n1), h2.matrix()) + g * delta_h.matrix();
  }

  CompositeSystem with_coupling(double scale) const {
    CompositeSystem c = *this;
    c.g = scale;
    return c;
  }
};

namespace detail {

inline Matrix embed_first(const Matrix& a, std::size_t d2) {
  const auto n = static_cast<Eigen::Index>(d2);
  return kron(a, Matrix::Identity(n, n));
}

inline Matrix embed_second(const Matrix& b, std::size_t d1) {
  const auto n = static_cast<Eigen::Index>(d1);
  return kron(Matrix::Identity(n, n), b);
}

inline void check_pair(const DensityMatrix& r1, const DensityMatrix& r2, const Operator& h1,
                       const Operator& h2) {
  if (r1.dim() != h1.dim() || r2.dim() != h2.dim()) {
    throw std::invalid_argument("composite: state/Hamiltonian dimension mismatch");
  }
}

}  // namespace detail

/// ||N(r1 x r2, H1 + H2) - r2 N1(r1, H1) - r1 N2(r2, H2)||_F with the
/// single-system terms embedded in the product space.
inline double clustering_noise_residual(const DensityMatrix& rho1, const DensityMatrix& rho2,
                                        const Operator& h1, const Operator& h2,
                                        NoiseForm form) {
  detail::check_pair(rho1, rho2, h1, h2);
  const std::size_t d1 = rho1.dim(), d2 = rho2.dim();
  const Matrix rho = kron(rho1.matrix(), rho2.matrix());
  const Matrix h = detail::embed_first(h1.matrix(), d2) + detail::embed_second(h2.matrix(), d1);
  const Matrix n = detail::noise_coefficient(rho, h, form);
  const Matrix n1 = detail::noise_coefficient(rho1.matrix(), h1.matrix(), form);
  const Matrix n2 = detail::noise_coefficient(rho2.matrix(), h2.matrix(), form);
  return (n - kron(n1, rho2.matrix()) - kron(rho1.matrix(), n2)).norm();
}

/// ||N1(r1, H1) x N2(r2, H2) + [H1, r1] x [H2, r2]||_F.
inline double clustering_drift_residual(const DensityMatrix& rho1, const DensityMatrix& rho2,
                                        const Operator& h1, const Operator& h2,
                                        NoiseForm form) {
  detail::check_pair(rho1, rho2, h1, h2);
  const Matrix n1 = detail::noise_coefficient(rho1.matrix(), h1.matrix(), form);
  const Matrix n2 = detail::noise_coefficient(rho2.matrix(), h2.matrix(), form);
  const Matrix c1 = h1.matrix() * rho1.matrix() - rho1.matrix() * h1.matrix();
  const Matrix c2 = h2.matrix() * rho2.matrix() - rho2.matrix() * h2.matrix();
  return (kron(n1, n2) + kron(c1, c2)).norm();
}

/// Residuals at or below this are treated as exact zeros.
inline constexpr double kClusterZeroTolerance = 1e-12;
/// Residuals expected to be generically nonzero must exceed this.
inline constexpr double kClusterNonzeroFloor = 1e-6;

struct ClusterCase {
  std::string name;
  std::size_t instances = 0;
  double max_residual = 0.0;
  double min_residual = std::numeric_limits<double>::infinity();
  bool expect_zero = true;

  void add(double r) {
    ++instances;
    max_residual = std::max(max_residual, r);
    min_residual = std::min(min_residual, r);
  }
  bool pass() const {
    return expect_zero ? max_residual <= kClusterZeroTolerance
                       : min_residual > kClusterNonzeroFloor;
  }
};

namespace detail {

/// Random H = U diag(e) U^dagger and rho = U diag(p) U^dagger sharing U.
inline std::pair<Operator, DensityMatrix> commuting_pair(const std::vector<double>& e,
                                                         const std::vector<double>& p,
                                                         std::mt19937_64& rng) {
  const Matrix u = random_unitary(e.size(), rng);
  Matrix h = Matrix::Zero(u.rows(), u.cols());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto c = u.col(static_cast<Eigen::Index>(i));
    h += e[i] * c * c.adjoint();
  }
  h = 0.5 * (h + h.adjoint()).eval();
  return {Operator::hermitian(std::move(h)), DensityMatrix::from_populations(p, u)};
}

inline std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) s += (x = ex(rng));
  for (double& x : p) x /= s;
  return p;
}

}  // namespace detail

/// The exact clustering identities on random instances, plus the two
/// generic cases where the residual must not vanish. Subsystem dimensions
/// are drawn from [3, 4]; the pure-state noise identity uses [2, 8].
inline std::vector<ClusterCase> cluster_suite(std::size_t n_instances, std::size_t n_pairs,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dpick(3, 4), dwide(2, 8);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ClusterCase identity{"noise_form_identity_pure"};
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t d = dwide(rng);
    const auto rho = DensityMatrix::from_state(random_pure_state(d, rng));
    const Operator h = random_hermitian(d, rng);
    identity.add((noise_coefficient(rho, h, NoiseForm::anticommutator).matrix() -
                  noise_coefficient(rho, h, NoiseForm::double_commutator).matrix())
                     .norm());
  }

  ClusterCase noise_anti{"noise_anticommutator_any"};
  ClusterCase noise_dc{"noise_double_commutator_pure"};
  ClusterCase drift_comm{"drift_double_commutator_commuting"};
  ClusterCase drift_degen{"drift_anticommutator_degenerate"};
  ClusterCase noise_dc_mixed{"noise_double_commutator_mixed", 0, 0.0,
                             std::numeric_limits<double>::infinity(), false};
  ClusterCase drift_generic{"drift_generic_pure", 0, 0.0,
                            std::numeric_limits<double>::infinity(), false};
  for (std::size_t i = 0; i < n_instances; ++i) {
    const std::size_t d1 = dpick(rng), d2 = dpick(rng);
    const Operator h1 = random_hermitian(d1, rng);
    const Operator h2 = random_hermitian(d2, rng);

    noise_anti.add(clustering_noise_residual(random_density(d1, rng), random_density(d2, rng),
                                             h1, h2, NoiseForm::anticommutator));

    const auto p1 = DensityMatrix::from_state(random_pure_state(d1, rng));
    const auto p2 = DensityMatrix::from_state(random_pure_state(d2, rng));
    noise_dc.add(clustering_noise_residual(p1, p2, h1, h2, NoiseForm::double_commutator));
    drift_generic.add(clustering_drift_residual(p1, p2, h1, h2, NoiseForm::double_commutator));

    noise_dc_mixed.add(clustering_noise_residual(p1, DensityMatrix::maximally_mixed(d2), h1, h2,
                                                 NoiseForm::double_commutator));

    {
      std::vector<double> e(d2);
      for (double& x : e) x = gauss(rng);
      const auto [hc, rc] = detail::commuting_pair(e, detail::random_simplex(d2, rng), rng);
      drift_comm.add(clustering_drift_residual(random_density(d1, rng), rc, h1, hc,
                                               NoiseForm::double_commutator));
    }
    {
      // Two-fold degenerate lowest level; rho2 mixes within it only.
      std::vector<double> e(d2);
      const double level = gauss(rng);
      e[0] = e[1] = level;
      for (std::size_t k = 2; k < d2; ++k) e[k] = level + 1.0 + std::abs(gauss(rng));
      std::vector<double> p(d2, 0.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      p[0] = u(rng);
      p[1] = 1.0 - p[0];
      const auto [hd, rd] = detail::commuting_pair(e, p, rng);
      drift_degen.add(clustering_drift_residual(random_density(d1, rng), rd, h1, hd,
                                                NoiseForm::anticommutator));
    }
  }
  return {identity, noise_anti, noise_dc, drift_comm, drift_degen, noise_dc_mixed,
          drift_generic};
}

inline void write_cluster_csv(std::ostream& os, const std::vector<ClusterCase>& cases) {
  os << "case,instances,max_residual,min_residual,expect_zero,pass\n" << std::setprecision(17);
  for (const auto& c : cases) {
    os << c.name << ',' << c.instances << ',' << c.max_residual << ',' << c.min_residual << ','
       << (c.expect_zero ? 1 : 0) << ',' << (c.pass() ? 1 : 0) << '\n';
  }
}

struct HartreeState {
  DensityMatrix rho1;
  DensityMatrix rho2;
};

namespace detail {

struct HartreeWork {
  Matrix h1p, h2p;
};

/// Raw mean-field step on matrices; both subsystems share dw.
inline void hartree_step_raw(Matrix& r1, Matrix& r2, const CompositeSystem& sys,
                             double sigma, double dt, double dw, HartreeWork& w) {
  const std::size_t d1 = sys.d1(), d2 = sys.d2();
  const Matrix gdh = sys.g * sys.delta_h.matrix();
  // H1' = H1 + Tr2(rho2 dH), H2' = H2 + Tr1(rho1 dH).
  Matrix a = partial_trace(embed_second(r2, d1) * gdh, d1, d2, Keep::first);
  w.h1p = sys.h1.matrix() + 0.5 * (a + a.adjoint());
  Matrix b = partial_trace(embed_first(r1, d2) * gdh, d1, d2, Keep::second);
  w.h2p = sys.h2.matrix() + 0.5 * (b + b.adjoint());
  // Environment correction -(sigma^2/8) [Tr1(dH [H1', rho1]), rho2] dt.
  const Matrix k1 = w.h1p * r1 - r1 * w.h1p;
  const Matrix m = partial_trace(gdh * embed_first(k1, d2), d1, d2, Keep::second);
  Matrix r1n = density_step(r1, w.h1p, sigma, dt, dw, NoiseForm::anticommutator);
  Matrix r2n = density_step(r2, w.h2p, sigma, dt, dw, NoiseForm::anticommutator);
  r2n -= (0.125 * sigma * sigma * dt) * (m * r2 - r2 * m);
  hermitize_and_normalize(r1n);
  hermitize_and_normalize(r2n);
  r1 = std::move(r1n);
  r2 = std::move(r2n);
}

}  // namespace detail

/// One mean-field step of both subsystems with the shared increment dw.
inline HartreeState hartree_step(const DensityMatrix& rho1, const DensityMatrix& rho2,
                                 const CompositeSystem& sys, double sigma, double dt,
                                 double dw) {
  detail::check_pair(rho1, rho2, sys.h1, sys.h2);
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  Matrix r1 = rho1.matrix(), r2 = rho2.matrix();
  detail::HartreeWork w;
  detail::hartree_step_raw(r1, r2, sys, sigma, dt, dw, w);
  const double range = std::max(spectral_range(Operator(w.h1p)), spectral_range(Operator(w.h2p)));
  const double tol = psd_tolerance(sigma, range, dt);
  if (!detail::is_psd(r1, tol) || !detail::is_psd(r2, tol)) {
    throw NumericalError("hartree_step: state left the PSD cone; dt is too large");
  }
  return {DensityMatrix(std::move(r1), Purity::unknown, tol),
          DensityMatrix(std::move(r2), Purity::unknown, tol)};
}

struct HartreePoint {
  double g = 0.0;
  double mean_discrepancy = 0.0;
  double sem = 0.0;
  std::size_t n_failed = 0;
  std::string failure;
};

struct HartreeReport {
  std::vector<HartreePoint> points;
  double exponent = std::numeric_limits<double>::quiet_NaN();
  double dt = 0.0;
  std::size_t n_steps = 0;
};

/// For each g, evolves the full product-space density matrix and the
/// mean-field pair on the same noise path up to `horizon`, and averages
/// ||Tr2 rho_full(T) - rho1(T)||_F over trajectories. Every g uses the same
/// seeds and the same dt (set by the largest coupling), so the paths are
/// paired across couplings as well.
inline HartreeReport hartree_vs_full(const CompositeSystem& sys, const DensityMatrix& rho1,
                                     const DensityMatrix& rho2, double sigma, double horizon,
                                     const std::vector<double>& g_values, std::size_t n_traj,
                                     std::uint64_t base_seed, unsigned workers = 0,
                                     double dt = 0.0) {
  detail::check_pair(rho1, rho2, sys.h1, sys.h2);
  const std::size_t d1 = sys.d1(), d2 = sys.d2();
  if (d1 * d2 > kMaxFullDimension) {
    throw std::invalid_argument("hartree_vs_full: d1*d2 exceeds " +
                                std::to_string(kMaxFullDimension));
  }
  if (g_values.empty() || n_traj == 0 || !(horizon > 0.0)) {
    throw std::invalid_argument("hartree_vs_full: need g values, trajectories and a horizon");
  }
  double gmax = 0.0;
  for (double g : g_values) gmax = std::max(gmax, std::abs(g));
  const double range = spectral_range(Operator(sys.with_coupling(gmax).total()));
  HartreeReport rep;
  rep.dt = dt > 0.0 ? dt : default_dt(sigma, range);
  check_stability(sigma, range, rep.dt);
  rep.n_steps = static_cast<std::size_t>(std::ceil(horizon / rep.dt));
  rep.dt = horizon / static_cast<double>(rep.n_steps);
  const Matrix rho_full0 = kron(rho1.matrix(), rho2.matrix());

  for (double g : g_values) {
    const CompositeSystem s = sys.with_coupling(g);
    const Matrix h = s.total();
    std::vector<double> disc(n_traj, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errors(n_traj);
    parallel_for(n_traj, workers, [&](std::size_t i) {
      try {
        Matrix full = rho_full0;
        Matrix r1 = rho1.matrix(), r2 = rho2.matrix();
        detail::HartreeWork w;
        WienerStream noise(trajectory_seed(base_seed, i), rep.dt);
        for (std::size_t k = 0; k < rep.n_steps; ++k) {
          const double dw = noise.next();
          Matrix next = detail::density_step(full, h, sigma, rep.dt, dw,
                                             NoiseForm::anticommutator);
          detail::hermitize_and_normalize(next);
          full = std::move(next);
          detail::hartree_step_raw(r1, r2, s, sigma, rep.dt, dw, w);
        }
        disc[i] = (partial_trace(full, d1, d2, Keep::first) - r1).norm();
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    HartreePoint pt;
    pt.g = g;
    std::vector<double> ok;
    for (std::size_t i = 0; i < n_traj; ++i) {
      if (std::isnan(disc[i])) {
        ++pt.n_failed;
        if (pt.failure.empty()) pt.failure = errors[i];
      } else {
        ok.push_back(disc[i]);
      }
    }
    const auto ms = stats::mean_sem(ok);
    pt.mean_discrepancy = ms.mean;
    pt.sem = ms.sem;
    rep.points.push_back(pt);
  }

  std::vector<double> x, y;
  for (const auto& p : rep.points) {
    if (p.g > 0.0 && p.mean_discrepancy > 0.0 && p.n_failed == 0) {
      x.push_back(std::log(p.g));
      y.push_back(std::log(p.mean_discrepancy));
    }
  }
  if (x.size() >= 2) rep.exponent = stats::linear_fit(x, y).slope;
  return rep;
}

inline void write_hartree_csv(std::ostream& os, const HartreeReport& rep) {
  os << "g,mean_discrepancy,sem\n" << std::setprecision(17);
  for (const auto& p : rep.points) {
    os << p.g << ',' << p.mean_discrepancy << ',' << p.sem << '\n';
  }
}

}  // namespace stochred
