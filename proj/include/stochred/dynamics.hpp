#pragma once

// Integrators for the energy-driven stochastic equations:
//
//   state vector   d chi = [(-iH - s^2/8 (H-<H>)^2) dt + s/2 (H-<H>) dW] chi
//   density        d rho = -i[H,rho] dt - s^2/8 [H,[H,rho]] dt + s/2 N(rho,H) dW
//   commuting      d rho = s/2 ({rho,H} - 2 rho Tr(rho H)) dW      ([rho,H] = 0)
//   expectation    d E   = -i[H,E] dt - s^2/8 [H,[H,E]] dt
//
// All steppers are explicit Euler-Maruyama in Ito form and evaluate <H> on
// the incoming state.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "stochred/linalg.hpp"
#include "stochred/noise.hpp"
#include "stochred/observables.hpp"

namespace stochred {

enum class Scheme { euler_maruyama, euler_renormalized };
enum class NoiseForm { anticommutator, double_commutator };

/// sigma^2 * (spectral range)^2 * dt above which a step is refused.
inline constexpr double kStabilityLimit = 0.1;
/// Above this a warning is emitted.
inline constexpr double kStabilityWarning = 0.01;
/// Target value of sigma^2 * range^2 * dt used to pick a default dt.
inline constexpr double kDefaultStepParameter = 1e-3;
/// Slack on the smallest eigenvalue of a stepped density, in units of
/// sigma^2 * range^2 * dt. Each Euler-Maruyama step replaces dW^2 by dt,
/// a zero-mean O(dt) kick orthogonal to the state; along a trajectory the
/// kicks random-walk but stay within a few units of sigma^2 R^2 dt.
inline constexpr double kPsdSlack = 25.0;
/// Plain Euler-Maruyama state vectors are not renormalized; a norm drift
/// beyond this is treated as a blown-up integration.
inline constexpr double kUnrenormalizedNormTolerance = 0.5;

struct SdeConfig {
  double sigma = 1.0;
  double dt = 1e-3;
  std::size_t n_steps = 1000;
  Scheme scheme = Scheme::euler_renormalized;
  NoiseForm noise_form = NoiseForm::anticommutator;
  std::size_t record_stride = 1;
};

inline double stability_parameter(double sigma, double range, double dt) {
  return sigma * sigma * range * range * dt;
}

/// Throws when sigma^2 R^2 dt > 0.1; returns true when it exceeds 0.01.
inline bool check_stability(double sigma, double range, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("dt must be positive");
  }
  if (sigma < 0.0) throw std::invalid_argument("sigma must be nonnegative");
  const double s = stability_parameter(sigma, range, dt);
  if (s > kStabilityLimit) {
    throw std::invalid_argument(
        "stability bound violated: sigma^2 * range^2 * dt = " + std::to_string(s) +
        " > " + std::to_string(kStabilityLimit) + "; reduce dt");
  }
  return s > kStabilityWarning;
}

/// dt such that sigma^2 R^2 dt = 1e-3 (falls back to R^2 dt, then dt).
inline double default_dt(double sigma, double range) {
  double scale = sigma * sigma * range * range;
  if (!(scale > 0.0)) scale = range * range;
  if (!(scale > 0.0)) scale = 1.0;
  return kDefaultStepParameter / scale;
}

inline double psd_tolerance(double sigma, double range, double dt) {
  return DensityMatrix::kPsdTolerance +
         kPsdSlack * stability_parameter(sigma, range, dt);
}

namespace detail {

inline void warn_stability(double sigma, double range, double dt) {
  if (check_stability(sigma, range, dt)) {
    std::clog << "warning: sigma^2 * range^2 * dt = "
              << stability_parameter(sigma, range, dt)
              << " exceeds " << kStabilityWarning << '\n';
  }
}

/// Scratch space so the hot loop does not allocate.
struct VectorWork {
  Vector hc, u, hu;
};

/// One state-vector step for a general Hamiltonian matrix; updates `c`.
inline void state_step(Vector& c, const Matrix& h, double sigma, double dt,
                       double dw, bool renormalize, VectorWork& w) {
  w.hc.noalias() = h * c;
  const double n2 = c.squaredNorm();
  const double e = c.dot(w.hc).real() / n2;
  w.u = w.hc - e * c;             // (H - <H>) chi
  w.hu.noalias() = h * w.u;
  w.hu -= e * w.u;                // (H - <H>)^2 chi
  c += dt * (-kI * w.hc - (0.125 * sigma * sigma) * w.hu) + (0.5 * sigma * dw) * w.u;
  if (renormalize) c /= c.norm();
}

/// Same step for a diagonal Hamiltonian with eigenvalues `e`.
inline void state_step_diagonal(Vector& c, const RealVector& e, double sigma,
                                double dt, double dw, bool renormalize) {
  const auto d = c.size();
  double n2 = 0.0, mean = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double p = std::norm(c(i));
    n2 += p;
    mean += p * e(i);
  }
  mean /= n2;
  const double drift_scale = 0.125 * sigma * sigma * dt;
  const double noise_scale = 0.5 * sigma * dw;
  double out2 = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double x = e(i) - mean;
    c(i) *= Complex(1.0 - drift_scale * x * x + noise_scale * x, -e(i) * dt);
    out2 += std::norm(c(i));
  }
  if (renormalize) c /= std::sqrt(out2);
}

inline Matrix noise_coefficient(const Matrix& rho, const Matrix& h, NoiseForm form) {
  if (form == NoiseForm::anticommutator) {
    const Matrix rh = rho * h;
    const Complex tr = rh.trace();
    return rh + rh.adjoint() - (2.0 * tr.real()) * rho;
  }
  const Matrix c = rho * h - h * rho;  // [rho, H]
  return rho * c - c * rho;            // [rho, [rho, H]]
}

inline void hermitize_and_normalize(Matrix& rho) {
  rho = 0.5 * (rho + rho.adjoint()).eval();
  const double tr = rho.trace().real();
  if (!(tr > 0.0) || !std::isfinite(tr)) {
    throw NumericalError("density step produced non-positive trace");
  }
  rho /= tr;
}

/// Raw density step (Hermitized, trace renormalized, no PSD check).
inline Matrix density_step(const Matrix& rho, const Matrix& h, double sigma,
                           double dt, double dw, NoiseForm form) {
  const Matrix comm = h * rho - rho * h;
  const Matrix dcomm = h * comm - comm * h;
  Matrix out = rho - (kI * dt) * comm - (0.125 * sigma * sigma * dt) * dcomm +
               (0.5 * sigma * dw) * noise_coefficient(rho, h, form);
  hermitize_and_normalize(out);
  return out;
}

/// True when rho + tol*I admits a Cholesky factorization.
inline bool is_psd(const Matrix& rho, double tol) {
  const auto n = rho.rows();
  Eigen::LLT<Matrix> llt(rho + tol * Matrix::Identity(n, n));
  return llt.info() == Eigen::Success;
}

/// Diagonal form of the commuting martingale step on populations `p`.
inline void martingale_step_diagonal(RealVector& p, const RealVector& e,
                                     double sigma, double dw) {
  const double mean = p.dot(e) / p.sum();
  const double k = sigma * dw;
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) *= 1.0 + k * (e(i) - mean);
  p /= p.sum();
}

}  // namespace detail

/// N(rho, H): {rho,H} - 2 rho Tr(rho H) or [rho,[rho,H]].
inline Operator noise_coefficient(const DensityMatrix& rho, const Operator& h,
                                  NoiseForm form) {
  if (rho.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  return Operator(detail::noise_coefficient(rho.matrix(), h.matrix(), form));
}

inline StateVector step_state_vector(const StateVector& chi, const Operator& h,
                                     double sigma, double dt, double dw,
                                     Scheme scheme = Scheme::euler_renormalized) {
  if (chi.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  if (!h.is_hermitian()) throw std::invalid_argument("H must be Hermitian");
  detail::warn_stability(sigma, spectral_range(h), dt);
  Vector c = chi.amplitudes();
  detail::VectorWork w;
  detail::state_step(c, h.matrix(), sigma, dt, dw,
                     scheme == Scheme::euler_renormalized, w);
  return scheme == Scheme::euler_renormalized
             ? StateVector(std::move(c))
             : StateVector(std::move(c), kUnrenormalizedNormTolerance);
}

inline DensityMatrix step_density(const DensityMatrix& rho, const Operator& h,
                                  double sigma, double dt, double dw,
                                  NoiseForm form = NoiseForm::anticommutator) {
  if (rho.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  if (!h.is_hermitian()) throw std::invalid_argument("H must be Hermitian");
  const double range = spectral_range(h);
  detail::warn_stability(sigma, range, dt);
  Matrix out = detail::density_step(rho.matrix(), h.matrix(), sigma, dt, dw, form);
  const double tol = psd_tolerance(sigma, range, dt);
  if (!detail::is_psd(out, tol)) {
    throw NumericalError(
        "density step left the positive cone (smallest eigenvalue " +
        std::to_string(DensityMatrix::min_eigenvalue(out)) +
        "); dt = " + std::to_string(dt) + " is too large");
  }
  return DensityMatrix(std::move(out), Purity::unknown, tol);
}

/// Relative commutator tolerance used by the commuting specialization.
inline constexpr double kCommutingTolerance = 1e-10;

inline DensityMatrix step_commuting_martingale(const DensityMatrix& rho,
                                               const Operator& h, double sigma,
                                               double dt, double dw) {
  if (rho.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  if (!h.is_hermitian()) throw std::invalid_argument("H must be Hermitian");
  const Matrix& r = rho.matrix();
  const Matrix& hm = h.matrix();
  const double defect = (r * hm - hm * r).norm();
  if (defect > kCommutingTolerance * std::max(1.0, hm.norm())) {
    throw std::invalid_argument(
        "commuting martingale step requires [rho, H] = 0 (defect " +
        std::to_string(defect) + ")");
  }
  detail::warn_stability(sigma, spectral_range(h), dt);
  Matrix out = r + (0.5 * sigma * dw) *
                       detail::noise_coefficient(r, hm, NoiseForm::anticommutator);
  detail::hermitize_and_normalize(out);
  return DensityMatrix(std::move(out));
}

/// Integrates the deterministic flow of E[rho] with classical RK4. With
/// n_steps = 0 the step is chosen from the operator scale.
inline DensityMatrix evolve_expectation(const DensityMatrix& rho0, const Operator& h,
                                        double sigma, double t,
                                        std::size_t n_steps = 0) {
  if (rho0.dim() != h.dim()) throw std::invalid_argument("dimension mismatch");
  if (t < 0.0) throw std::invalid_argument("t must be nonnegative");
  const Matrix& hm = h.matrix();
  const double range = spectral_range(h);
  if (n_steps == 0) {
    const double rate = range + 0.125 * sigma * sigma * range * range;
    n_steps = static_cast<std::size_t>(std::ceil(t * rate / 0.01)) + 1;
  }
  const double step = t / static_cast<double>(n_steps);
  const double k2 = 0.125 * sigma * sigma;
  auto rhs = [&](const Matrix& r) -> Matrix {
    const Matrix c = hm * r - r * hm;
    return -kI * c - k2 * (hm * c - c * hm);
  };
  Matrix r = rho0.matrix();
  for (std::size_t i = 0; i < n_steps; ++i) {
    const Matrix a = rhs(r);
    const Matrix b = rhs(r + 0.5 * step * a);
    const Matrix c = rhs(r + 0.5 * step * b);
    const Matrix d = rhs(r + step * c);
    r += (step / 6.0) * (a + 2.0 * b + 2.0 * c + d);
  }
  detail::hermitize_and_normalize(r);
  return DensityMatrix(std::move(r));
}

using State = std::variant<StateVector, DensityMatrix>;

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;  // empty unless requested
  std::vector<double> energy;
  std::vector<double> variance;
  /// |<chi|chi> - 1| for state vectors, ||rho^2 - rho||_F for densities.
  std::vector<double> purity_residual;

  std::size_t size() const { return times.size(); }
};

namespace detail {

inline void record(Trajectory& tr, double t, const State& s, const Operator& h,
                   bool store_states) {
  tr.times.push_back(t);
  std::visit(
      [&](const auto& st) {
        tr.energy.push_back(stochred::energy(st, h));
        tr.variance.push_back(stochred::variance(st, h));
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, StateVector>) {
          tr.purity_residual.push_back(st.norm_residual());
        } else {
          tr.purity_residual.push_back(st.purity_residual());
        }
      },
      s);
  if (store_states) tr.states.push_back(s);
}

}  // namespace detail

/// Runs cfg.n_steps steps from `init`, driven by wiener stream `seed`,
/// recording every cfg.record_stride steps (and the final state).
inline Trajectory evolve_trajectory(const State& init, const Operator& h,
                                    const SdeConfig& cfg, std::uint64_t seed,
                                    bool store_states = true) {
  if (!h.is_hermitian()) throw std::invalid_argument("H must be Hermitian");
  if (cfg.record_stride == 0) throw std::invalid_argument("record_stride must be >= 1");
  const double range = spectral_range(h);
  detail::warn_stability(cfg.sigma, range, cfg.dt);
  const double psd_tol = psd_tolerance(cfg.sigma, range, cfg.dt);
  const bool renorm = cfg.scheme == Scheme::euler_renormalized;

  if (const auto* rho = std::get_if<DensityMatrix>(&init);
      rho && cfg.noise_form == NoiseForm::double_commutator &&
      rho->purity_residual() > DensityMatrix::kPurityTolerance) {
    throw std::invalid_argument(
        "the double-commutator noise form is only defined for pure states");
  }

  Trajectory tr;
  WienerStream noise(seed, cfg.dt);
  detail::record(tr, 0.0, init, h, store_states);

  Vector c;
  Matrix r;
  const bool is_vector = std::holds_alternative<StateVector>(init);
  if (is_vector) {
    c = std::get<StateVector>(init).amplitudes();
  } else {
    r = std::get<DensityMatrix>(init).matrix();
  }
  detail::VectorWork work;
  for (std::size_t k = 1; k <= cfg.n_steps; ++k) {
    const double dw = noise.next();
    try {
      if (is_vector) {
        detail::state_step(c, h.matrix(), cfg.sigma, cfg.dt, dw, renorm, work);
      } else {
        r = detail::density_step(r, h.matrix(), cfg.sigma, cfg.dt, dw, cfg.noise_form);
        if (!detail::is_psd(r, psd_tol)) {
          throw NumericalError("density left the positive cone; dt too large");
        }
      }
      if (k % cfg.record_stride == 0 || k == cfg.n_steps) {
        const double t = static_cast<double>(k) * cfg.dt;
        if (is_vector) {
          detail::record(tr, t,
                         renorm ? StateVector(c)
                                : StateVector(c, kUnrenormalizedNormTolerance),
                         h, store_states);
        } else {
          detail::record(tr, t, DensityMatrix(r, Purity::unknown, psd_tol), h,
                         store_states);
        }
      }
    } catch (const std::exception& ex) {
      throw NumericalError("dynamics: step " + std::to_string(k) + ": " + ex.what());
    }
  }
  return tr;
}

/// Header `t,reH_exp,V,purity_residual`.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "t,reH_exp,V,purity_residual\n" << std::setprecision(17);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    os << tr.times[i] << ',' << tr.energy[i] << ',' << tr.variance[i] << ','
       << tr.purity_residual[i] << '\n';
  }
}

}  // namespace stochred
